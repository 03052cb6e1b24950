"""
Configuración común de pytest: raíz del repositorio en sys.path y la opción
--runslow para los escenarios de aceptación largos.
"""

import os
import sys

import pytest

# Añadir el directorio raíz al path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="ejecuta también las pruebas marcadas como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="requiere --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
