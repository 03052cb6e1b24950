"""
Motor Feynman-Kac para semigrupos de Schrödinger sobre fibrados
Punto de entrada de la línea de comandos (ver ui/cli.py)
"""

import sys
import os

# Añadir el directorio actual al path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ui.cli import main


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\nEjecución interrumpida por el usuario")
        sys.exit(130)
    except SystemExit:
        raise
    except Exception as e:
        print(f"\nError al ejecutar el experimento: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
