"""
Medición de tiempos por fases de un experimento
"""

import logging
import time
from typing import Dict, Optional


logger = logging.getLogger(__name__)

# (umbral en segundos, factor, sufijo), de mayor a menor
TIME_UNITS = ((1.0, 1.0, "seg"), (1e-3, 1e3, "ms"), (1e-6, 1e6, "µs"), (0.0, 1e9, "ns"))


class Timer:
    """
    Cronómetro de pared con fases opcionales.

    Dentro de un bloque `with`, lap("fase") cierra la fase en curso; el
    tiempo total queda en `elapsed` al salir.
    """

    def __init__(self, label: str = ""):
        self.label = label
        self.start_time: Optional[float] = None
        self.elapsed: Optional[float] = None
        self.laps: Dict[str, float] = {}
        self._mark: Optional[float] = None

    def start(self):
        self.start_time = self._mark = time.perf_counter()
        self.elapsed = None
        self.laps = {}

    def lap(self, name: str) -> float:
        """Cierra la fase `name` y devuelve su duración"""
        if self._mark is None:
            raise ValueError("El temporizador no ha sido iniciado")
        now = time.perf_counter()
        duration = now - self._mark
        self.laps[name] = self.laps.get(name, 0.0) + duration
        self._mark = now
        return duration

    def stop(self) -> float:
        """Detiene el temporizador y devuelve el tiempo total"""
        if self.start_time is None:
            raise ValueError("El temporizador no ha sido iniciado")
        self.elapsed = time.perf_counter() - self.start_time
        return self.elapsed

    def summary(self) -> str:
        """Texto 'total (fase t, ...)' para la línea de resumen"""
        total = format_time(self.elapsed if self.elapsed is not None else 0.0)
        if not self.laps:
            return total
        parts = ", ".join(f"{name} {format_time(t)}" for name, t in self.laps.items())
        return f"{total} ({parts})"

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
        if self.label:
            logger.info("%s: %s", self.label, self.summary())


def format_time(seconds: float) -> str:
    """
    Formatea un tiempo en segundos con la unidad más legible.

    Returns:
        String formateado (ej: "1.2340 seg", "123.4000 ms")
    """
    for threshold, factor, suffix in TIME_UNITS:
        if seconds >= threshold:
            return f"{seconds * factor:.4f} {suffix}"
    return f"{seconds * 1e9:.4f} ns"


if __name__ == "__main__":
    print("TIMER - Pruebas")
    print("=" * 60)

    with Timer("demo") as timer:
        sum(range(100000))
        timer.lap("suma")
        sorted(range(100000), reverse=True)
        timer.lap("orden")
    print(timer.summary())

    print("\n" + "=" * 60)
