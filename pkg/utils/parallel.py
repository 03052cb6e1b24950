"""
Ejecución por lotes de caminos con reducción determinista

Los índices de camino 0..N-1 se cortan en lotes de tamaño fijo; los cortes
dependen sólo de N y del tamaño de lote, nunca del número de workers. Los
resultados por camino se concatenan en orden de índice antes de reducir, de
modo que la salida es idéntica bit a bit para cualquier número de workers.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np


logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 4096
WORKERS_ENV = "FKS_WORKERS"


def default_workers() -> int:
    """Número de workers: variable FKS_WORKERS o 1"""
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning("%s=%r no es un entero; se usa 1 worker", WORKERS_ENV, value)
    return 1


def split_batches(n_items: int, batch_size: int = DEFAULT_BATCH_SIZE) -> List[np.ndarray]:
    """
    Corta los índices 0..n_items-1 en lotes consecutivos.

    Args:
        n_items: Cantidad total de caminos
        batch_size: Tamaño de cada lote (el último puede ser menor)

    Returns:
        Lista de arreglos de índices
    """
    batch_size = max(1, int(batch_size))
    return [np.arange(start, min(start + batch_size, n_items))
            for start in range(0, n_items, batch_size)]


def map_batches(func: Callable[[np.ndarray], np.ndarray], n_items: int,
                workers: Optional[int] = None,
                batch_size: int = DEFAULT_BATCH_SIZE) -> np.ndarray:
    """
    Evalúa `func` sobre cada lote de índices y concatena en orden de índice.

    Args:
        func: Función lote -> arreglo con primera dimensión = tamaño del lote
        n_items: Cantidad total de caminos
        workers: Número de hilos (None = default_workers())
        batch_size: Tamaño de lote

    Returns:
        Arreglo concatenado con n_items filas (o una tupla de arreglos si
        `func` devuelve tuplas)
    """
    batches = split_batches(n_items, batch_size)
    workers = default_workers() if workers is None else max(1, int(workers))
    logger.debug("%d lotes de hasta %d caminos con %d workers",
                 len(batches), batch_size, workers)

    if workers == 1 or len(batches) == 1:
        results = [func(batch) for batch in batches]
    else:
        # map conserva el orden de entrada
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(func, batches))
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts, axis=0) for parts in zip(*results))
    return np.concatenate(results, axis=0)


def mean_and_stderr(samples: np.ndarray):
    """
    Media y error estándar por componente, en orden fijo de caminos.

    Para componentes complejas el error estándar combina parte real e
    imaginaria: sqrt(var(re) + var(im)) / sqrt(N).

    Args:
        samples: Arreglo (N, ...) de contribuciones por camino

    Returns:
        Tupla (media, error estándar)
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = np.sum(samples, axis=0) / n
    if n < 2:
        return mean, np.zeros(mean.shape, dtype=float)
    dev = samples - mean
    var = np.sum(np.abs(dev) ** 2, axis=0) / (n - 1)
    return mean, np.sqrt(var / n)
