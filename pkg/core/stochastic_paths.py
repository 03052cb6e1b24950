"""
Caminatas aleatorias geodésicas (movimiento browniano con generador Δ/2).

Cada camino j usa su propio flujo aleatorio derivado de (semilla, j) con un
generador basado en contador (Philox), de modo que un camino muestreado solo
o dentro de cualquier lote produce exactamente los mismos puntos.

El motor vectorizado `walk_batch` avanza un lote de caminos paso a paso y
entrega el estado en cada nodo; los estimadores consumen ese flujo sin
guardar los caminos completos.
"""

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterator, List, Optional, Sequence

import numpy as np

from core.bundle import BundleSpec, polar_unitary, transport_matrices, transport_segment
from core.geometry import ManifoldModel, as_points, exp_map, validate_points
from utils.parallel import DEFAULT_BATCH_SIZE, map_batches
from utils.validators import (
    ContractError,
    DomainError,
    validate_count,
    validate_positive,
)


logger = logging.getLogger(__name__)

SCHEMES = ("geodesic_walk",)
STEP_CHUNK = 256
SEED_MASK = (1 << 64) - 1
DUMP_HEADER = struct.Struct("<QqdII")


@dataclass(frozen=True)
class SamplerConfig:
    """
    Parámetros del muestreador.

    Args:
        dt: Paso de tiempo (> 0)
        seed: Semilla de 64 bits
        scheme: Esquema de paso (sólo "geodesic_walk")
        workers: Hilos para los lotes (None = FKS_WORKERS o 1)
        batch_size: Caminos por lote
    """
    dt: float = 1e-3
    seed: int = 0
    scheme: str = "geodesic_walk"
    workers: Optional[int] = None
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        validate_positive(self.dt, "dt")
        validate_count(self.batch_size, "batch_size", 1)
        if self.scheme not in SCHEMES:
            raise DomainError(f"Esquema desconocido '{self.scheme}'. Disponibles: {SCHEMES}")

    @property
    def metadata(self) -> dict:
        return {"scheme": self.scheme, "dt": self.dt, "seed": self.seed}


@dataclass(frozen=True)
class PathSample:
    """
    Camino muestreado sobre la grilla 0 = t_0 < ... < t_n = t.

    `transports[i]` es el transporte acumulado de t_0 a t_i (presente sólo
    cuando se adjunta un fibrado). Si `alive` es False, los datos posteriores
    a `exit_index` no se usan.
    """
    times: np.ndarray
    points: np.ndarray
    alive: bool
    exit_index: Optional[int]
    model: ManifoldModel
    transports: Optional[np.ndarray] = None
    seed: int = 0
    path_index: int = 0
    dt: float = 1e-3

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def last_index(self) -> int:
        """Último nodo utilizable"""
        return self.steps if self.exit_index is None else self.exit_index


@dataclass
class WalkState:
    """Estado de un lote de caminos en el nodo `index`"""
    index: int
    time: float
    points: np.ndarray
    alive: np.ndarray
    exit_index: np.ndarray
    transports: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SurvivalEstimate:
    value: float
    stderr: float
    paths: int
    metadata: dict = field(default_factory=dict)


def time_grid(t: float, dt: float) -> np.ndarray:
    """
    Grilla 0 = t_0 < ... < t_n = t de paso dt (el último paso puede ser menor).

    Raises:
        DomainError: Si t <= 0 o dt <= 0
    """
    validate_positive(t, "t")
    validate_positive(dt, "dt")
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    times = dt * np.arange(n + 1, dtype=float)
    times[-1] = t
    return times


def path_rng(seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Generador del camino `path_index` (y sub-flujo `stream`), independiente del lote"""
    seq = np.random.SeedSequence(entropy=int(seed) & SEED_MASK,
                                 spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(seq))


def walk_batch(model: ManifoldModel, x0, t: float, cfg: SamplerConfig,
               indices: Sequence[int], spec: Optional[BundleSpec] = None) -> Iterator[WalkState]:
    """
    Avanza un lote de caminatas geodésicas y entrega el estado en cada nodo.

    En cada paso se sortea un vector tangente gaussiano centrado de
    covarianza h·I en el marco de tangent_frame y se aplica exp_map. En el
    intervalo absorbente un camino muere en el primer nodo fuera de (0, L) y
    queda congelado desde ahí.

    Args:
        model: Variedad
        x0: Punto inicial común (chart_dim,) o uno por camino (B, chart_dim)
        t: Tiempo final
        cfg: Configuración del muestreador
        indices: Índices globales de los caminos del lote
        spec: Fibrado opcional; si se da, se acumulan los transportes

    Yields:
        WalkState en los nodos 0..n (los arreglos son nuevos en cada nodo)
    """
    if spec is not None and spec.base != model:
        raise ContractError("El fibrado no está definido sobre la variedad del camino")
    times = time_grid(t, cfg.dt)
    n = len(times) - 1
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    size = idx.size
    start = validate_points(model, x0)
    if model.variant == "interval_absorbing" and np.any((start <= 0) | (start >= model.lengths[0])):
        raise DomainError("El punto inicial debe estar en el interior del intervalo")
    points = np.array(np.broadcast_to(start, (size, model.chart_dim)), dtype=float)
    alive = np.ones(size, dtype=bool)
    exit_index = np.full(size, -1, dtype=np.int64)
    frames = None
    if spec is not None:
        frames = np.broadcast_to(np.eye(spec.rank, dtype=complex), (size, spec.rank, spec.rank)).copy()
    rngs = [path_rng(cfg.seed, j) for j in idx]
    absorbing = model.variant == "interval_absorbing"
    length = model.lengths[0] if absorbing else None

    yield WalkState(0, float(times[0]), points, alive.copy(), exit_index.copy(),
                    None if frames is None else frames.copy())

    noise = None
    for i in range(1, n + 1):
        offset = (i - 1) % STEP_CHUNK
        if offset == 0:
            rows = min(STEP_CHUNK, n - (i - 1))
            # bloques de tamaño fijo por camino: el flujo no depende del lote
            noise = np.stack([rng.standard_normal((rows, model.dim)) for rng in rngs], axis=1)
        h = times[i] - times[i - 1]
        moved = exp_map(model, points, math.sqrt(h) * noise[offset])
        was_alive = alive.copy()
        if absorbing:
            out = (moved[:, 0] <= 0.0) | (moved[:, 0] >= length)
            died = alive & out
            exit_index[died] = i
            alive &= ~out
            moved = np.clip(moved, 0.0, length)
        moved = np.where(was_alive[:, None], moved, points)
        if frames is not None and not spec.flat:
            step = transport_matrices(spec, points, moved)
            if spec.rank == 1:
                updated = step * frames
                updated = updated / np.abs(updated)
            else:
                updated = polar_unitary(step @ frames)
            frames = np.where(was_alive[:, None, None], updated, frames)
        points = moved
        yield WalkState(i, float(times[i]), points, alive.copy(), exit_index.copy(),
                        None if frames is None else frames.copy())


def final_state(model: ManifoldModel, x0, t: float, cfg: SamplerConfig,
                indices: Sequence[int], spec: Optional[BundleSpec] = None) -> WalkState:
    """Estado del lote en el tiempo final"""
    state = None
    for state in walk_batch(model, x0, t, cfg, indices, spec):
        pass
    return state


def sample_path(model: ManifoldModel, x, t: float, cfg: SamplerConfig,
                path_index: int) -> PathSample:
    """
    Muestrea el camino `path_index` (determinista dado (semilla, índice)).

    Returns:
        PathSample sin transportes
    """
    nodes, times = [], []
    state = None
    for state in walk_batch(model, x, t, cfg, [path_index]):
        nodes.append(state.points[0])
        times.append(state.time)
    exit_index = int(state.exit_index[0])
    return PathSample(
        times=np.asarray(times), points=np.stack(nodes), alive=bool(state.alive[0]),
        exit_index=None if exit_index < 0 else exit_index, model=model,
        seed=cfg.seed, path_index=int(path_index), dt=cfg.dt,
    )


def sample_paths(model: ManifoldModel, x, t: float, cfg: SamplerConfig, count: int,
                 first_index: int = 0) -> List[PathSample]:
    """Muestrea `count` caminos consecutivos (para volcados y gráficos)"""
    validate_count(count, "count", 1)
    return [sample_path(model, x, t, cfg, j) for j in range(first_index, first_index + count)]


def attach_transport(path: PathSample, spec: BundleSpec) -> PathSample:
    """
    Llena los transportes componiendo transport_segment nodo a nodo.

    Raises:
        ContractError: Si el fibrado no está sobre la variedad del camino
    """
    if spec.base != path.model:
        raise ContractError("El fibrado no está definido sobre la variedad del camino")
    k = spec.rank
    transports = np.empty((len(path.times), k, k), dtype=complex)
    transports[0] = np.eye(k)
    last = path.last_index
    for i in range(1, len(path.times)):
        if i > last or spec.flat:
            transports[i] = transports[i - 1]
        else:
            transports[i] = transport_segment(spec, path.points[i - 1], path.points[i],
                                              transports[i - 1])
    return replace(path, transports=transports)


def slice_path(path: PathSample, start: int, stop: Optional[int] = None) -> PathSample:
    """
    Sub-camino entre los nodos start..stop con los transportes re-basados:
    τ'_i = τ_i τ_start*, de modo que τ'_start = 1.
    """
    stop = path.steps if stop is None else stop
    if not 0 <= start < stop <= path.steps:
        raise DomainError(f"Rango de nodos inválido [{start}, {stop}]")
    transports = None
    if path.transports is not None:
        base = np.conj(path.transports[start]).T
        transports = path.transports[start:stop + 1] @ base
    exit_index = path.exit_index
    if exit_index is not None:
        exit_index = exit_index - start if exit_index <= stop else None
    return replace(path, times=path.times[start:stop + 1] - path.times[start],
                   points=path.points[start:stop + 1], transports=transports,
                   exit_index=exit_index, alive=path.alive or exit_index is None)


def survival_probability(model: ManifoldModel, x, t: float, n_paths: int,
                         cfg: SamplerConfig) -> SurvivalEstimate:
    """
    Estimación Monte Carlo de P(t < ζ(x)) con error estándar binomial.

    Raises:
        DomainError: Si t <= 0 o N < 100
    """
    validate_positive(t, "t")
    validate_count(n_paths, "N", 100)
    if model.complete:
        return SurvivalEstimate(1.0, 0.0, n_paths, cfg.metadata)

    alive = map_batches(lambda batch: final_state(model, x, t, cfg, batch).alive,
                        n_paths, cfg.workers, cfg.batch_size)
    p = float(np.count_nonzero(alive)) / n_paths
    stderr = math.sqrt(p * (1.0 - p) / n_paths)
    logger.info("Supervivencia en t=%g: %.6f ± %.6f (%d caminos)", t, p, stderr, n_paths)
    return SurvivalEstimate(p, stderr, n_paths, cfg.metadata)


def dump_paths(paths: Sequence[PathSample], stream: BinaryIO) -> int:
    """
    Volcado binario little-endian: por camino un encabezado <Q q d I I
    (semilla, índice, dt, nodos, dimensión de carta) seguido de las
    coordenadas de los nodos como <f8.

    Returns:
        Bytes escritos
    """
    written = 0
    for path in paths:
        coords = np.ascontiguousarray(path.points, dtype="<f8")
        header = DUMP_HEADER.pack(int(path.seed) & SEED_MASK, int(path.path_index),
                                  float(path.dt), coords.shape[0], coords.shape[1])
        stream.write(header)
        stream.write(coords.tobytes())
        written += len(header) + coords.nbytes
    return written


def load_paths(stream: BinaryIO, model: ManifoldModel) -> List[PathSample]:
    """
    Lee un volcado de dump_paths.

    El formato no guarda la vida del camino ni el último paso: los tiempos se
    reconstruyen como dt·i y los caminos se marcan vivos.
    """
    paths = []
    while True:
        raw = stream.read(DUMP_HEADER.size)
        if not raw:
            break
        if len(raw) != DUMP_HEADER.size:
            raise DomainError("Volcado de caminos truncado (encabezado incompleto)")
        seed, index, dt, count, dim = DUMP_HEADER.unpack(raw)
        if dim != model.chart_dim:
            raise ContractError(f"El volcado tiene dimensión {dim}, la variedad {model.chart_dim}")
        body = stream.read(8 * count * dim)
        if len(body) != 8 * count * dim:
            raise DomainError("Volcado de caminos truncado (coordenadas incompletas)")
        points = np.frombuffer(body, dtype="<f8").reshape(count, dim).astype(float)
        paths.append(PathSample(times=dt * np.arange(count, dtype=float), points=points,
                                alive=True, exit_index=None, model=model,
                                seed=seed, path_index=index, dt=dt))
    return paths


if __name__ == "__main__":
    print("STOCHASTIC PATHS - Pruebas")
    print("=" * 60)

    from core.geometry import euclidean, interval_absorbing, survival_exact

    cfg = SamplerConfig(dt=1e-2, seed=7)

    print("\n Prueba 1: Varianza de B_1 en ℝ")
    state = final_state(euclidean(1), 0.0, 1.0, cfg, np.arange(20000))
    print(f"Media: {state.points.mean():.4f}  Varianza: {state.points.var():.4f} (esperado 1)")

    print("\n Prueba 2: Supervivencia en (0, π)")
    model = interval_absorbing()
    est = survival_probability(model, math.pi / 2, 1.0, 20000, cfg)
    exact = float(survival_exact(model, math.pi / 2, 1.0))
    print(f"Estimación: {est.value:.4f} ± {est.stderr:.4f}  Serie: {exact:.4f}")

    print("\n Prueba 3: Determinismo por índice")
    alone = sample_path(euclidean(2), [0, 0], 0.5, cfg, 3)
    batch = final_state(euclidean(2), [0, 0], 0.5, cfg, [1, 2, 3, 4])
    print(f"Idéntico: {np.array_equal(alone.points[-1], batch.points[2])}")

    print("\n" + "=" * 60)
