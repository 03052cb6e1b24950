"""
Oráculo espectral sobre discretizaciones 1D/2D.

H = ∇†∇/2 + V se discretiza con diferencias finitas covariantes: el salto
entre nodos vecinos usa el transporte unitario de un paso
L = expm(-A(x_medio)·h), con bloques H_{j,j+1} = -L*/(2h²) y
H_{j+1,j} = -L/(2h²), de modo que H es hermítica para toda conexión. Las
funciones de H (e^{-tH}, cos(t√H)) se aplican por descomposición espectral.

La velocidad de propagación de H = -Δ/2 es 1/√2; la cota de Davies-Gaffney
con exponente -d²/(4t) sigue valiendo (es más débil).
"""

import csv
import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy import linalg, ndimage

from core.bundle import (
    BundleSpec,
    PotentialField,
    abelian_connection,
    constant_potential,
    cosine_potential,
    transport_matrices,
    truncate_potential,
    zero_connection,
    zero_potential,
)
from core.geometry import ManifoldModel, circle, distance, interval_absorbing
from utils.validators import (
    ContractError,
    DomainError,
    PrecisionError,
    validate_count,
    validate_positive,
    validate_rank,
)


logger = logging.getLogger(__name__)

HERMITIAN_EXACT = 1e-12
WAVE_SPEED = 1.0 / math.sqrt(2.0)
MIN_NODES = 8
NEGATIVE_TOL = 1e-10
DG_TIMES = (0.05, 0.1, 0.2, 0.5, 1.0)
DG_SEPARATIONS = (0.25, 0.5, 1.0, 1.5)
DG_ALLOWANCE = 1.05


@dataclass(frozen=True)
class OperatorMatrix:
    """
    Matriz hermítica de H sobre una grilla.

    Los vectores se ordenan por nodo y luego por componente de la fibra
    (índice nodo·k + componente). El producto interno discreto pondera con
    el volumen de celda.
    """
    grid: np.ndarray
    H: np.ndarray
    rank: int
    boundary: str
    spacing: Tuple[float, ...]
    shape: Tuple[int, ...]
    model: ManifoldModel
    potential: np.ndarray
    shift: float = 0.0

    @property
    def nodes(self) -> int:
        return self.grid.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @functools.cached_property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        return linalg.eigh(self.H)

    def norm(self, vec: np.ndarray) -> float:
        """Norma L² discreta"""
        return float(math.sqrt(self.cell_volume) * np.linalg.norm(vec))

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """⟨u, v⟩ = h Σ u_i conj(v_i)"""
        return complex(self.cell_volume * np.sum(u * np.conj(v)))


# ---------------------------------------------------------------------------
# Discretización
# ---------------------------------------------------------------------------

def _grid(model: ManifoldModel, nodes: int):
    if model.variant == "circle":
        h = model.lengths[0] / nodes
        return (np.arange(nodes) * h)[:, None], (h,), (nodes,), "periodic"
    if model.variant == "flat_torus" and model.dim == 2:
        hs = tuple(length / nodes for length in model.lengths)
        axes = [np.arange(nodes) * h for h in hs]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        return pts, hs, (nodes, nodes), "periodic"
    if model.variant == "interval_absorbing":
        h = model.lengths[0] / (nodes + 1)
        return (np.arange(1, nodes + 1) * h)[:, None], (h,), (nodes,), "dirichlet"
    raise DomainError(f"El oráculo sólo admite circle, flat_torus(2D) o interval_absorbing, no {model.label}")


def discretize(model: ManifoldModel, spec: BundleSpec, v: PotentialField, nodes: int,
               shift: float = 0.0) -> OperatorMatrix:
    """
    Discretiza H = ∇†∇/2 + V con saltos covariantes unitarios.

    Args:
        model: circle, flat_torus 2D o interval_absorbing
        spec: Fibrado sobre `model`
        v: Potencial (rango del fibrado)
        nodes: Nodos por eje (>= 8)
        shift: Corrimiento para cos(t√(H + shift))

    Raises:
        DomainError: Si la variedad no es admitida o nodes < 8
        ContractError: Si los rangos no coinciden
    """
    validate_count(nodes, "nodes", MIN_NODES)
    validate_rank(v.rank, spec.rank)
    if spec.base != model:
        raise ContractError("El fibrado no está definido sobre la variedad indicada")
    pts, spacing, shape, boundary = _grid(model, nodes)
    k = spec.rank
    n = pts.shape[0]
    H = np.zeros((n * k, n * k), dtype=complex)
    index = np.arange(n).reshape(shape)

    for axis, h in enumerate(spacing):
        if boundary == "periodic":
            left = index.ravel()
            right = np.roll(index, -1, axis=axis).ravel()
        else:
            left = index.ravel()[:-1]
            right = index.ravel()[1:]
        step = np.zeros((left.size, pts.shape[1]))
        step[:, axis] = h
        links = transport_matrices(spec, pts[left], pts[left] + step)
        for a, b, link in zip(left, right, links):
            H[a * k:(a + 1) * k, b * k:(b + 1) * k] += -np.conj(link).T / (2 * h * h)
            H[b * k:(b + 1) * k, a * k:(a + 1) * k] += -link / (2 * h * h)
        H[np.arange(n * k), np.arange(n * k)] += 1.0 / (h * h)

    values = np.asarray(v.evaluate(pts)[0])
    for j in range(n):
        H[j * k:(j + 1) * k, j * k:(j + 1) * k] += values[j]
    asym = np.max(np.abs(H - np.conj(H.T)))
    if asym > HERMITIAN_EXACT:
        raise ContractError(f"La matriz discreta no es hermítica (asimetría {asym:.2e})")
    H = 0.5 * (H + np.conj(H.T))
    logger.debug("H discreta %s: %d nodos, rango %d", model.label, n, k)
    return OperatorMatrix(pts, H, k, boundary, spacing, shape, model, values, shift)


def with_shift(op: OperatorMatrix) -> OperatorMatrix:
    """Corrimiento -λ_min cuando H tiene espectro negativo"""
    lam_min = float(op.spectrum[0][0])
    shifted = replace(op, shift=max(0.0, -lam_min))
    shifted.__dict__["spectrum"] = op.spectrum
    return shifted


def sample_section(op: OperatorMatrix, f) -> np.ndarray:
    """Vector nodal (nodo·k + componente) de una sección"""
    values = f.eval(op.grid) if hasattr(f, "eval") else np.asarray(f(op.grid))
    values = np.asarray(values, dtype=complex).reshape(op.nodes, op.rank)
    return values.ravel()


def eigenvalues(op: OperatorMatrix, count: Optional[int] = None) -> np.ndarray:
    """Los `count` autovalores menores (todos si count es None)"""
    lam = op.spectrum[0]
    return lam.copy() if count is None else lam[:count].copy()


# ---------------------------------------------------------------------------
# Funciones de H
# ---------------------------------------------------------------------------

def semigroup_apply(op: OperatorMatrix, t: float, f: np.ndarray) -> np.ndarray:
    """e^{-tH} f por descomposición espectral (t = 0 devuelve f)"""
    validate_positive(t, "t", allow_zero=True)
    f = np.asarray(f, dtype=complex)
    if t == 0:
        return f.copy()
    lam, vecs = op.spectrum
    return vecs @ (np.exp(-t * lam) * (np.conj(vecs.T) @ f))


def wave_cosine(op: OperatorMatrix, t: float, f: np.ndarray) -> np.ndarray:
    """
    cos(t√(H + shift)) f por descomposición espectral.

    Raises:
        ContractError: Si H + shift tiene autovalores negativos
    """
    lam, vecs = op.spectrum
    shifted = lam + op.shift
    if shifted[0] < -NEGATIVE_TOL:
        raise ContractError(f"H + shift no es >= 0 (λ_min = {shifted[0]:.3e}); use with_shift")
    f = np.asarray(f, dtype=complex)
    if t == 0:
        return f.copy()
    root = np.sqrt(np.maximum(shifted, 0.0))
    return vecs @ (np.cos(t * root) * (np.conj(vecs.T) @ f))


# ---------------------------------------------------------------------------
# Davies-Gaffney y velocidad finita
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DaviesGaffneyResult:
    worst_ratio: float
    per_time: List[float]
    separation: float
    D: float
    random_ratio: float = 0.0


def _node_distance(op: OperatorMatrix, u1: np.ndarray, u2: np.ndarray) -> float:
    a = op.grid[u1][:, None, :]
    b = op.grid[u2][None, :, :]
    return float(np.min(distance(op.model, a, b)))


def davies_gaffney_check(op: OperatorMatrix, u1: Sequence[int], u2: Sequence[int],
                         t_list: Sequence[float], samples: int = 16,
                         seed: int = 0) -> DaviesGaffneyResult:
    """
    max_t sup |⟨e^{-tH} f1, f2⟩| / (e^{Dt} e^{-d²/(4t)}) sobre f1, f2 unitarias
    soportadas en U1, U2.

    El supremo es la norma espectral del bloque (U2, U1) de e^{-tH} (elección
    extremal); además se barren `samples` pares aleatorios.

    Raises:
        DomainError: Si los conjuntos se solapan o están vacíos
    """
    u1 = np.unique(np.asarray(u1, dtype=int))
    u2 = np.unique(np.asarray(u2, dtype=int))
    if u1.size == 0 or u2.size == 0:
        raise DomainError("Los conjuntos de nodos no pueden estar vacíos")
    if np.intersect1d(u1, u2).size:
        raise DomainError("Los conjuntos U1 y U2 se solapan")
    d = _node_distance(op, u1, u2)
    k = op.rank
    D = max(0.0, -float(np.min(np.linalg.eigvalsh(op.potential))))

    cols = (u1[:, None] * k + np.arange(k)).ravel()
    rows = (u2[:, None] * k + np.arange(k)).ravel()
    lam, vecs = op.spectrum
    rng = np.random.default_rng(seed)
    per_time, random_best = [], 0.0
    for t in t_list:
        validate_positive(t, "t")
        block = (vecs[rows] * np.exp(-t * lam)) @ np.conj(vecs[cols]).T
        bound = math.exp(D * t - d * d / (4 * t))
        per_time.append(float(np.linalg.norm(block, 2)) / bound)
        for _ in range(samples):
            f1 = rng.normal(size=cols.size) + 1j * rng.normal(size=cols.size)
            f2 = rng.normal(size=rows.size) + 1j * rng.normal(size=rows.size)
            value = abs(np.conj(f2) @ block @ f1) / (np.linalg.norm(f1) * np.linalg.norm(f2))
            random_best = max(random_best, float(value) / bound)
    return DaviesGaffneyResult(max(per_time), per_time, d, D, random_best)


def arc_nodes(op: OperatorMatrix, lower: float, upper: float) -> np.ndarray:
    """Nodos de una grilla 1D con coordenada en [lower, upper]"""
    x = op.grid[:, 0]
    return np.nonzero((x >= lower - 1e-12) & (x <= upper + 1e-12))[0]


def standard_davies_gaffney_sweep(nodes: int = 256) -> Tuple[float, List[dict]]:
    """
    Barrido estándar: oráculos circle(2π) e interval_absorbing(π), potenciales
    0, 1 + cos θ y cos θ, cuatro separaciones y cinco tiempos.

    Returns:
        (peor cociente, registros por configuración)
    """
    records = []
    for model in (circle(), interval_absorbing()):
        spec = zero_connection(model)
        potentials = (zero_potential(1, model), cosine_potential(model, 1.0, 1.0),
                      cosine_potential(model, 0.0, 1.0))
        for v in potentials:
            op = discretize(model, spec, v, nodes)
            u1 = arc_nodes(op, 0.2, 0.7)
            for sep in DG_SEPARATIONS:
                u2 = arc_nodes(op, 0.7 + sep, 1.2 + sep)
                result = davies_gaffney_check(op, u1, u2, DG_TIMES, samples=4)
                for t, ratio in zip(DG_TIMES, result.per_time):
                    records.append({"model": model.label, "potential": v.name, "separation": sep,
                                    "d": result.separation, "t": t, "D": result.D, "ratio": ratio})
    worst = max(r["ratio"] for r in records)
    logger.info("Davies-Gaffney: peor cociente %.4f en %d configuraciones", worst, len(records))
    return worst, records


def finite_speed_check(op: OperatorMatrix, f: np.ndarray, t: float, center, radius: float,
                       margin: float) -> float:
    """
    Fracción de ||f||² de cos(t√H) f fuera de la bola de radio
    radius + t/√2 + margin alrededor de `center`.

    Raises:
        PrecisionError: Si margin < 3h (con t > 0)
    """
    h = max(op.spacing)
    validate_positive(t, "t", allow_zero=True)
    if t > 0 and margin < 3 * h:
        raise PrecisionError(f"El margen {margin:g} es menor que 3h = {3 * h:g}")
    u = wave_cosine(op, t, f).reshape(op.nodes, op.rank)
    d = distance(op.model, op.grid, np.atleast_1d(np.asarray(center, dtype=float)))
    outside = d > radius + WAVE_SPEED * t + margin
    total = float(np.sum(np.abs(np.asarray(f)) ** 2))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(u[outside]) ** 2)) / total


# ---------------------------------------------------------------------------
# Molificadores
# ---------------------------------------------------------------------------

def mollifier_kernel(r: float, spacing: Sequence[float]) -> np.ndarray:
    """Bump j(z) = exp(-1/(1 - |z|²)) muestreado en la grilla y normalizado a suma 1"""
    half = [int(math.floor(r / h)) for h in spacing]
    axes = [np.arange(-m, m + 1) * h / r for m, h in zip(half, spacing)]
    z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    z2 = np.sum(z * z, axis=-1)
    inside = z2 < 1.0
    kernel = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - z2, 1.0)), 0.0)
    return kernel / np.sum(kernel)


def mollify(fgrid: np.ndarray, r: float, spacing, periodic: bool = False) -> np.ndarray:
    """
    Convolución discreta con j_r(z) = r^{-m} j(z/r).

    Args:
        fgrid: Valores sobre la grilla (forma de la grilla, complejos o reales)
        r: Radio del molificador (>= 2h)
        spacing: Paso h (escalar) o uno por eje
        periodic: Borde periódico (wrap) o extensión por cero

    Raises:
        PrecisionError: Si r < 2h
    """
    fgrid = np.asarray(fgrid)
    hs = np.broadcast_to(np.atleast_1d(np.asarray(spacing, dtype=float)), (fgrid.ndim,))
    if r < 2 * float(np.max(hs)) * (1 - 1e-12):
        raise PrecisionError(f"El radio {r:g} es menor que 2h = {2 * float(np.max(hs)):g}")
    kernel = mollifier_kernel(r, hs)
    mode = "wrap" if periodic else "constant"
    if np.iscomplexobj(fgrid):
        return (ndimage.convolve(fgrid.real, kernel, mode=mode, cval=0.0)
                + 1j * ndimage.convolve(fgrid.imag, kernel, mode=mode, cval=0.0))
    return ndimage.convolve(fgrid.astype(float), kernel, mode=mode, cval=0.0)


def mollify_vector(op: OperatorMatrix, vec: np.ndarray, r: float) -> np.ndarray:
    """Molifica un vector nodal componente a componente"""
    values = np.asarray(vec, dtype=complex).reshape(op.shape + (op.rank,))
    out = np.stack([mollify(values[..., c], r, op.spacing, op.boundary == "periodic")
                    for c in range(op.rank)], axis=-1)
    return out.reshape(-1)


def graph_norm_convergence(op: OperatorMatrix, f: np.ndarray,
                           radii: Sequence[float]) -> List[Tuple[float, float, float, float]]:
    """
    Tabla (r, ||f_r - f||, ||H f_r - H f||, ||V f_r - V f||) con f_r molificada.
    """
    f = np.asarray(f, dtype=complex)
    k = op.rank
    pot = op.potential

    def apply_v(vec):
        return np.einsum("nij,nj->ni", pot, vec.reshape(op.nodes, k)).ravel()

    hf, vf = op.H @ f, apply_v(f)
    rows = []
    for r in radii:
        fr = mollify_vector(op, f, r)
        rows.append((float(r), op.norm(fr - f), op.norm(op.H @ fr - hf), op.norm(apply_v(fr) - vf)))
    return rows


# ---------------------------------------------------------------------------
# Convergencia y oráculos auxiliares
# ---------------------------------------------------------------------------

def truncation_convergence(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                           levels: Sequence[float], t: float, f, nodes: int = 256,
                           side: str = "upper") -> List[Tuple[float, float]]:
    """
    ||e^{-tH_{V_n}} f - e^{-tH_V} f|| para las aproximaciones monótonas
    V_n = min(V, n) ("upper") o max(-n, V) ("lower").
    """
    reference = discretize(model, spec, v, nodes)
    vec = sample_section(reference, f)
    target = semigroup_apply(reference, t, vec)
    rows = []
    for n in levels:
        op = discretize(model, spec, truncate_potential(v, n, side), nodes)
        rows.append((float(n), reference.norm(semigroup_apply(op, t, vec) - target)))
    return rows


def convergence_ratio(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                      nodes: int = 64) -> float:
    """(λ_n - λ_2n) / (λ_2n - λ_4n) para el menor autovalor (≈ 4 en segundo orden)"""
    lam = [eigenvalues(discretize(model, spec, v, nodes * m), 1)[0] for m in (1, 2, 4)]
    return float((lam[0] - lam[1]) / (lam[1] - lam[2]))


def radial_ground_energy(potential, r_max: float = 40.0, nodes: int = 4000) -> float:
    """
    Menor autovalor de -u''/2 + V(r) u con u(0) = u(r_max) = 0 (onda s),
    por diferencias finitas tridiagonales.
    """
    validate_positive(r_max, "r_max")
    validate_count(nodes, "nodes", MIN_NODES)
    h = r_max / (nodes + 1)
    r = h * np.arange(1, nodes + 1)
    diag = 1.0 / (h * h) + np.asarray(potential(r), dtype=float)
    off = np.full(nodes - 1, -0.5 / (h * h))
    lam = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)
    return float(lam[0])


@dataclass(frozen=True)
class OracleComparison:
    records: List[dict]
    max_deviation: float
    passed: bool
    budget: float
    metadata: dict = field(default_factory=dict)


def oracle_compare(n_paths: int, cfg, beta: float = 0.5, times: Sequence[float] = (0.25, 0.5, 1.0),
                   points: int = 10, nodes: int = 512, bias_budget: float = 0.02) -> OracleComparison:
    """
    Feynman-Kac contra el oráculo en circle(2π) con A = iβ dθ y V = 1 + cos θ,
    f(θ) = 1 + ½cos θ, en `points` nodos equiespaciados.
    """
    from core.feynman_kac import cosine_section, estimate_semigroup

    model = circle()
    spec = abelian_connection(model, beta)
    v = cosine_potential(model, 1.0, 1.0)
    f = cosine_section()
    op = discretize(model, spec, v, nodes)
    vec = sample_section(op, f)
    picks = (np.arange(points) * nodes) // points

    records, passed, worst = [], True, 0.0
    for t in times:
        exact = semigroup_apply(op, t, vec)
        for j in picks:
            x = op.grid[j]
            est = estimate_semigroup(model, spec, v, f, t, x, n_paths, cfg)
            deviation = abs(complex(est.value[0]) - complex(exact[j]))
            allowed = 3 * float(est.stderr[0]) + bias_budget
            ok = deviation <= allowed
            passed &= ok
            worst = max(worst, deviation)
            records.append({"t": t, "x": float(x[0]), "mc": complex(est.value[0]),
                            "stderr": float(est.stderr[0]), "oracle": complex(exact[j]),
                            "deviation": deviation, "pass": bool(ok)})
    logger.info("Oráculo vs Monte Carlo: desviación máxima %.4g (%s)", worst, "PASS" if passed else "FAIL")
    return OracleComparison(records, worst, bool(passed), bias_budget,
                            {"beta": beta, "nodes": nodes, **cfg.metadata})


# ---------------------------------------------------------------------------
# Volcados
# ---------------------------------------------------------------------------

def dump_operator_csv(op: OperatorMatrix, stream: TextIO, tol: float = 0.0) -> int:
    """Escribe las entradas no nulas de H como filas i,j,re,im; devuelve las filas"""
    writer = csv.writer(stream)
    writer.writerow(["i", "j", "re", "im"])
    rows = 0
    for i, j in zip(*np.nonzero(np.abs(op.H) > tol)):
        value = op.H[i, j]
        writer.writerow([int(i), int(j), repr(float(value.real)), repr(float(value.imag))])
        rows += 1
    return rows


def dump_vector_csv(op: OperatorMatrix, vec: np.ndarray, stream: TextIO) -> int:
    """Escribe un vector nodal como filas (coordenadas, re_c, im_c por componente)"""
    writer = csv.writer(stream)
    coords = [f"x{a}" for a in range(op.grid.shape[1])]
    comps = [f"{part}{c}" for c in range(op.rank) for part in ("re", "im")]
    writer.writerow(coords + comps)
    values = np.asarray(vec, dtype=complex).reshape(op.nodes, op.rank)
    for x, row in zip(op.grid, values):
        parts = []
        for z in row:
            parts += [repr(float(z.real)), repr(float(z.imag))]
        writer.writerow([repr(float(c)) for c in x] + parts)
    return op.nodes


def eigen_table_json(op: OperatorMatrix, count: int = 10) -> dict:
    """Tabla de autovalores como registro JSON"""
    lam = eigenvalues(op, count)
    return {
        "model": op.model.label, "rank": op.rank, "nodes": op.nodes,
        "boundary": op.boundary, "spacing": list(op.spacing), "shift": op.shift,
        "eigenvalues": [float(x) for x in lam],
    }


if __name__ == "__main__":
    print("SPECTRAL ORACLE - Pruebas")
    print("=" * 60)

    model = circle()

    print("\n Prueba 1: Espectro de -Δ/2 en el círculo")
    op = discretize(model, zero_connection(model), zero_potential(1, model), 256)
    print(f"λ = {np.round(eigenvalues(op, 5), 4)} (esperado 0, .5, .5, 2, 2)")

    print("\n Prueba 2: Flujo espectral con β = 0.25")
    op = discretize(model, abelian_connection(model, 0.25), zero_potential(1, model), 256)
    print(f"λ = {np.round(eigenvalues(op, 3), 4)} (esperado 0.03125, 0.28125, 0.78125)")

    print("\n Prueba 3: Hidrógeno radial")
    print(f"E0 = {radial_ground_energy(lambda r: -1.0 / r):.5f} (esperado -0.5)")

    print("\n Prueba 4: Davies-Gaffney (barrido estándar)")
    worst, _ = standard_davies_gaffney_sweep(128)
    print(f"Peor cociente: {worst:.4f}")

    print("\n" + "=" * 60)
