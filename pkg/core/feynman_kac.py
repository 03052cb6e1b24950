"""
Estimador de Feynman-Kac para semigrupos de Schrödinger en fibrados.

    (e^{-tH_V} f)(x) = E[ 1_{t<ζ(x)} Y_t τ_t* f(B_t(x)) ]

Cada camino aporta 1_{vivo}·Y_t·τ_t*·f(B_t); los caminos absorbidos aportan
exactamente 0. Las contribuciones por camino se concatenan en orden de
índice antes de reducir, así el resultado no depende del número de workers.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from core.bundle import (
    BundleSpec,
    PotentialField,
    coulomb_potential,
    dagger,
    magnetic_connection,
    pauli_coulomb_potential,
    scalar_bounds_along,
    weight_field,
    zero_connection,
)
from core.geometry import (
    ManifoldModel,
    as_points,
    chart_displacement,
    euclidean,
    heat_kernel,
    volume_density,
)
from core.holonomy import integrate_batch
from core.stochastic_paths import SamplerConfig, path_rng, walk_batch
from utils.parallel import map_batches, mean_and_stderr
from utils.validators import (
    ContractError,
    DomainError,
    FitError,
    validate_count,
    validate_positive,
    validate_rank,
    validate_time_grid,
)


logger = logging.getLogger(__name__)

MIN_PATHS = 100
SAMPLER_NODES = {1: 4096, 2: 256, 3: 64}
UNIFORM_MIX = 0.05
EXP_OVERFLOW = 700.0
CLAMP_WARNING = 0.01
HYDROGEN_KAPPA = 2 * math.pi


# ---------------------------------------------------------------------------
# Secciones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionField:
    """
    Sección f: M -> C^k, con soporte declarado como caja de carta.

    Args:
        rank: Rango k
        fn: puntos (..., c) -> valores (..., k)
        lower, upper: Caja de carta que contiene el soporte (None = sin declarar)
        norm: ||f|| precalculada (opcional)
        sup: ||f||∞ precalculada (opcional)
    """
    rank: int
    fn: Callable[[np.ndarray], np.ndarray]
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    name: str = "f"
    norm: Optional[float] = None
    sup: Optional[float] = None

    def eval(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        values = np.asarray(self.fn(pts), dtype=complex)
        return np.broadcast_to(values, pts.shape[:-1] + (self.rank,))

    @property
    def has_support(self) -> bool:
        return self.lower is not None and self.upper is not None


def _direction(direction, rank: int) -> np.ndarray:
    if direction is None:
        u = np.zeros(rank, dtype=complex)
        u[0] = 1.0
        return u
    u = np.asarray(direction, dtype=complex)
    if u.shape != (rank,):
        raise ContractError(f"La dirección debe tener {rank} componentes")
    return u / np.linalg.norm(u)


def _wrap_box(model: ManifoldModel, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lleva una caja de soporte a la carta [0, L) de una variedad periódica.

    La caja se traslada por múltiplos de L; los ejes en los que aún cruza la
    costura se extienden a [0, L].
    """
    lengths = np.asarray(model.lengths, dtype=float)
    if lo.size != lengths.size:
        return lo, hi
    shift = np.floor(lo / lengths) * lengths
    lo, hi = lo - shift, hi - shift
    seam = hi > lengths
    return np.where(seam, 0.0, lo), np.where(seam, lengths, hi)


def _box(center, half_width,
         model: Optional[ManifoldModel] = None) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    lo, hi = c - half_width, c + half_width
    if model is not None and model.periodic:
        lo, hi = _wrap_box(model, lo, hi)
    return tuple(lo), tuple(hi)


def constant_section(value: float = 1.0, rank: int = 1, direction=None,
                     lower=None, upper=None) -> SectionField:
    u = _direction(direction, rank)
    return SectionField(rank, lambda x: value * np.ones(x.shape[:-1])[..., None] * u,
                        lower=lower, upper=upper, name=f"const({value:g})", sup=abs(value))


def gaussian_section(center, width: float = 1.0, amplitude: float = 1.0, rank: int = 1,
                     direction=None, model: Optional[ManifoldModel] = None,
                     cutoff: float = 8.0) -> SectionField:
    """f(x) = amplitude · exp(-|x - c|² / (2 width²)) · u"""
    validate_positive(width, "width")
    u = _direction(direction, rank)
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def fn(x):
        dx = chart_displacement(model, c, x) if model is not None else x - c
        return amplitude * np.exp(-np.sum(dx * dx, axis=-1) / (2 * width ** 2))[..., None] * u

    lower, upper = _box(c, cutoff * width, model)
    norm = abs(amplitude) * (math.pi * width ** 2) ** (c.size / 4)
    return SectionField(rank, fn, lower, upper, name="gaussian", norm=norm, sup=abs(amplitude))


def oscillator_ground_state() -> SectionField:
    """Estado fundamental del oscilador armónico 1D: π^{-1/4} e^{-x²/2}"""
    return gaussian_section([0.0], 1.0, math.pi ** -0.25)


def exponential_section(center, decay: float = 1.0, rank: int = 1, direction=None,
                        cutoff: float = 12.0) -> SectionField:
    """f(x) = exp(-decay·|x - c|) · u (estado 1s del hidrógeno con decay = 1)"""
    validate_positive(decay, "decay")
    u = _direction(direction, rank)
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def fn(x):
        return np.exp(-decay * np.linalg.norm(x - c, axis=-1))[..., None] * u

    lower, upper = _box(c, cutoff / decay)
    return SectionField(rank, fn, lower, upper, name="exponential", sup=1.0)


def bump_section(center, radius: float, rank: int = 1, direction=None,
                 model: Optional[ManifoldModel] = None) -> SectionField:
    """f(x) = exp(-1/(1 - |z|²)) para |z| < 1, z = (x - c)/radius"""
    validate_positive(radius, "radius")
    u = _direction(direction, rank)
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def fn(x):
        dx = chart_displacement(model, c, x) if model is not None else x - c
        z2 = np.sum(dx * dx, axis=-1) / radius ** 2
        inside = z2 < 1.0
        vals = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - z2, 1.0)), 0.0)
        return vals[..., None] * u

    lower, upper = _box(c, radius, model)
    return SectionField(rank, fn, lower, upper, name="bump", sup=math.exp(-1.0))


def indicator_section(lower, upper, rank: int = 1, direction=None) -> SectionField:
    """Indicador de la caja [lower, upper]"""
    u = _direction(direction, rank)
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if np.any(hi <= lo):
        raise DomainError("La caja del indicador tiene medida nula")

    def fn(x):
        inside = np.all((x >= lo) & (x <= hi), axis=-1)
        return inside.astype(float)[..., None] * u

    return SectionField(rank, fn, tuple(lo), tuple(hi), name="indicator",
                        norm=math.sqrt(float(np.prod(hi - lo))), sup=1.0)


def cosine_section(length: float = 2 * math.pi, mode: int = 1, offset: float = 1.0,
                   amplitude: float = 0.5) -> SectionField:
    """f(θ) = offset + amplitude·cos(2π·mode·θ/L) en el círculo"""
    return SectionField(
        1, lambda x: (offset + amplitude * np.cos(2 * math.pi * mode * x[..., 0] / length))[..., None],
        (0.0,), (length,), name="cosine", sup=abs(offset) + abs(amplitude),
    )


# ---------------------------------------------------------------------------
# Resultados
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemigroupEstimate:
    value: np.ndarray
    stderr: np.ndarray
    paths_used: int
    clamped_fraction: float
    metadata: dict = field(default_factory=dict)
    all_absorbed: bool = False
    alive_fraction: float = 1.0


@dataclass(frozen=True)
class MatrixElementEstimate:
    value: complex
    stderr: float
    paths_used: int
    sampling: str
    normalization: float
    clamped_fraction: float = 0.0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CertificateReport:
    value: float
    per_point: List[float]
    moments: List[float]
    kernel_terms: List[float]
    finite: bool = True
    failing_point: Optional[int] = None
    failing_path: Optional[int] = None


@dataclass(frozen=True)
class EnergyEstimate:
    energy: float
    stderr: float
    times: List[float]
    log_values: List[float]
    log_stderr: List[float]
    window: int
    clamped_fraction: float = 0.0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DominationReport:
    vector_abs: np.ndarray
    scalar: float
    stderr: np.ndarray
    passed: bool


@dataclass(frozen=True)
class VarianceGate:
    variance_n: float
    variance_2n: float
    ratio: float
    passed: bool


@dataclass(frozen=True)
class HydrogenReport:
    energy: EnergyEstimate
    kato: object
    rank: int
    field_b: float
    kappa: float


# ---------------------------------------------------------------------------
# Contribuciones por camino
# ---------------------------------------------------------------------------

def _check_inputs(spec: BundleSpec, v: PotentialField, f: SectionField, model: ManifoldModel):
    if spec.base != model:
        raise ContractError("El fibrado no está definido sobre la variedad indicada")
    validate_rank(v.rank, spec.rank)
    validate_rank(f.rank, spec.rank)


def path_contributions(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                       f: SectionField, t: float, starts, n_paths: int, cfg: SamplerConfig):
    """
    Contribuciones 1_{vivo}·Y_t·τ_t*·f(B_t) camino a camino.

    Args:
        starts: Punto inicial común o función lote -> puntos iniciales (B, c)

    Returns:
        Tupla (contribuciones (N, k), vivos (N,), nodos recortados (N,),
        nodos (N,), ∫v2 (N,), puntos iniciales (N, c))
    """
    def run(batch):
        x0 = starts(batch) if callable(starts) else as_points(model, starts)
        walk = walk_batch(model, x0, t, cfg, batch, spec)
        hol = integrate_batch(walk, v, spec.rank, batch)
        final = hol.final
        fvals = f.eval(final.points)
        contrib = np.einsum("bij,bjk,bk->bi", hol.Y, dagger(final.transports), fvals)
        contrib = np.where(final.alive[:, None], contrib, 0.0)
        x0 = np.broadcast_to(x0, (batch.size, model.chart_dim))
        return contrib, final.alive, hol.clamped, hol.nodes, hol.certificate, np.array(x0)

    return map_batches(run, n_paths, cfg.workers, cfg.batch_size)


def _clamped_fraction(clamped: np.ndarray, nodes: np.ndarray) -> float:
    fraction = float(np.sum(clamped)) / max(float(np.sum(nodes)), 1.0)
    if fraction > CLAMP_WARNING:
        logger.warning("Fracción de nodos recortados %.3g supera %.0f%%", fraction, 100 * CLAMP_WARNING)
    return fraction


def estimate_semigroup(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                       f: SectionField, t: float, x, n_paths: int,
                       cfg: SamplerConfig) -> SemigroupEstimate:
    """
    Estima (e^{-tH_V} f)(x) promediando N caminos independientes.

    Returns:
        SemigroupEstimate con media y error estándar por componente

    Raises:
        DomainError: Si t <= 0 o N < 100
        ContractError: Si los rangos o la variedad no coinciden
    """
    validate_positive(t, "t")
    validate_count(n_paths, "N", MIN_PATHS)
    _check_inputs(spec, v, f, model)
    contrib, alive, clamped, nodes, _, _ = path_contributions(model, spec, v, f, t, x, n_paths, cfg)
    mean, stderr = mean_and_stderr(contrib)
    alive_fraction = float(np.count_nonzero(alive)) / n_paths
    all_absorbed = alive_fraction == 0.0
    if all_absorbed:
        logger.warning("Todos los caminos fueron absorbidos antes de t=%g", t)
    point = np.atleast_1d(np.asarray(x, dtype=float)).tolist()
    logger.info("e^{-tH}f(%s) en t=%g: %s ± %s", point, t,
                np.array2string(np.real_if_close(mean), precision=6),
                np.array2string(stderr, precision=2))
    return SemigroupEstimate(
        value=mean, stderr=stderr, paths_used=n_paths,
        clamped_fraction=_clamped_fraction(clamped, nodes),
        metadata={"t": t, "x": point, **cfg.metadata},
        all_absorbed=all_absorbed, alive_fraction=alive_fraction,
    )


# ---------------------------------------------------------------------------
# Elementos de matriz
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _GridSampler:
    """Muestreo por celdas de una grilla con densidad constante por celda"""
    lower: np.ndarray
    cell: np.ndarray
    shape: Tuple[int, ...]
    cdf: np.ndarray
    density: np.ndarray

    def draw(self, cfg: SamplerConfig, batch: np.ndarray) -> np.ndarray:
        dim = self.lower.size
        uniforms = np.stack([path_rng(cfg.seed, j, stream=1).random(dim + 1) for j in batch])
        flat = np.minimum(np.searchsorted(self.cdf, uniforms[:, 0], side="right"), self.cdf.size - 1)
        cells = np.stack(np.unravel_index(flat, self.shape), axis=-1)
        return self.lower + (cells + uniforms[:, 1:]) * self.cell

    def pdf(self, points: np.ndarray) -> np.ndarray:
        idx = np.floor((points - self.lower) / self.cell).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return self.density[tuple(idx.T)]


def _support_grid(model: ManifoldModel, f: SectionField):
    if not f.has_support:
        raise DomainError(f"La sección {f.name} no declara soporte")
    if model.variant == "sphere2":
        raise DomainError("Los elementos de matriz requieren una carta plana o el semiespacio")
    lo = np.asarray(f.lower, dtype=float)
    hi = np.asarray(f.upper, dtype=float)
    if model.variant == "interval_absorbing":
        lo, hi = np.maximum(lo, 0.0), np.minimum(hi, model.lengths[0])
    elif model.periodic:
        lo, hi = _wrap_box(model, lo, hi)
    elif model.variant == "hyperbolic3":
        lo[2] = max(lo[2], 1e-6)
    if lo.size != model.chart_dim or np.any(hi <= lo):
        raise DomainError("El soporte declarado tiene medida nula")
    nodes = SAMPLER_NODES[model.chart_dim]
    cell = (hi - lo) / nodes
    axes = [lo[i] + cell[i] * (np.arange(nodes) + 0.5) for i in range(lo.size)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return lo, hi, cell, centers


def _density_weight(model: ManifoldModel, f: SectionField, centers: np.ndarray) -> np.ndarray:
    values = f.eval(centers)
    return np.sum(np.abs(values) ** 2, axis=-1) * volume_density(model, centers)


def support_normalization(model: ManifoldModel, f: SectionField) -> float:
    """Z = ∫ |f|² vol sobre la caja de soporte (regla del punto medio)"""
    lo, hi, cell, centers = _support_grid(model, f)
    z = float(np.sum(_density_weight(model, f, centers)) * np.prod(cell))
    if not z > 0:
        raise DomainError(f"La sección {f.name} se anula en su soporte declarado")
    return z


def _build_sampler(model: ManifoldModel, f: SectionField, sampling: str):
    lo, hi, cell, centers = _support_grid(model, f)
    cell_volume = float(np.prod(cell))
    uniform = np.full(centers.shape[:-1], 1.0 / centers[..., 0].size)
    if sampling == "uniform":
        mass = uniform
    elif sampling == "importance":
        weight = _density_weight(model, f, centers)
        if not np.sum(weight) > 0:
            raise DomainError(f"La sección {f.name} se anula en su soporte declarado")
        mass = (1 - UNIFORM_MIX) * weight / np.sum(weight) + UNIFORM_MIX * uniform
    else:
        raise DomainError(f"Muestreo desconocido '{sampling}' (importance | uniform)")
    cdf = np.cumsum(mass.ravel())
    cdf /= cdf[-1]
    return _GridSampler(lo, cell, mass.shape, cdf, mass / cell_volume)


def estimate_matrix_element(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                            f1: SectionField, f2: SectionField, t: float, n_paths: int,
                            cfg: SamplerConfig, sampling: str = "importance") -> MatrixElementEstimate:
    """
    Estima ⟨e^{-tH_V} f1, f2⟩ = ∫ (e^{-tH_V}f1(x), f2(x)) vol(dx).

    Los puntos iniciales se sortean con una densidad constante por celda de
    una grilla sobre el soporte de f2: proporcional a |f2|²·densidad
    ("importance", mezclada con un 5% uniforme) o uniforme ("uniform"). El
    peso de cada camino es (u, f2)·densidad / q(x), con q la densidad exacta
    del muestreador, de modo que el estimador no tiene sesgo.

    Raises:
        DomainError: Si el soporte de f2 tiene medida nula o t <= 0
    """
    validate_positive(t, "t")
    validate_count(n_paths, "N", MIN_PATHS)
    _check_inputs(spec, v, f1, model)
    validate_rank(f2.rank, spec.rank)
    sampler = _build_sampler(model, f2, sampling)

    def starts(batch):
        return sampler.draw(cfg, batch)

    contrib, alive, clamped, nodes, _, x0 = path_contributions(model, spec, v, f1, t, starts, n_paths, cfg)
    weights = volume_density(model, x0) / sampler.pdf(x0)
    samples = np.sum(contrib * np.conj(f2.eval(x0)), axis=-1) * weights
    mean, stderr = mean_and_stderr(samples)
    logger.info("<e^{-tH}f1, f2> en t=%g: %.6g%+.6gi ± %.2g (%s)", t, mean.real, mean.imag,
                float(stderr), sampling)
    return MatrixElementEstimate(
        value=complex(mean), stderr=float(stderr), paths_used=n_paths, sampling=sampling,
        normalization=support_normalization(model, f2),
        clamped_fraction=_clamped_fraction(clamped, nodes),
        metadata={"t": t, **cfg.metadata},
    )


# ---------------------------------------------------------------------------
# Certificado de acotación local
# ---------------------------------------------------------------------------

def _kernel_moment(model: ManifoldModel, f: SectionField, t: float, x: np.ndarray,
                   finals: np.ndarray, alive: np.ndarray) -> float:
    """∫ |f|² p(t, x, ·) vol: cuadratura en cartas 1D, Monte Carlo en otro caso"""
    if model.chart_dim == 1 and model.variant != "sphere2":
        if model.variant == "euclidean":
            lo, hi = x[0] - 12 * math.sqrt(t), x[0] + 12 * math.sqrt(t)
        else:
            lo, hi = 0.0, model.lengths[0]
        ys = np.linspace(lo, hi, 4001)[:, None]
        dens = heat_kernel(model, t, x, ys) * np.sum(np.abs(f.eval(ys)) ** 2, axis=-1)
        return float(integrate.trapezoid(dens, ys[:, 0]))
    values = np.sum(np.abs(f.eval(finals)) ** 2, axis=-1)
    return float(np.mean(np.where(alive, values, 0.0)))


def local_sup_certificate(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                          f: SectionField, t: float, region: Sequence, n_paths: int,
                          cfg: SamplerConfig) -> CertificateReport:
    """
    Mayorante de Cauchy-Schwarz de |e^{-tH_V} f(x)| sobre una región finita:

        sqrt(E[1_{t<ζ} e^{2∫v2}]) · sqrt(∫ |f|² p(t, x, ·) vol)

    Returns:
        CertificateReport con el máximo sobre la región; si algún exponente
        desborda, finite = False con el punto y el camino causantes
    """
    validate_positive(t, "t")
    validate_count(n_paths, "N", MIN_PATHS)
    validate_rank(f.rank, spec.rank)
    validate_rank(v.rank, spec.rank)
    per_point, moments, kernels = [], [], []
    for p, x in enumerate(region):
        pts = as_points(model, x)

        def run(batch):
            hol = integrate_batch(walk_batch(model, pts, t, cfg, batch, spec), v, spec.rank, batch)
            return hol.certificate, hol.final.alive, np.array(hol.final.points)

        integral, alive, finals = map_batches(run, n_paths, cfg.workers, cfg.batch_size)
        exponent = 2.0 * integral
        if np.any(exponent > EXP_OVERFLOW):
            bad = int(np.argmax(exponent > EXP_OVERFLOW))
            logger.warning("Desborde del momento exponencial en el punto %d, camino %d", p, bad)
            return CertificateReport(math.inf, per_point, moments, kernels, finite=False,
                                     failing_point=p, failing_path=bad)
        moment = float(np.mean(np.where(alive, np.exp(exponent), 0.0)))
        kernel = _kernel_moment(model, f, t, pts, finals, alive)
        moments.append(moment)
        kernels.append(kernel)
        per_point.append(math.sqrt(moment) * math.sqrt(kernel))
    return CertificateReport(max(per_point), per_point, moments, kernels)


# ---------------------------------------------------------------------------
# Energía fundamental
# ---------------------------------------------------------------------------

def ground_energy(model: ManifoldModel, spec: BundleSpec, v: PotentialField, f: SectionField,
                  t_grid: Sequence[float], n_paths: int, cfg: SamplerConfig,
                  window: int = 2, sampling: str = "importance") -> EnergyEstimate:
    """
    Ajusta -d/dt log⟨f, e^{-tH_V} f⟩ por mínimos cuadrados sobre los
    `window` tiempos mayores de la grilla.

    Todos los tiempos usan la misma semilla (números aleatorios comunes).

    Raises:
        DomainError: Si la grilla tiene menos de 3 tiempos crecientes
        FitError: Si algún elemento de matriz estimado no es positivo
    """
    validate_time_grid(t_grid, min_length=3)
    validate_count(window, "window", 2)
    times = [float(t) for t in t_grid]
    values, errors, clamped = [], [], []
    for t in times:
        est = estimate_matrix_element(model, spec, v, f, f, t, n_paths, cfg, sampling)
        values.append(est.value.real)
        errors.append(est.stderr)
        clamped.append(est.clamped_fraction)
    values = np.asarray(values)
    if np.any(values <= 0):
        raise FitError(f"Elementos de matriz no positivos: {values.tolist()}")

    logs = np.log(values)
    log_err = np.asarray(errors) / values
    ts = np.asarray(times)[-window:]
    ys = logs[-window:]
    coeff = (ts - ts.mean()) / np.sum((ts - ts.mean()) ** 2)
    slope = float(np.sum(coeff * ys))
    stderr = float(np.sqrt(np.sum((coeff * log_err[-window:]) ** 2)))
    logger.info("E0 = %.6f ± %.6f (ventana de %d tiempos)", -slope, stderr, window)
    return EnergyEstimate(
        energy=-slope, stderr=stderr, times=times, log_values=logs.tolist(),
        log_stderr=log_err.tolist(), window=window, clamped_fraction=max(clamped),
        metadata={**cfg.metadata, "paths": n_paths},
    )


# ---------------------------------------------------------------------------
# Verificaciones
# ---------------------------------------------------------------------------

def scalar_companion(v: PotentialField) -> PotentialField:
    """Potencial escalar v1 - v2 (cota inferior de V) de rango 1"""
    def values(x, r_cut):
        v1, v2 = scalar_bounds_along(v, x)
        return (v1 - v2)[..., None, None]

    def split(x, r_cut):
        v1, v2 = scalar_bounds_along(v, x)
        return v1[..., None, None], v2[..., None, None]

    return PotentialField(1, values, split, singular_points=v.singular_points, model=v.model,
                          r_cut=v.r_cut, name=f"scalar({v.name})")


def domination_check(model: ManifoldModel, spec: BundleSpec, v: PotentialField,
                     f: SectionField, t: float, x, n_paths: int,
                     cfg: SamplerConfig) -> DominationReport:
    """
    Compara |e^{-tH_V} f(x)| por componente con e^{-tH_{v1-v2}}|f|(x), usando
    los mismos caminos para ambos estimadores.
    """
    vector = estimate_semigroup(model, spec, v, f, t, x, n_paths, cfg)
    norm_f = SectionField(1, lambda pts: np.linalg.norm(f.eval(pts), axis=-1)[..., None],
                          f.lower, f.upper, name=f"|{f.name}|")
    scalar = estimate_semigroup(model, zero_connection(model, 1), scalar_companion(v), norm_f,
                                t, x, n_paths, cfg)
    combined = np.sqrt(vector.stderr ** 2 + scalar.stderr[0] ** 2)
    vector_abs = np.abs(vector.value)
    passed = bool(np.all(vector_abs <= scalar.value[0].real + 3 * combined))
    return DominationReport(vector_abs, float(scalar.value[0].real), combined, passed)


def variance_gate(model: ManifoldModel, spec: BundleSpec, v: PotentialField, f: SectionField,
                  t: float, x, n_paths: int, cfg: SamplerConfig) -> VarianceGate:
    """
    Estabilidad de la varianza empírica del integrando al duplicar N
    (los primeros N caminos de la corrida de 2N son los de la corrida de N).
    """
    validate_count(n_paths, "N", MIN_PATHS)
    _check_inputs(spec, v, f, model)
    contrib = path_contributions(model, spec, v, f, t, x, 2 * n_paths, cfg)[0]
    norms = np.linalg.norm(contrib, axis=-1)
    var_n = float(np.var(norms[:n_paths], ddof=1))
    var_2n = float(np.var(norms, ddof=1))
    ratio = var_2n / var_n if var_n > 0 else (1.0 if var_2n == 0 else math.inf)
    return VarianceGate(var_n, var_2n, ratio, bool(0.5 <= ratio <= 2.0))


def hydrogen_energy(t_grid: Sequence[float], n_paths: int, cfg: SamplerConfig,
                    kappa: float = HYDROGEN_KAPPA, field_b: float = 0.0, rank: int = 1,
                    kato_times: Optional[Sequence[float]] = None) -> HydrogenReport:
    """
    Átomo de hidrógeno sobre ℝ³: H = ∇†∇/2 + V con V = -κG(·,0) (rango 1) o
    V(c,∇) - κG(·,0) con un campo magnético constante F₁₂ = b (rango 2).

    Returns:
        HydrogenReport con la energía fundamental y el reporte de Kato de |V2|
    """
    from core.kato import DEFAULT_KATO_TIMES, kato_verdict

    model = euclidean(3)
    center = np.zeros(3)
    if rank == 1:
        spec = zero_connection(model, 1)
        v = coulomb_potential(model, center, kappa)
        f = exponential_section(center)
    elif rank == 2:
        spec = magnetic_connection(model, field_b, rank=2)
        v = pauli_coulomb_potential(model, field_b, kappa, center)
        f = exponential_section(center, rank=2, direction=[1.0, 1.0])
    else:
        raise ContractError("El hidrógeno se define con rango 1 o 2")
    energy = ground_energy(model, spec, v, f, t_grid, n_paths, cfg)
    kato = kato_verdict(model, weight_field(v, "v2"),
                        kato_times if kato_times is not None else DEFAULT_KATO_TIMES, [center])
    return HydrogenReport(energy, kato, rank, field_b, kappa)


if __name__ == "__main__":
    print("FEYNMAN-KAC - Pruebas")
    print("=" * 60)

    from core.bundle import constant_potential, harmonic_potential
    from core.geometry import flat_torus

    cfg = SamplerConfig(dt=1e-2, seed=3)

    print("\n Prueba 1: V = 1 en el toro, f = 1, t = 1")
    torus = flat_torus(1.0, 1.0)
    est = estimate_semigroup(torus, zero_connection(torus), constant_potential(1.0, model=torus),
                             constant_section(), 1.0, [0.5, 0.5], 2000, cfg)
    print(f"Estimación: {est.value[0].real:.6f} ± {est.stderr[0]:.2e} (esperado {math.exp(-1):.6f})")

    print("\n Prueba 2: Oscilador armónico, x = 0, t = 1")
    line = euclidean(1)
    est = estimate_semigroup(line, zero_connection(line), harmonic_potential(line),
                             oscillator_ground_state(), 1.0, [0.0], 20000, cfg)
    print(f"Estimación: {est.value[0].real:.6f} ± {est.stderr[0]:.2e} (esperado 0.455560)")

    print("\n" + "=" * 60)
