"""
Diagnósticos numéricos de la clase de Kato.

El módulo de Kato de un peso w es

    b(t) = sup_x ∫₀^t ∫ p(s, x, y) |w(y)| vol(dy) ds

y el sup sobre M se reemplaza por una grilla finita más, para pesos radiales
singulares, el punto singular mismo. Para pesos radiales en ℝ^m (m <= 3) la
integral espacial se reduce a una integral radial con la densidad de
|B_s - c|; en cartas unidimensionales se integra contra el núcleo del calor;
en los demás casos se estima por Monte Carlo a lo largo de caminos.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from core.bundle import ScalarField
from core.geometry import (
    ManifoldModel,
    as_points,
    ball_volume,
    check_grid,
    distance,
    heat_kernel,
    survival_exact,
    verify_gaussian_bound,
    verify_on_diagonal_bound,
    volume_density,
)
from core.stochastic_paths import SamplerConfig, walk_batch
from utils.parallel import map_batches, mean_and_stderr
from utils.validators import (
    DomainError,
    FitError,
    UndecidedError,
    validate_count,
    validate_not_empty,
    validate_positive,
    validate_time_grid,
)


logger = logging.getLogger(__name__)

DEFAULT_KATO_TIMES = tuple(np.geomspace(1e-1, 1e-4, 7))
R_SQUARED_MIN = 0.99
ALPHA_MIN = 0.05
QUAD_EPSREL = 1e-8
QUAD_LIMIT = 200
TAIL_WIDTHS = 14.0
EXP_OVERFLOW = 700.0
MC_R_CUT = 1e-6
TINY_TIME = 1e-14
VERDICTS = ("kato", "not_kato", "undecided")


@dataclass(frozen=True)
class KatoValue:
    """b(t) en una grilla: máximo, punto del máximo y estado de la cuadratura"""
    value: float
    argmax: np.ndarray
    per_point: List[float]
    converged: bool = True
    residual: float = 0.0
    method: str = "quadrature"
    stderr: float = 0.0

    def __iter__(self):
        yield self.value
        yield self.argmax


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    constant: float
    r_squared: float


@dataclass(frozen=True)
class KatoReport:
    """
    Reporte de Kato: b(t) sobre una grilla de tiempos decreciente.

    Args:
        verdict: "kato", "not_kato" o "undecided"
        method: "quadrature" o "monte_carlo"
    """
    t_grid: List[float]
    b_values: List[float]
    sup_points: List[List[float]]
    verdict: str
    method: str
    alpha: Optional[float] = None
    constant: Optional[float] = None
    r_squared: Optional[float] = None
    converged: bool = True
    residuals: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "t_grid": list(self.t_grid), "b_values": list(self.b_values),
            "sup_points": [list(p) for p in self.sup_points], "verdict": self.verdict,
            "method": self.method, "alpha": self.alpha, "constant": self.constant,
            "r_squared": self.r_squared, "converged": self.converged,
        }


@dataclass(frozen=True)
class ExpMomentReport:
    value: float
    stderr: float
    per_point: List[float]
    per_point_stderr: List[float]
    finite: bool = True
    failing_point: Optional[int] = None
    failing_path: Optional[int] = None


@dataclass(frozen=True)
class UniformLpReport:
    dimensional: bool
    volume_growth: bool
    upper_bound: bool
    lower_bound: bool
    constants: dict

    @property
    def holds(self) -> bool:
        return self.dimensional and self.volume_growth and self.upper_bound and self.lower_bound


# ---------------------------------------------------------------------------
# Cuadratura
# ---------------------------------------------------------------------------

def _quad(func, a: float, b: float, points=None) -> Tuple[float, float, bool]:
    """quad con detección de no convergencia (ier != 0)"""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        kwargs = {"limit": QUAD_LIMIT, "epsrel": QUAD_EPSREL, "full_output": 1}
        if points is not None:
            inner = [p for p in points if a < p < b]
            if inner:
                kwargs["points"] = inner
        out = integrate.quad(func, a, b, **kwargs)
    value, err = out[0], out[1]
    # con full_output, quad agrega un mensaje sólo si ier != 0
    converged = len(out) == 3 and np.isfinite(value)
    return float(value), float(err), bool(converged)


def _radial_density(m: int, s: float, rho: float, r: np.ndarray) -> np.ndarray:
    """Densidad de |B_s - c| en ℝ^m partiendo a distancia rho de c"""
    r = np.asarray(r, dtype=float)
    if m == 1:
        return (2 * math.pi * s) ** -0.5 * (np.exp(-(r - rho) ** 2 / (2 * s))
                                             + np.exp(-(r + rho) ** 2 / (2 * s)))
    if m == 2:
        if rho == 0.0:
            return r / s * np.exp(-r * r / (2 * s))
        return r / s * special.i0e(r * rho / s) * np.exp(-(r - rho) ** 2 / (2 * s))
    if rho == 0.0:
        return 4 * math.pi * r * r * (2 * math.pi * s) ** -1.5 * np.exp(-r * r / (2 * s))
    return (r / rho) * (2 * math.pi * s) ** -0.5 * (np.exp(-(r - rho) ** 2 / (2 * s))
                                                    - np.exp(-(r + rho) ** 2 / (2 * s)))


def _radial_b(model: ManifoldModel, w: ScalarField, t: float, x: np.ndarray):
    m = model.dim
    rho = float(np.linalg.norm(x - w.center))
    flags = {"converged": True, "residual": 0.0}

    def inner(s):
        width = TAIL_WIDTHS * math.sqrt(s)
        lo, hi = max(0.0, rho - width), rho + width
        value, err, ok = _quad(lambda r: float(w.profile(r)) * float(_radial_density(m, s, rho, r)),
                               lo, hi, points=[rho])
        if lo > 0.0:
            # masa cerca del centro singular cuando rho >> sqrt(s)
            extra, err2, ok2 = _quad(lambda r: float(w.profile(r)) * float(_radial_density(m, s, rho, r)),
                                     0.0, lo)
            value, err, ok = value + extra, err + err2, ok and ok2
        flags["converged"] &= ok
        flags["residual"] += err
        return value

    # s = u² absorbe la singularidad integrable en s = 0
    value, err, ok = _quad(lambda u: 2.0 * u * inner(u * u), 0.0, math.sqrt(t))
    return value, err + flags["residual"], ok and flags["converged"]


def _kernel_b(model: ManifoldModel, w: ScalarField, t: float, x: np.ndarray):
    """Cartas 1D: ∫₀^t ∫ p(s, x, y)|w(y)| dy ds con el núcleo del calor"""
    x0 = float(x[0])
    singular = [float(as_points(model, c)[0]) for c in w.singular_points]
    flags = {"converged": True, "residual": 0.0}

    def inner(s):
        if s < TINY_TIME and not any(abs(x0 - c) < 1e-12 for c in singular):
            return float(w(np.array([x0])))
        if model.variant == "euclidean":
            width = TAIL_WIDTHS * math.sqrt(s)
            lo, hi = x0 - width, x0 + width
        else:
            lo, hi = 0.0, model.lengths[0]
        value, err, ok = _quad(lambda y: float(heat_kernel(model, s, x0, y)) * float(w(np.array([y]))),
                               lo, hi, points=[x0] + singular)
        flags["converged"] &= ok
        flags["residual"] += err
        return value

    value, err, ok = _quad(lambda u: 2.0 * u * inner(u * u), 0.0, math.sqrt(t))
    return value, err + flags["residual"], ok and flags["converged"]


def _constant_b(model: ManifoldModel, c: float, t: float, x: np.ndarray):
    if model.complete:
        return c * t, 0.0, True
    value, err, ok = _quad(lambda s: float(survival_exact(model, x, s)), 0.0, t)
    return c * value, c * err, ok


def quadrature_available(model: ManifoldModel, w: ScalarField) -> bool:
    """True si b(t) se puede calcular por cuadratura para (model, w)"""
    if w.constant is not None:
        return model.complete or model.variant == "interval_absorbing"
    if w.center is not None and w.profile is not None and model.variant == "euclidean":
        return model.dim <= 3
    return model.chart_dim == 1 and model.variant != "sphere2"


def _b_at(model: ManifoldModel, w: ScalarField, t: float, x: np.ndarray):
    if w.constant is not None:
        return _constant_b(model, w.constant, t, x)
    if w.center is not None and w.profile is not None and model.variant == "euclidean":
        return _radial_b(model, w, t, x)
    return _kernel_b(model, w, t, x)


def _with_singular_points(model: ManifoldModel, w: ScalarField, x_grid: Sequence) -> List[np.ndarray]:
    points = [as_points(model, x) for x in x_grid]
    if w.center is not None and w.profile is not None:
        if not any(np.allclose(p, w.center) for p in points):
            points.append(np.array(w.center, dtype=float))
    return points


def kato_b(model: ManifoldModel, w: ScalarField, t: float, x_grid: Sequence,
           workers: Optional[int] = None) -> KatoValue:
    """
    b(t) = max sobre la grilla de ∫₀^t ∫ p(s, x, y)|w(y)| vol(dy) ds.

    Para pesos radiales el punto singular se agrega a la grilla. Si la
    cuadratura no converge el resultado se marca converged=False con el
    residuo estimado (veredicto indeciso aguas arriba).

    Raises:
        DomainError: Si t <= 0, la grilla está vacía o no hay cuadratura
    """
    validate_positive(t, "t")
    validate_not_empty(x_grid, "La grilla de puntos")
    if not quadrature_available(model, w):
        raise DomainError(f"Sin cuadratura para {w.name} en {model.label}; use kato_b_monte_carlo")
    points = _with_singular_points(model, w, x_grid)

    def run(batch):
        return np.array([_b_at(model, w, t, points[i]) for i in batch], dtype=float)

    results = map_batches(run, len(points), workers, batch_size=1)
    values, residuals, converged = results[:, 0], results[:, 1], results[:, 2].astype(bool)
    values = np.where(np.isfinite(values), values, math.inf)
    best = int(np.argmax(values))
    if not np.all(converged):
        logger.warning("Cuadratura de b(%g) sin converger en %d punto(s)", t, int(np.sum(~converged)))
    return KatoValue(value=float(values[best]), argmax=points[best], per_point=values.tolist(),
                     converged=bool(np.all(converged)), residual=float(np.max(residuals)))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def weight_along(model: ManifoldModel, w: ScalarField, points: np.ndarray,
                 r_cut: float = MC_R_CUT) -> np.ndarray:
    """|w| en nodos de caminos, con la distancia al centro recortada a r_cut"""
    if w.constant is not None:
        return np.full(points.shape[:-1], w.constant)
    if w.center is not None and w.profile is not None:
        d = distance(model, points, w.center)
        return np.abs(w.profile(np.maximum(d, r_cut)))
    return w(points)


def path_integrals(model: ManifoldModel, w: ScalarField, t: float, x, n_paths: int,
                   cfg: SamplerConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    ∫₀^t |w(B_s)| ds por camino (suma de Riemann por la derecha, que evita
    el nodo inicial) y la vida de cada camino.
    """
    pts = as_points(model, x)

    def run(batch):
        walk = walk_batch(model, pts, t, cfg, batch)
        state = next(walk)
        total = np.zeros(batch.size)
        alive, time = state.alive, state.time
        for state in walk:
            h = state.time - time
            total += np.where(alive, h * weight_along(model, w, state.points), 0.0)
            alive, time = state.alive, state.time
        return total, state.alive

    return map_batches(run, n_paths, cfg.workers, cfg.batch_size)


def kato_b_monte_carlo(model: ManifoldModel, w: ScalarField, t: float, x_grid: Sequence,
                       n_paths: int, cfg: SamplerConfig) -> KatoValue:
    """
    Primera forma del módulo de Kato: sup_x E[∫₀^t 1_{s<ζ}|w(B_s)| ds],
    estimada a lo largo de caminos.
    """
    validate_positive(t, "t")
    validate_not_empty(x_grid, "La grilla de puntos")
    validate_count(n_paths, "N", 100)
    points = _with_singular_points(model, w, x_grid)
    means, errors = [], []
    for x in points:
        integral, _ = path_integrals(model, w, t, x, n_paths, cfg)
        mean, stderr = mean_and_stderr(integral)
        means.append(float(mean))
        errors.append(float(stderr))
    best = int(np.argmax(means))
    return KatoValue(value=means[best], argmax=points[best], per_point=means,
                     method="monte_carlo", stderr=errors[best])


def exp_moment(model: ManifoldModel, w: ScalarField, t: float, x_grid: Sequence,
               n_paths: int, cfg: SamplerConfig) -> ExpMomentReport:
    """
    sup_x E[1_{t<ζ(x)} exp(∫₀^t |w(B_s)| ds)] por Monte Carlo.

    Un exponente por encima de 700 se reporta como no finito junto con el
    punto y el camino causantes.
    """
    validate_positive(t, "t")
    validate_not_empty(x_grid, "La grilla de puntos")
    validate_count(n_paths, "N", 1000)
    means, errors = [], []
    for p, x in enumerate(x_grid):
        integral, alive = path_integrals(model, w, t, x, n_paths, cfg)
        if np.any(integral > EXP_OVERFLOW):
            bad = int(np.argmax(integral > EXP_OVERFLOW))
            logger.warning("Momento exponencial no finito: punto %d, camino %d", p, bad)
            return ExpMomentReport(math.inf, math.inf, means, errors, finite=False,
                                   failing_point=p, failing_path=bad)
        mean, stderr = mean_and_stderr(np.where(alive, np.exp(integral), 0.0))
        means.append(float(mean))
        errors.append(float(stderr))
    best = int(np.argmax(means))
    return ExpMomentReport(means[best], errors[best], means, errors)


# ---------------------------------------------------------------------------
# Veredictos y criterios
# ---------------------------------------------------------------------------

def power_law_fit(t: Sequence[float], b: Sequence[float]) -> PowerLawFit:
    """
    Ajuste log b = log C + α log t por mínimos cuadrados.

    Raises:
        FitError: Si algún b no es positivo y finito o hay menos de 2 puntos
    """
    ts = np.asarray(t, dtype=float)
    bs = np.asarray(b, dtype=float)
    if ts.size < 2 or np.any(~np.isfinite(bs)) or np.any(bs <= 0):
        raise FitError("El ajuste de ley de potencia requiere b(t) > 0 finito en >= 2 tiempos")
    lt, lb = np.log(ts), np.log(bs)
    alpha, log_c = np.polyfit(lt, lb, 1)
    resid = lb - (alpha * lt + log_c)
    total = np.sum((lb - lb.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / total if total > 0 else 1.0
    return PowerLawFit(float(alpha), float(math.exp(log_c)), float(r2))


def kato_verdict(model: ManifoldModel, w: ScalarField, t_grid: Sequence[float],
                 x_grid: Sequence, method: str = "auto", n_paths: int = 20000,
                 cfg: Optional[SamplerConfig] = None) -> KatoReport:
    """
    Veredicto de Kato a partir de b(t) sobre una grilla decreciente hacia 0.

    "kato" si b(t) <= C t^α con α > 0.05 y R² >= 0.99; "not_kato" si b es
    infinito en todos los tiempos o el ajuste es plano (α <= 0.05, R² >= 0.99);
    "undecided" en los demás casos.
    """
    validate_time_grid(t_grid, min_length=4, increasing=False)
    if method == "auto":
        method = "quadrature" if quadrature_available(model, w) else "monte_carlo"
    if method not in ("quadrature", "monte_carlo"):
        raise DomainError(f"Método desconocido '{method}'")
    cfg = cfg or SamplerConfig(dt=min(t_grid) / 10)

    values, points, converged, residuals = [], [], True, []
    for t in t_grid:
        if method == "quadrature":
            kv = kato_b(model, w, t, x_grid, workers=cfg.workers)
        else:
            kv = kato_b_monte_carlo(model, w, t, x_grid, n_paths, cfg)
        values.append(kv.value)
        points.append(np.atleast_1d(kv.argmax).tolist())
        converged &= kv.converged
        residuals.append(kv.residual)

    report = dict(t_grid=[float(t) for t in t_grid], b_values=values, sup_points=points,
                  method=method, converged=converged, residuals=residuals)
    b = np.asarray(values)
    if np.all(b == 0.0):
        return KatoReport(verdict="kato", **report)
    if np.all(~np.isfinite(b)):
        return KatoReport(verdict="not_kato", **report)
    if not converged or np.any(~np.isfinite(b)) or np.any(b <= 0):
        return KatoReport(verdict="undecided", **report)

    fit = power_law_fit(t_grid, b)
    verdict = "undecided"
    if fit.r_squared >= R_SQUARED_MIN:
        verdict = "kato" if fit.alpha > ALPHA_MIN else "not_kato"
    logger.info("Kato %s: α = %.4f, R² = %.5f -> %s", w.name, fit.alpha, fit.r_squared, verdict)
    return KatoReport(verdict=verdict, alpha=fit.alpha, constant=fit.constant,
                      r_squared=fit.r_squared, **report)


def dimensional_condition(dim: int, p_exp: float) -> bool:
    """p >= 1 si m = 1; p > m/2 si m >= 2"""
    return p_exp >= 1.0 if dim == 1 else p_exp > dim / 2.0


def lp_criterion(model: ManifoldModel, p_exp: float,
                 bound: Optional[Tuple[float, float]] = None) -> bool:
    """
    Hipótesis suficiente para L^p + L^∞ ⊂ 𝒦: condición dimensional sobre p y
    cota sup_x p(t,x,x) <= C t^{-m/2} para t <= t0, verificada junto con la
    cota gaussiana sobre la grilla de la variedad.

    Args:
        bound: (C, t0) de la cota en la diagonal

    Raises:
        UndecidedError: Si no se entrega la cota a verificar
    """
    if bound is None:
        raise UndecidedError("El criterio L^p requiere la cota en la diagonal (C, t0)")
    if not dimensional_condition(model.dim, p_exp):
        return False
    constant, t0 = bound
    t0 = min(t0, model.t0)
    times = np.geomspace(t0 * 1e-3, t0, 8)
    if not verify_on_diagonal_bound(model, constant, t0, times=times):
        return False
    fit = verify_gaussian_bound(model, check_grid(model), times,
                                c1_max=max(constant, 1.0))
    return fit.success


def uniform_local_lp_norm(model: ManifoldModel, w: ScalarField, p_exp: float,
                          centers: Sequence, nodes: int = 48) -> float:
    """
    sup sobre los centros de ∫_{K_1(x)} |w|^p vol, por regla del punto medio
    sobre una caja de carta que contiene la bola.
    """
    validate_positive(p_exp, "p")
    validate_not_empty(centers, "La lista de centros")
    if model.variant not in ("euclidean", "hyperbolic3"):
        raise DomainError("uniform_local_lp_norm requiere euclidean o hyperbolic3")
    best = 0.0
    for c in centers:
        x = as_points(model, c)
        if model.variant == "euclidean":
            lo, hi = x - 1.0, x + 1.0
        else:
            z = x[2]
            half = z * math.e * math.sinh(1.0)
            lo = np.array([x[0] - half, x[1] - half, z / math.e])
            hi = np.array([x[0] + half, x[1] + half, z * math.e])
        cell = (hi - lo) / nodes
        axes = [lo[i] + cell[i] * (np.arange(nodes) + 0.5) for i in range(lo.size)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        inside = distance(model, pts, x) <= 1.0
        values = np.where(inside, np.abs(weight_along(model, w, pts)) ** p_exp, 0.0)
        total = float(np.sum(values * volume_density(model, pts)) * np.prod(cell))
        best = max(best, total)
    return best


def uniform_lp_criterion(model: ManifoldModel, p_exp: float, t0: float = 1.0) -> UniformLpReport:
    """
    Hipótesis de L^p_{u,loc} + L^∞ ⊂ 𝒦 sobre hyperbolic3: crecimiento de
    volumen vol(K_r) <= C1 r³ e^{C2 r} y cotas gaussianas bilaterales

        C3 t^{-3/2} e^{-d²/(C4 t)} <= p(t,x,y) <= C5 t^{-3/2} e^{-C6 d²/t},  t <= t0,

    con constantes analíticas verificadas sobre grillas.

    Raises:
        DomainError: Si la variedad no es hyperbolic3 o t0 > 3
    """
    if model.variant != "hyperbolic3":
        raise DomainError("uniform_lp_criterion sólo está implementado para hyperbolic3")
    validate_positive(t0, "t0")
    if t0 > 3.0:
        raise DomainError("La cota inferior analítica requiere t0 <= 3")
    constants = {
        "C1": 4 * math.pi / 3, "C2": 2.0,
        "C3": (2 * math.pi) ** -1.5 * math.exp(-t0), "C4": 1.0,
        "C5": (2 * math.pi) ** -1.5, "C6": 0.5,
    }
    radii = np.geomspace(1e-3, 10.0, 60)
    growth = all(ball_volume(model, r) <= constants["C1"] * r ** 3 * math.exp(constants["C2"] * r)
                 * (1 + 1e-9) for r in radii)

    grid = check_grid(model)
    xs = np.stack([as_points(model, x) for x, _ in grid])
    ys = np.stack([as_points(model, y) for _, y in grid])
    d = distance(model, xs, ys)
    upper = lower = True
    for t in np.geomspace(t0 * 1e-3, t0, 10):
        p = heat_kernel(model, t, xs, ys)
        hi = constants["C5"] * t ** -1.5 * np.exp(-constants["C6"] * d ** 2 / t)
        lo = constants["C3"] * t ** -1.5 * np.exp(-d ** 2 / (constants["C4"] * t))
        upper &= bool(np.all(p <= hi * (1 + 1e-9)))
        lower &= bool(np.all(p >= lo * (1 - 1e-9)))
    report = UniformLpReport(dimensional_condition(model.dim, p_exp), growth, upper, lower, constants)
    logger.info("Criterio L^p uniforme (p=%g) en %s: %s", p_exp, model.label, report.holds)
    return report


if __name__ == "__main__":
    print("KATO - Pruebas")
    print("=" * 60)

    from core.bundle import inverse_power_weight
    from core.geometry import euclidean

    model = euclidean(3)
    coulomb = inverse_power_weight(model, np.zeros(3), 1.0)

    print("\n Prueba 1: b(0.01) para w = 1/|y| en ℝ³")
    b = kato_b(model, coulomb, 0.01, [np.zeros(3)])
    print(f"b = {b.value:.6f} (esperado {2 * math.sqrt(2 / math.pi) * 0.1:.6f})")

    print("\n Prueba 2: Veredicto")
    report = kato_verdict(model, coulomb, DEFAULT_KATO_TIMES, [np.zeros(3)])
    print(f"{report.verdict}, α = {report.alpha:.4f}")

    print("\n Prueba 3: Criterio L^p")
    print(f"p=2: {lp_criterion(model, 2.0, ((2 * math.pi) ** -1.5, 1.0))}")
    print(f"p=1.4: {lp_criterion(model, 1.4, ((2 * math.pi) ** -1.5, 1.0))}")

    print("\n" + "=" * 60)
