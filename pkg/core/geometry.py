"""
Variedades modelo: distancias, aplicación exponencial, núcleo del calor,
volúmenes y función de Green.

Convención: p(t, x, y) es la densidad de transición del movimiento browniano
de generador Δ/2. En el espacio euclídeo p(t,x,y) = (2πt)^{-m/2} e^{-d²/(2t)}
y la función de Green en ℝ³ es G = 1/(2π d).

Los puntos son arreglos numpy con forma (..., chart_dim):
    euclidean(m)        -> coordenadas cartesianas, chart_dim = m
    circle(L)           -> longitud de arco en [0, L), chart_dim = 1
    flat_torus(L1, L2)  -> longitudes de arco, chart_dim = m
    sphere2(R)          -> vector unitario ambiente, chart_dim = 3
    hyperbolic3         -> semiespacio superior (x1, x2, z), z > 0
    interval_absorbing  -> coordenada en [0, L]; fuera de (0, L) = absorbido
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import integrate

from utils.validators import (
    DomainError,
    ParabolicError,
    PrecisionError,
    validate_not_empty,
    validate_positive,
)


logger = logging.getLogger(__name__)

VARIANTS = ("euclidean", "circle", "flat_torus", "sphere2", "hyperbolic3",
            "interval_absorbing")

# Cola analítica máxima admitida al truncar sumas de imágenes / autovalores
SERIES_TOLERANCE = 1e-12
DEFAULT_SERIES_TERMS = 4000
SPHERE_POINT_TOL = 1e-8
# Malla de C2 por defecto para el ajuste gaussiano
DEFAULT_C2_GRID = tuple(np.round(np.arange(1.0, 8.0 + 1e-9, 0.25), 2))
# Valores del núcleo bajo este piso no se distinguen del error de truncación
RESOLVED_FLOOR = 100 * SERIES_TOLERANCE


@dataclass(frozen=True)
class ManifoldModel:
    """
    Variedad riemanniana modelo con núcleo del calor cerrado o en serie.

    Args:
        variant: Una de VARIANTS
        dim: Dimensión (sólo relevante para euclidean y flat_torus)
        lengths: Longitudes de los factores periódicos o del intervalo
        radius: Radio de sphere2
        series_terms: Orden máximo de truncación de las series
        t0: Horizonte de validez para las cotas gaussianas
    """
    variant: str
    dim: int = 1
    lengths: Tuple[float, ...] = ()
    radius: float = 1.0
    series_terms: int = DEFAULT_SERIES_TERMS
    t0: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"Variedad desconocida '{self.variant}'. Opciones: {VARIANTS}")
        if self.series_terms < 1:
            raise DomainError("series_terms debe ser >= 1")
        validate_positive(self.t0, "t0")
        validate_positive(self.radius, "radius")
        for length in self.lengths:
            validate_positive(length, "La longitud")
        if self.variant == "euclidean" and not 1 <= self.dim <= 3:
            raise DomainError("euclidean admite dimensiones 1, 2 o 3")
        if self.variant == "flat_torus" and not 1 <= len(self.lengths) <= 2:
            raise DomainError("flat_torus admite 1 o 2 longitudes")
        if self.variant in ("circle", "interval_absorbing") and len(self.lengths) != 1:
            raise DomainError(f"{self.variant} requiere exactamente una longitud")

    @property
    def chart_dim(self) -> int:
        """Número de coordenadas de un punto en la carta global"""
        return 3 if self.variant == "sphere2" else self.dim

    @property
    def complete(self) -> bool:
        """Estocásticamente completa (sin absorción)"""
        return self.variant != "interval_absorbing"

    @property
    def periodic(self) -> bool:
        return self.variant in ("circle", "flat_torus")

    @property
    def nonparabolic(self) -> bool:
        return (self.variant == "hyperbolic3"
                or (self.variant == "euclidean" and self.dim == 3))

    @property
    def label(self) -> str:
        if self.variant == "euclidean":
            return f"euclidean({self.dim})"
        if self.variant == "sphere2":
            return f"sphere2(R={self.radius:g})"
        if self.variant == "hyperbolic3":
            return "hyperbolic3"
        return f"{self.variant}({', '.join(f'{v:g}' for v in self.lengths)})"


def euclidean(dim: int, **kwargs) -> ManifoldModel:
    return ManifoldModel("euclidean", dim=dim, **kwargs)


def circle(length: float = 2 * math.pi, **kwargs) -> ManifoldModel:
    return ManifoldModel("circle", dim=1, lengths=(float(length),), **kwargs)


def flat_torus(*lengths: float, **kwargs) -> ManifoldModel:
    return ManifoldModel("flat_torus", dim=len(lengths),
                         lengths=tuple(float(v) for v in lengths), **kwargs)


def sphere2(radius: float = 1.0, **kwargs) -> ManifoldModel:
    return ManifoldModel("sphere2", dim=2, radius=float(radius), **kwargs)


def hyperbolic3(**kwargs) -> ManifoldModel:
    return ManifoldModel("hyperbolic3", dim=3, **kwargs)


def interval_absorbing(length: float = math.pi, **kwargs) -> ManifoldModel:
    return ManifoldModel("interval_absorbing", dim=1, lengths=(float(length),), **kwargs)


# ---------------------------------------------------------------------------
# Puntos y cartas
# ---------------------------------------------------------------------------

def as_points(model: ManifoldModel, x) -> np.ndarray:
    """
    Convierte la entrada a un arreglo (..., chart_dim) de puntos.

    Un escalar se acepta para las variedades de carta unidimensional.
    """
    arr = np.asarray(x, dtype=float)
    if model.chart_dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != model.chart_dim:
        raise DomainError(
            f"Los puntos de {model.label} tienen {model.chart_dim} coordenadas, "
            f"pero se recibieron {arr.shape[-1]}"
        )
    return arr


def validate_points(model: ManifoldModel, x) -> np.ndarray:
    """
    Valida que los puntos estén en la región válida de la carta.

    Returns:
        Los puntos como arreglo (..., chart_dim)

    Raises:
        DomainError: Si algún punto está fuera de la carta
    """
    pts = as_points(model, x)
    if not np.all(np.isfinite(pts)):
        raise DomainError("Coordenadas no finitas")
    if model.variant == "sphere2":
        norms = np.linalg.norm(pts, axis=-1)
        if np.any(np.abs(norms - 1.0) > SPHERE_POINT_TOL):
            raise DomainError("Los puntos de sphere2 deben ser vectores unitarios")
    elif model.variant == "hyperbolic3":
        if np.any(pts[..., 2] <= 0):
            raise DomainError("En hyperbolic3 la última coordenada debe ser > 0")
    elif model.variant == "interval_absorbing":
        length = model.lengths[0]
        if np.any(pts < 0) or np.any(pts > length):
            raise DomainError(f"Los puntos del intervalo deben estar en [0, {length:g}]")
    return pts


def wrap(model: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Reduce coordenadas periódicas a [0, L)"""
    if not model.periodic:
        return x
    lengths = np.asarray(model.lengths)
    out = np.mod(x, lengths)
    # np.mod puede devolver L exactamente por redondeo
    return np.where(out >= lengths, out - lengths, out)


def chart_displacement(model: ManifoldModel, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Desplazamiento en coordenadas de carta (mínimo en los factores periódicos)"""
    dx = np.asarray(x1, dtype=float) - np.asarray(x0, dtype=float)
    if model.periodic:
        lengths = np.asarray(model.lengths)
        dx = np.mod(dx + lengths / 2, lengths) - lengths / 2
    return dx


def chart_midpoint(model: ManifoldModel, x0: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Punto medio de carta x0 + dx/2"""
    mid = np.asarray(x0, dtype=float) + 0.5 * dx
    if model.variant == "sphere2":
        mid = mid / np.linalg.norm(mid, axis=-1, keepdims=True)
    return wrap(model, mid)


def tangent_frame(model: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """
    Marco ortonormal del tangente en x, expresado en la carta.

    Para sphere2 se usa el marco obtenido rotando el marco del polo norte a lo
    largo del gran círculo; es suave salvo en el polo sur, donde se fija
    e1 = (1, 0, 0), e2 = (0, -1, 0).

    Returns:
        Arreglo (..., dim, chart_dim) con los vectores del marco por filas
    """
    pts = as_points(model, x)
    if model.variant != "sphere2":
        return np.broadcast_to(np.eye(model.dim), pts.shape[:-1] + (model.dim, model.dim))
    ux, uy, c = pts[..., 0], pts[..., 1], pts[..., 2]
    one_plus_c = 1.0 + c
    south = one_plus_c < 1e-12
    denom = np.where(south, 1.0, one_plus_c)
    e1 = np.stack([1.0 - ux * ux / denom, -ux * uy / denom, -ux], axis=-1)
    e2 = np.stack([-ux * uy / denom, 1.0 - uy * uy / denom, -uy], axis=-1)
    e1 = np.where(south[..., None], np.array([1.0, 0.0, 0.0]), e1)
    e2 = np.where(south[..., None], np.array([0.0, -1.0, 0.0]), e2)
    return np.stack([e1, e2], axis=-2)


def _hyperboloid_to_upper_half(X: np.ndarray) -> np.ndarray:
    z = 1.0 / (X[..., 0] + X[..., 3])
    return np.stack([X[..., 1] * z, X[..., 2] * z, z], axis=-1)


def exp_map(model: ManifoldModel, x, v) -> np.ndarray:
    """
    Punto en tiempo 1 de la geodésica desde x con velocidad inicial v.

    Args:
        model: Variedad
        x: Puntos (..., chart_dim)
        v: Vectores tangentes en el marco de tangent_frame, (..., dim)

    Returns:
        Puntos (..., chart_dim). En interval_absorbing el resultado puede
        quedar fuera de (0, L); quien llama detecta la absorción.
    """
    pts = as_points(model, x)
    vel = np.asarray(v, dtype=float)
    if model.dim == 1 and (vel.ndim == 0 or vel.shape[-1] != 1):
        vel = vel[..., None]

    if model.variant in ("euclidean", "interval_absorbing"):
        return pts + vel
    if model.periodic:
        return wrap(model, pts + vel)
    if model.variant == "sphere2":
        frame = tangent_frame(model, pts)
        w = np.einsum("...i,...ij->...j", vel, frame)
        speed = np.linalg.norm(w, axis=-1, keepdims=True)
        angle = speed / model.radius
        direction = np.divide(w, speed, out=np.zeros_like(w), where=speed > 0)
        out = pts * np.cos(angle) + direction * np.sin(angle)
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    # hyperbolic3: llevar x a (0,0,1) por traslación horizontal + dilatación,
    # mover en el hiperboloide y deshacer la isometría
    speed = np.linalg.norm(vel, axis=-1)
    tangent = np.stack([np.zeros_like(speed), vel[..., 0], vel[..., 1], -vel[..., 2]], axis=-1)
    sinc = np.where(speed > 0, np.sinh(speed) / np.where(speed > 0, speed, 1.0), 1.0)
    X = tangent * sinc[..., None]
    X[..., 0] = X[..., 0] + np.cosh(speed)
    q = _hyperboloid_to_upper_half(X)
    z = pts[..., 2:3]
    shift = np.concatenate([pts[..., :2], np.zeros_like(z)], axis=-1)
    return q * z + shift


def distance(model: ManifoldModel, x, y) -> np.ndarray:
    """
    Distancia geodésica d(x, y).

    Raises:
        DomainError: Si alguna coordenada está fuera de la carta
    """
    px = validate_points(model, x)
    py = validate_points(model, y)
    if model.variant in ("euclidean", "interval_absorbing"):
        return np.linalg.norm(px - py, axis=-1)
    if model.periodic:
        return np.linalg.norm(chart_displacement(model, py, px), axis=-1)
    if model.variant == "sphere2":
        chord = np.linalg.norm(px - py, axis=-1)
        anti = np.linalg.norm(px + py, axis=-1)
        return model.radius * 2.0 * np.arctan2(chord, anti)
    sq = np.sum((px - py) ** 2, axis=-1)
    return np.arccosh(1.0 + sq / (2.0 * px[..., 2] * py[..., 2]))


# ---------------------------------------------------------------------------
# Núcleo del calor
# ---------------------------------------------------------------------------

def _gaussian(t: float, d: np.ndarray, m: int = 1) -> np.ndarray:
    return (2 * math.pi * t) ** (-m / 2) * np.exp(-d * d / (2 * t))


def _geometric_tail(first: float, ratio: float) -> float:
    if ratio >= 1.0:
        return math.inf
    return first / (1.0 - ratio)


def _image_terms(t: float, length: float, limit: int, dirichlet: bool = False) -> Optional[int]:
    """Menor K cuya cola de imágenes está bajo SERIES_TOLERANCE (None si excede limit)"""
    g0 = (2 * math.pi * t) ** -0.5
    for k in range(1, limit + 1):
        if dirichlet:
            a = 2 * k * length
            tail = 4 * g0 * _geometric_tail(math.exp(-a * a / (2 * t)),
                                            math.exp(-a * 2 * length / t))
        else:
            a = (k + 0.5) * length
            tail = 2 * g0 * _geometric_tail(math.exp(-a * a / (2 * t)),
                                            math.exp(-a * length / t))
        if tail < SERIES_TOLERANCE:
            return k
    return None


def _eigen_terms(t: float, rate: float, scale: float, limit: int) -> Optional[int]:
    """Menor N con scale * Σ_{n>N} e^{-rate t n²} bajo SERIES_TOLERANCE"""
    c = rate * t
    for n in range(0, limit + 1):
        tail = scale * _geometric_tail(math.exp(-c * (n + 1) ** 2),
                                       math.exp(-2 * c * (n + 1)))
        if tail < SERIES_TOLERANCE:
            return n
    return None


def _too_many_terms(model: ManifoldModel, t: float):
    raise PrecisionError(
        f"{model.label}: la truncación en {model.series_terms} términos no alcanza "
        f"la tolerancia {SERIES_TOLERANCE:.0e} en t={t:g}"
    )


def _periodic_kernel_1d(model: ManifoldModel, t: float, delta: np.ndarray,
                        length: float) -> np.ndarray:
    """Núcleo del círculo de longitud `length`: imágenes o serie de Fourier"""
    k_img = _image_terms(t, length, model.series_terms)
    rate = 0.5 * (2 * math.pi / length) ** 2
    n_four = _eigen_terms(t, rate, 2.0 / length, model.series_terms)
    if k_img is None and n_four is None:
        _too_many_terms(model, t)
    delta = np.mod(delta + length / 2, length) - length / 2
    if n_four is None or (k_img is not None and 2 * k_img + 1 <= n_four):
        logger.debug("círculo L=%g t=%g: %d imágenes", length, t, 2 * k_img + 1)
        ks = np.arange(-k_img, k_img + 1)
        return np.sum(_gaussian(t, delta[..., None] + ks * length), axis=-1)
    logger.debug("círculo L=%g t=%g: %d modos de Fourier", length, t, n_four)
    ns = np.arange(1, n_four + 1)
    weights = np.exp(-rate * t * ns ** 2)
    phases = np.cos(2 * math.pi * delta[..., None] * ns / length)
    return (1.0 + 2.0 * np.sum(weights * phases, axis=-1)) / length


def _dirichlet_kernel(model: ManifoldModel, t: float, x: np.ndarray,
                      y: np.ndarray) -> np.ndarray:
    """Núcleo de Dirichlet en (0, L): imágenes alternadas o serie de senos"""
    length = model.lengths[0]
    k_img = _image_terms(t, length, model.series_terms, dirichlet=True)
    rate = 0.5 * (math.pi / length) ** 2
    n_sin = _eigen_terms(t, rate, 2.0 / length, model.series_terms)
    if k_img is None and n_sin is None:
        _too_many_terms(model, t)
    if n_sin is None or (k_img is not None and 4 * k_img + 2 <= n_sin):
        ks = np.arange(-k_img, k_img + 1) * 2 * length
        direct = _gaussian(t, (x - y)[..., None] + ks)
        mirror = _gaussian(t, (x + y)[..., None] + ks)
        return np.sum(direct - mirror, axis=-1)
    ns = np.arange(1, n_sin + 1)
    modes = (np.sin(math.pi * ns * x[..., None] / length)
             * np.sin(math.pi * ns * y[..., None] / length))
    return (2.0 / length) * np.sum(np.exp(-rate * t * ns ** 2) * modes, axis=-1)


def _sphere_terms(model: ManifoldModel, t: float) -> int:
    """Orden N de la serie de Legendre: cola e^{-tN(N+1)/(2R²)} / (2πt)"""
    r2 = model.radius ** 2
    need = (2 * r2 / t) * max(math.log(1.0 / (2 * math.pi * t * SERIES_TOLERANCE)), 0.0)
    n = int(math.ceil(0.5 * (-1 + math.sqrt(1 + 4 * need))))
    if n > model.series_terms:
        _too_many_terms(model, t)
    return max(n, 1)


def heat_kernel(model: ManifoldModel, t: float, x, y) -> np.ndarray:
    """
    Núcleo del calor mínimo p(t, x, y) (generador Δ/2).

    Args:
        model: Variedad
        t: Tiempo > 0
        x, y: Puntos (se difunden entre sí)

    Returns:
        Densidades con la forma difundida de x e y (sin el eje de carta)

    Raises:
        DomainError: Si t <= 0 o los puntos no son válidos
        PrecisionError: Si la serie no puede truncarse bajo la tolerancia
    """
    validate_positive(t, "t")
    px = validate_points(model, x)
    py = validate_points(model, y)

    if model.variant == "euclidean":
        return _gaussian(t, np.linalg.norm(px - py, axis=-1), model.dim)
    if model.periodic:
        value = 1.0
        for axis, length in enumerate(model.lengths):
            value = value * _periodic_kernel_1d(model, t, px[..., axis] - py[..., axis], length)
        return np.asarray(value)
    if model.variant == "interval_absorbing":
        px, py = np.broadcast_arrays(px[..., 0], py[..., 0])
        return _dirichlet_kernel(model, t, px, py)
    if model.variant == "sphere2":
        r2 = model.radius ** 2
        n = _sphere_terms(model, t)
        ls = np.arange(n + 1)
        coeffs = (2 * ls + 1) / (4 * math.pi * r2) * np.exp(-t * ls * (ls + 1) / (2 * r2))
        cos_angle = np.clip(np.sum(px * py, axis=-1), -1.0, 1.0)
        return legendre.legval(cos_angle, coeffs)
    # hyperbolic3: núcleo de Δ en tiempo t/2
    r = distance(model, px, py)
    safe = np.where(r > 1e-12, r, 1.0)
    # r / sinh r sin desbordar
    ratio = np.where(r > 1e-12, 2 * safe * np.exp(-safe) / -np.expm1(-2 * safe), 1.0)
    return (2 * math.pi * t) ** -1.5 * ratio * np.exp(-t / 2 - r * r / (2 * t))


def survival_exact(model: ManifoldModel, x, t: float) -> np.ndarray:
    """
    Probabilidad de supervivencia ∫ p(t, x, y) vol(dy).

    Vale 1 en las variedades completas; en el intervalo absorbente se usa la
    serie de senos Σ_{n impar} 4/(nπ) e^{-t(nπ/L)²/2} sin(nπx/L).
    """
    validate_positive(t, "t")
    pts = validate_points(model, x)
    if model.complete:
        return np.ones(pts.shape[:-1])
    length = model.lengths[0]
    rate = 0.5 * (math.pi / length) ** 2
    n_max = _eigen_terms(t, rate, 4.0 / math.pi, model.series_terms)
    if n_max is None:
        _too_many_terms(model, t)
    ns = np.arange(1, max(n_max, 1) + 1, 2)
    terms = (4.0 / (math.pi * ns)) * np.exp(-rate * t * ns ** 2)
    return np.sum(terms * np.sin(math.pi * ns * pts[..., 0, None] / length), axis=-1)


# ---------------------------------------------------------------------------
# Volúmenes
# ---------------------------------------------------------------------------

def volume(model: ManifoldModel) -> float:
    """Volumen total (inf en las variedades no compactas)"""
    if model.variant in ("euclidean", "hyperbolic3"):
        return math.inf
    if model.variant == "sphere2":
        return 4 * math.pi * model.radius ** 2
    return float(np.prod(model.lengths))


def volume_density(model: ManifoldModel, x) -> np.ndarray:
    """Densidad riemanniana respecto de la medida de Lebesgue de la carta"""
    pts = as_points(model, x)
    if model.variant == "hyperbolic3":
        return pts[..., 2] ** -3.0
    return np.ones(pts.shape[:-1])


def ball_volume(model: ManifoldModel, r: float) -> float:
    """
    vol(K_r(x)) en las variedades homogéneas.

    Raises:
        DomainError: Para flat_torus e interval_absorbing (no homogéneas en r)
    """
    validate_positive(r, "r", allow_zero=True)
    if model.variant == "euclidean":
        m = model.dim
        return math.pi ** (m / 2) / math.gamma(m / 2 + 1) * r ** m
    if model.variant == "hyperbolic3":
        return math.pi * (math.sinh(2 * r) - 2 * r)
    if model.variant == "circle":
        return min(2 * r, model.lengths[0])
    if model.variant == "sphere2":
        rr = min(r, math.pi * model.radius)
        return 2 * math.pi * model.radius ** 2 * (1 - math.cos(rr / model.radius))
    raise DomainError(f"ball_volume no está definido para {model.label}")


# ---------------------------------------------------------------------------
# Función de Green (potencial de Coulomb)
# ---------------------------------------------------------------------------

def green_function(model: ManifoldModel, x, y) -> np.ndarray:
    """
    Función de Green mínima G(x, y) = ∫₀^∞ p(t, x, y) dt.

    Raises:
        ParabolicError: Si la variedad es parabólica (sin función de Green positiva)
        DomainError: Si x = y
    """
    if not model.nonparabolic:
        raise ParabolicError(f"{model.label} es parabólica: no hay función de Green positiva")
    r = distance(model, x, y)
    if np.any(r <= 0):
        raise DomainError("green_function requiere x != y")
    if model.variant == "euclidean":
        return 1.0 / (2 * math.pi * r)
    return np.exp(-r) / (2 * math.pi * np.sinh(r))


def green_function_quadrature(model: ManifoldModel, x, y, horizon: float) -> Tuple[float, float]:
    """
    Cuadratura de ∫₀^T p(t, x, y) dt y cota analítica de la cola ∫_T^∞.

    La integral se hace en la variable u = log t.

    Returns:
        Tupla (integral hasta T, cota de la cola)
    """
    if not model.nonparabolic:
        raise ParabolicError(f"{model.label} es parabólica")
    validate_positive(horizon, "T")
    r = float(distance(model, x, y))
    if r <= 0:
        raise DomainError("green_function_quadrature requiere x != y")
    px, py = validate_points(model, x), validate_points(model, y)

    def integrand(u):
        t = math.exp(u)
        return float(heat_kernel(model, t, px, py)) * t

    lower = math.log(r * r / 1400.0)
    value, _ = integrate.quad(integrand, lower, math.log(horizon), limit=400,
                              epsabs=0.0, epsrel=1e-10)
    # p <= (2πt)^{-3/2} en ambos modelos no parabólicos
    tail = (2 * math.pi) ** -1.5 * 2.0 / math.sqrt(horizon)
    return value, tail


def green_bound_constant(model: ManifoldModel, pairs: Sequence[Tuple]) -> float:
    """Menor C̃ con G(x, y) <= C̃ / d(x, y) sobre los pares dados"""
    validate_not_empty(pairs, "La lista de pares")
    worst = 0.0
    for x, y in pairs:
        worst = max(worst, float(green_function(model, x, y) * distance(model, x, y)))
    return worst


# ---------------------------------------------------------------------------
# Cotas gaussianas
# ---------------------------------------------------------------------------

@dataclass
class GaussianBoundFit:
    """Resultado del ajuste p(t,x,y) <= C1 t^{-m/2} e^{-d²/(C2 t)}"""
    c1: float
    c2: float
    success: bool
    worst_ratio: float
    samples: int
    skipped: int = 0
    per_c2: List[Tuple[float, float]] = field(default_factory=list)


def check_grid(model: ManifoldModel) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Pares de puntos documentados por variedad para las verificaciones de cotas.

    euclidean: x = 0, y sobre el primer eje y la diagonal hasta distancia 3.
    circle / flat_torus: x = 0, y en una malla regular de la celda.
    sphere2: x = polo norte, y a ángulos polares 0..π (antípoda incluida).
    hyperbolic3: x = (0,0,1), y a lo largo del eje vertical y desplazado.
    interval_absorbing: x en L/2 y L/4, y en una malla interior.
    """
    pairs = []
    if model.variant == "euclidean":
        origin = np.zeros(model.dim)
        diag = np.ones(model.dim) / math.sqrt(model.dim)
        for s in np.linspace(0.0, 3.0, 13):
            axis_pt = origin.copy()
            axis_pt[0] = s
            pairs.append((origin, axis_pt))
            pairs.append((origin, s * diag))
    elif model.variant == "circle":
        length = model.lengths[0]
        for s in np.linspace(0.0, length, 17, endpoint=False):
            pairs.append((np.array([0.0]), np.array([s])))
    elif model.variant == "flat_torus":
        axes = [np.linspace(0.0, length, 9, endpoint=False) for length in model.lengths]
        origin = np.zeros(model.dim)
        for y in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim):
            pairs.append((origin, y))
    elif model.variant == "sphere2":
        north = np.array([0.0, 0.0, 1.0])
        for theta in np.linspace(0.0, math.pi, 13):
            pairs.append((north, np.array([math.sin(theta), 0.0, math.cos(theta)])))
    elif model.variant == "hyperbolic3":
        base = np.array([0.0, 0.0, 1.0])
        for s in np.linspace(-2.0, 2.0, 9):
            pairs.append((base, np.array([0.0, 0.0, math.exp(s)])))
            pairs.append((base, np.array([s, 0.0, 1.0])))
    else:
        length = model.lengths[0]
        for x in (length / 2, length / 4):
            for y in np.linspace(length / 16, 15 * length / 16, 15):
                pairs.append((np.array([x]), np.array([y])))
    return pairs


def verify_gaussian_bound(model: ManifoldModel, grid: Sequence[Tuple], times: Sequence[float],
                          c2_grid: Sequence[float] = DEFAULT_C2_GRID,
                          c1_max: float = 1.0, rel_tol: float = 1e-3) -> GaussianBoundFit:
    """
    Ajusta constantes (C1, C2) de la cota gaussiana superior.

    Para cada C2 de la malla, C1(C2) es el máximo de p t^{m/2} e^{d²/(C2 t)}
    sobre las muestras. Se devuelve el menor C1 y, entre los C2 cuyo C1 está a
    distancia relativa `rel_tol` del mínimo, el menor C2.

    Args:
        model: Variedad
        grid: Pares de puntos (x, y)
        times: Tiempos, todos <= model.t0
        c2_grid: Valores de C2 a explorar
        c1_max: Techo aceptable de C1; por encima el ajuste se reporta fallido
        rel_tol: Tolerancia relativa para desempatar hacia C2 menor

    Returns:
        GaussianBoundFit (success=False si no hay ajuste bajo c1_max)
    """
    validate_not_empty(grid, "La grilla de pares")
    validate_not_empty(times, "La lista de tiempos")
    for t in times:
        validate_positive(t, "t")
        if t > model.t0 * (1 + 1e-12):
            raise DomainError(f"t={t:g} excede el horizonte t0={model.t0:g}")

    xs = np.stack([as_points(model, x) for x, _ in grid])
    ys = np.stack([as_points(model, y) for _, y in grid])
    d = distance(model, xs, ys)
    m = model.dim

    log_terms, sq_over_t = [], []
    skipped = 0
    for t in times:
        p = heat_kernel(model, t, xs, ys)
        ok = p > RESOLVED_FLOOR
        skipped += int(np.sum(~ok))
        log_terms.append(np.log(p[ok]) + 0.5 * m * math.log(t))
        sq_over_t.append(d[ok] ** 2 / t)
    log_terms = np.concatenate(log_terms)
    sq_over_t = np.concatenate(sq_over_t)

    per_c2 = []
    for c2 in c2_grid:
        log_c1 = np.max(log_terms + sq_over_t / c2)
        per_c2.append((float(c2), float(math.exp(min(log_c1, 700.0)))))

    best_c1 = min(c1 for _, c1 in per_c2)
    c2, c1 = next((c2, c1) for c2, c1 in per_c2 if c1 <= best_c1 * (1 + rel_tol))
    success = bool(np.isfinite(c1) and c1 <= c1_max)
    if not success:
        logger.warning("%s: sin ajuste gaussiano bajo C1 <= %g (mejor %g)", model.label, c1_max, c1)
    return GaussianBoundFit(c1=c1, c2=c2, success=success, worst_ratio=c1 / c1_max,
                            samples=int(log_terms.size), skipped=skipped, per_c2=per_c2)


def verify_on_diagonal_bound(model: ManifoldModel, constant: float, t0: float,
                             points: Optional[Sequence] = None,
                             times: Optional[Sequence[float]] = None) -> bool:
    """
    Comprueba sup_x p(t, x, x) <= C t^{-dim/2} para 0 < t <= t0 en una grilla.

    Args:
        model: Variedad
        constant: Constante C
        t0: Horizonte
        points: Puntos x (por defecto los x de check_grid)
        times: Tiempos (por defecto 12 tiempos geométricos en [t0/1000, t0])
    """
    validate_positive(constant, "C")
    validate_positive(t0, "t0")
    if points is None:
        points = [pair[0] for pair in check_grid(model)]
    if times is None:
        times = np.geomspace(t0 * 1e-3, t0, 12)
    pts = np.stack([as_points(model, x) for x in points])
    for t in times:
        diag = heat_kernel(model, t, pts, pts)
        if np.any(diag > constant * t ** (-model.dim / 2) * (1 + 1e-9)):
            return False
    return True


def random_points(model: ManifoldModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Puntos válidos aleatorios (para barridos de propiedades)"""
    if model.variant == "euclidean":
        return rng.normal(size=(n, model.dim))
    if model.periodic:
        return rng.uniform(0.0, 1.0, size=(n, model.dim)) * np.asarray(model.lengths)
    if model.variant == "sphere2":
        pts = rng.normal(size=(n, 3))
        return pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    if model.variant == "hyperbolic3":
        pts = rng.normal(size=(n, 3))
        pts[:, 2] = np.exp(0.5 * pts[:, 2])
        return pts
    return rng.uniform(0.0, model.lengths[0], size=(n, 1))


if __name__ == "__main__":
    print("GEOMETRY - Pruebas")
    print("=" * 60)

    print("\n Prueba 1: Distancias")
    print(f"euclidean(2) (0,0)-(3,4): {float(distance(euclidean(2), [0, 0], [3, 4])):.6f}")
    print(f"circle(2π) 0.5-(2π-0.5): {float(distance(circle(), 0.5, 2 * math.pi - 0.5)):.6f}")

    print("\n Prueba 2: Núcleo del calor")
    print(f"euclidean(1) t=1: {float(heat_kernel(euclidean(1), 1.0, 0.0, 0.0)):.6f}")
    print(f"circle(100) t=0.01: {float(heat_kernel(circle(100.0), 0.01, 0.0, 0.0)):.12f}")

    print("\n Prueba 3: Función de Green en ℝ³")
    print(f"G(d=1) = {float(green_function(euclidean(3), [0, 0, 0], [1, 0, 0])):.6f}")

    print("\n" + "=" * 60)
