"""
Fibrados vectoriales hermíticos en una trivialización global.

Una conexión hermítica se da por su 1-forma A con valores en matrices
antihermíticas: A(x)(v) es lineal en la dirección v (coordenadas de carta).
El transporte paralelo a lo largo de un segmento x0 -> x1 es
expm(-A(x_medio)(Δx)), seguido de re-unitarización polar.

Los potenciales V son campos de matrices hermíticas con una descomposición
V = V1 - V2 en partes semidefinidas positivas. Los potenciales singulares
(Coulomb) declaran sus puntos singulares; a lo largo de caminos se evalúan
con la distancia recortada max(d, r_cut).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from core.geometry import (
    ManifoldModel,
    as_points,
    chart_displacement,
    chart_midpoint,
    distance,
    random_points,
)
from utils.validators import (
    ContractError,
    DomainError,
    validate_hermitian,
    validate_rank,
    validate_unitary,
)


logger = logging.getLogger(__name__)

MAX_RANK = 4
DEFAULT_R_CUT = 1e-6
ANTI_HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


def dagger(m: np.ndarray) -> np.ndarray:
    """Adjunta sobre los dos últimos ejes"""
    return np.conj(np.swapaxes(m, -1, -2))


def polar_unitary(m: np.ndarray) -> np.ndarray:
    """Factor unitario de la descomposición polar (vía SVD, admite pilas)"""
    u, _, vh = np.linalg.svd(m)
    return u @ vh


# ---------------------------------------------------------------------------
# Conexiones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BundleSpec:
    """
    Fibrado hermítico de rango k con conexión dada por su 1-forma.

    Args:
        rank: Rango k de la fibra (1..4)
        base: Variedad base
        connection_form: (puntos (..., c), direcciones (..., c)) -> (..., k, k)
        name: Identificador de catálogo
        flat: True si la forma es idénticamente nula (atajo)
    """
    rank: int
    base: ManifoldModel
    connection_form: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"
    flat: bool = False

    def __post_init__(self):
        if not 1 <= self.rank <= MAX_RANK:
            raise ContractError(f"El rango debe estar entre 1 y {MAX_RANK}, pero es {self.rank}")
        if self.base.variant == "sphere2" and not self.flat:
            raise ContractError("sphere2 sólo admite la conexión nula (potenciales escalares)")

    def form(self, points, directions) -> np.ndarray:
        """A(x)(v) como arreglo complejo (..., k, k)"""
        pts = as_points(self.base, points)
        dirs = np.asarray(directions, dtype=float)
        if self.base.chart_dim == 1 and (dirs.ndim == 0 or dirs.shape[-1] != 1):
            dirs = dirs[..., None]
        shape = np.broadcast_shapes(pts.shape[:-1], dirs.shape[:-1])
        if self.flat:
            return np.zeros(shape + (self.rank, self.rank), dtype=complex)
        return np.broadcast_to(np.asarray(self.connection_form(pts, dirs), dtype=complex),
                               shape + (self.rank, self.rank))


def zero_connection(base: ManifoldModel, rank: int = 1) -> BundleSpec:
    return BundleSpec(rank, base, lambda x, v: 0.0, name="zero", flat=True)


def abelian_connection(base: ManifoldModel, beta, rank: int = 1) -> BundleSpec:
    """
    A = iβ dθ (por eje): A(x)(v) = i Σ_j β_j v_j · 1.

    Args:
        base: Variedad (no sphere2)
        beta: Escalar o una constante por eje de carta
        rank: Rango de la fibra
    """
    betas = np.broadcast_to(np.asarray(beta, dtype=float), (base.chart_dim,)).copy()
    eye = np.eye(rank)

    def form(x, v):
        phase = np.sum(v * betas, axis=-1)
        return 1j * phase[..., None, None] * eye

    return BundleSpec(rank, base, form, name="abelian", flat=bool(np.all(betas == 0)))


def constant_connection(base: ManifoldModel, generators: Sequence[np.ndarray]) -> BundleSpec:
    """
    A(x)(v) = Σ_j v_j A_j con A_j antihermíticas constantes (una por eje).

    Raises:
        ContractError: Si algún generador no es antihermítico
    """
    gens = np.asarray(generators, dtype=complex)
    if gens.ndim != 3 or gens.shape[0] != base.chart_dim:
        raise ContractError(f"Se esperaban {base.chart_dim} generadores k×k")
    validate_hermitian(1j * gens, ANTI_HERMITIAN_TOL, "i·A_j")

    def form(x, v):
        return np.einsum("...j,jab->...ab", v, gens)

    return BundleSpec(gens.shape[1], base, form, name="constant")


def magnetic_connection(base: ManifoldModel, b: float, rank: int = 1) -> BundleSpec:
    """
    Campo magnético constante F₁₂ = b en gauge simétrico:
    A = i(b/2)(-x₂ dx₁ + x₁ dx₂)·1, con curvatura dA = i b dx₁∧dx₂.
    """
    if base.variant != "euclidean" or base.dim < 2:
        raise ContractError("magnetic_connection requiere euclidean(2) o euclidean(3)")
    eye = np.eye(rank)

    def form(x, v):
        phase = 0.5 * b * (-x[..., 1] * v[..., 0] + x[..., 0] * v[..., 1])
        return 1j * phase[..., None, None] * eye

    return BundleSpec(rank, base, form, name="magnetic", flat=(b == 0))


def smooth_connection(base: ManifoldModel, rank: int, seed: int = 0,
                      scale: float = 1.0) -> BundleSpec:
    """Conexión no abeliana suave aleatoria: A_j(x) = scale (P_j + sin(x_j) Q_j)"""
    rng = np.random.default_rng(seed)
    c = base.chart_dim

    def anti_hermitian():
        m = rng.normal(size=(c, rank, rank)) + 1j * rng.normal(size=(c, rank, rank))
        return 0.5 * (m - dagger(m)) / math.sqrt(2 * rank)

    p, q = anti_hermitian(), anti_hermitian()

    def form(x, v):
        coeff = p + np.sin(x)[..., :, None, None] * q
        return scale * np.einsum("...j,...jab->...ab", v, coeff)

    return BundleSpec(rank, base, form, name="smooth")


def gauge_transform(spec: BundleSpec, w: np.ndarray) -> BundleSpec:
    """Conjuga la conexión por un unitario fijo W: A -> W* A W"""
    w = np.asarray(w, dtype=complex)
    validate_unitary(w, name="W")
    validate_rank(spec.rank, w.shape[0])
    form = spec.connection_form
    return replace(spec, connection_form=lambda x, v: dagger(w) @ form(x, v) @ w,
                   name=f"{spec.name}^W")


def check_bundle(spec: BundleSpec, samples: int = 64, seed: int = 0) -> bool:
    """
    Verifica que A(x)(v) sea antihermítica y lineal en v en puntos aleatorios.

    Raises:
        ContractError: Si alguna de las propiedades falla
    """
    rng = np.random.default_rng(seed)
    pts = random_points(spec.base, samples, rng)
    v1 = rng.normal(size=(samples, spec.base.chart_dim))
    v2 = rng.normal(size=(samples, spec.base.chart_dim))
    a1, a2 = spec.form(pts, v1), spec.form(pts, v2)
    validate_hermitian(1j * a1, ANTI_HERMITIAN_TOL, "i·A(x)(v)")
    combo = spec.form(pts, 2.0 * v1 - 3.0 * v2)
    if np.max(np.abs(combo - (2.0 * a1 - 3.0 * a2))) > 1e-10:
        raise ContractError("La forma de conexión no es lineal en la dirección")
    return True


def transport_matrices(spec: BundleSpec, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """
    Transporte de un paso expm(-A(x_medio)(Δx)) para pilas de segmentos.

    Returns:
        Arreglo (..., k, k) de unitarios
    """
    dx = chart_displacement(spec.base, x0, x1)
    if spec.flat:
        return np.broadcast_to(np.eye(spec.rank, dtype=complex), dx.shape[:-1] + (spec.rank, spec.rank))
    mid = chart_midpoint(spec.base, x0, dx)
    gen = spec.form(mid, dx)
    if spec.rank == 1:
        phase = np.exp(-gen)
        return phase / np.abs(phase)
    return polar_unitary(linalg.expm(-gen))


def transport_segment(spec: BundleSpec, x0, x1, frame: np.ndarray) -> np.ndarray:
    """
    Actualiza un marco por el transporte del segmento x0 -> x1.

    Args:
        spec: Fibrado
        x0, x1: Extremos del segmento (dentro de un paso de la caminata)
        frame: Unitario k×k acumulado hasta x0

    Returns:
        Unitario k×k: polar(expm(-A(x_medio)(Δx)) · frame)

    Raises:
        ContractError: Si el marco de entrada no es unitario (desviación > 1e-8)
    """
    frame = np.asarray(frame, dtype=complex)
    validate_unitary(frame)
    p0, p1 = as_points(spec.base, x0), as_points(spec.base, x1)
    step = transport_matrices(spec, p0, p1)
    return polar_unitary(step @ frame)


# ---------------------------------------------------------------------------
# Potenciales
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """
    Campo escalar w (pesos de Kato, cotas v2).

    Args:
        fn: puntos -> valores reales |w|
        center: Centro si w es radial
        profile: d -> |w| si w es radial alrededor de `center`
        constant: Valor si w es constante
        sup: ||w||∞ si es acotado
        singular_points: Puntos donde w no está definido
    """
    fn: Callable[[np.ndarray], np.ndarray]
    center: Optional[np.ndarray] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant: Optional[float] = None
    sup: Optional[float] = None
    singular_points: Tuple = ()
    name: str = "w"

    def __call__(self, points) -> np.ndarray:
        return np.abs(np.asarray(self.fn(points), dtype=float))


def constant_weight(c: float) -> ScalarField:
    c = abs(float(c))
    return ScalarField(lambda x: np.full(np.shape(x)[:-1], c), constant=c, sup=c,
                       name=f"const({c:g})")


def radial_weight(model: ManifoldModel, center, profile: Callable, name: str = "radial",
                  singular: bool = True, sup: Optional[float] = None) -> ScalarField:
    """w(x) = profile(d(x, center))"""
    c = as_points(model, center)
    return ScalarField(lambda x: profile(distance(model, as_points(model, x), c)),
                       center=c, profile=profile, sup=sup,
                       singular_points=(c,) if singular else (), name=name)


def inverse_power_weight(model: ManifoldModel, center, power: float,
                         scale: float = 1.0) -> ScalarField:
    """w(x) = scale · d(x, center)^{-power}"""
    return radial_weight(model, center, lambda d: scale * np.asarray(d, dtype=float) ** -power,
                         name=f"|x|^-{power:g}")


@dataclass(frozen=True)
class PotentialField:
    """
    Potencial hermítico con descomposición V = V1 - V2, V1, V2 >= 0.

    Los evaluadores reciben (puntos, r_cut): con r_cut > 0 las distancias a
    los puntos singulares se recortan a max(d, r_cut).
    """
    rank: int
    matrix_fn: Callable[[np.ndarray, float], np.ndarray]
    split_fn: Callable[[np.ndarray, float], Tuple[np.ndarray, np.ndarray]]
    singular_points: Tuple = ()
    model: Optional[ManifoldModel] = None
    r_cut: float = DEFAULT_R_CUT
    name: str = "custom"
    v2_weight: Optional[ScalarField] = None
    sup_norm: Optional[float] = None
    nonnegative: bool = False

    def _singular_distance(self, pts: np.ndarray) -> np.ndarray:
        if not self.singular_points:
            return np.full(pts.shape[:-1], np.inf)
        return np.min(np.stack([distance(self.model, pts, c) for c in self.singular_points]), axis=0)

    def _check_regular(self, pts: np.ndarray):
        if np.any(self._singular_distance(pts) <= 0):
            raise DomainError(f"{self.name}: evaluación en un punto singular")

    def eval(self, x) -> np.ndarray:
        """V(x) (k×k), indefinido en los puntos singulares"""
        pts = as_points(self.model, x) if self.model else np.asarray(x, dtype=float)
        self._check_regular(pts)
        return _as_matrices(self.matrix_fn(pts, 0.0), self.rank, pts)

    def split(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """(V1(x), V2(x)), indefinido en los puntos singulares"""
        pts = as_points(self.model, x) if self.model else np.asarray(x, dtype=float)
        self._check_regular(pts)
        v1, v2 = self.split_fn(pts, 0.0)
        return _as_matrices(v1, self.rank, pts), _as_matrices(v2, self.rank, pts)

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluación a lo largo de caminos con recorte en los puntos singulares.

        Returns:
            Tupla (V (..., k, k), máscara de nodos recortados (...))
        """
        pts = np.asarray(points, dtype=float)
        clamped = self._singular_distance(pts) < self.r_cut
        return _as_matrices(self.matrix_fn(pts, self.r_cut), self.rank, pts), clamped

    def evaluate_split(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)
        v1, v2 = self.split_fn(pts, self.r_cut)
        return _as_matrices(v1, self.rank, pts), _as_matrices(v2, self.rank, pts)


def _as_matrices(values, rank: int, pts: np.ndarray) -> np.ndarray:
    shape = pts.shape[:-1] + (rank, rank)
    return np.broadcast_to(np.asarray(values, dtype=complex), shape)


def spectral_parts(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Partes V⁺, V⁻ por cálculo espectral fibra a fibra"""
    lam, vecs = np.linalg.eigh(values)
    pos = (vecs * np.maximum(lam, 0.0)[..., None, :]) @ dagger(vecs)
    neg = (vecs * np.maximum(-lam, 0.0)[..., None, :]) @ dagger(vecs)
    return pos, neg


def potential_split(v, rank: Optional[int] = None, model: Optional[ManifoldModel] = None,
                    name: str = "split", **kwargs) -> PotentialField:
    """
    Descomposición canónica V = V⁺ - V⁻ por cálculo espectral fibra a fibra.

    Args:
        v: Matriz constante, callable puntos -> (..., k, k) o un PotentialField
        rank: Rango (se infiere de una matriz constante)
        model: Variedad de los puntos

    Returns:
        PotentialField con V1 = V⁺, V2 = V⁻ (V1·V2 = 0 punto a punto)

    Raises:
        ContractError: Si V no es hermítica (asimetría > 1e-10) al evaluarla
    """
    if isinstance(v, PotentialField):
        source = v.matrix_fn
        rank = v.rank
        model = model or v.model
        kwargs.setdefault("singular_points", v.singular_points)
        kwargs.setdefault("r_cut", v.r_cut)
    elif callable(v):
        source = lambda x, r_cut: v(x)
    else:
        mat = np.atleast_2d(np.asarray(v, dtype=complex))
        validate_hermitian(mat, name="V")
        rank = mat.shape[0]
        source = lambda x, r_cut: mat
    if rank is None:
        raise ContractError("potential_split requiere el rango para un V dado como función")

    def matrix_fn(x, r_cut):
        values = np.asarray(source(x, r_cut), dtype=complex)
        validate_hermitian(values, name="V(x)")
        return values

    def split_fn(x, r_cut):
        values = _as_matrices(matrix_fn(x, r_cut), rank, np.asarray(x, dtype=float))
        return spectral_parts(values)

    return PotentialField(rank, matrix_fn, split_fn, model=model, name=name, **kwargs)


def scalar_bounds(v: PotentialField, x) -> Tuple[float, float]:
    """
    (v1, v2) = (mín σ(V1(x)), máx σ(V2(x))), de modo que V(x) >= (v1 - v2)·1.

    Raises:
        DomainError: Si x es un punto singular
    """
    v1, v2 = v.split(x)
    return float(np.min(np.linalg.eigvalsh(v1))), float(np.max(np.linalg.eigvalsh(v2)))


def scalar_bounds_along(v: PotentialField, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Versión vectorizada (con recorte) de scalar_bounds para nodos de caminos"""
    v1, v2 = v.evaluate_split(points)
    if v.rank == 1:
        return v1[..., 0, 0].real, v2[..., 0, 0].real
    return np.linalg.eigvalsh(v1)[..., 0], np.linalg.eigvalsh(v2)[..., -1]


def check_potential(v: PotentialField, points: np.ndarray) -> bool:
    """
    Verifica hermiticidad, V1, V2 >= 0 y V1 - V2 = V en los puntos dados.

    Raises:
        ContractError: Si alguna propiedad falla
    """
    values = v.eval(points)
    v1, v2 = v.split(points)
    validate_hermitian(values, 1e-12, "V(x)")
    for part, label in ((v1, "V1"), (v2, "V2")):
        if np.min(np.linalg.eigvalsh(part)) < -PSD_TOL:
            raise ContractError(f"{label}(x) no es semidefinida positiva")
    if np.max(np.abs(v1 - v2 - values)) > PSD_TOL:
        raise ContractError("V1 - V2 no coincide con V")
    return True


def _scaled_identity(values: np.ndarray, rank: int) -> np.ndarray:
    return np.asarray(values, dtype=float)[..., None, None] * np.eye(rank)


def zero_potential(rank: int = 1, model: Optional[ManifoldModel] = None) -> PotentialField:
    zero = np.zeros((rank, rank), dtype=complex)
    return PotentialField(rank, lambda x, r: zero, lambda x, r: (zero, zero), model=model,
                          name="zero", v2_weight=constant_weight(0.0), sup_norm=0.0,
                          nonnegative=True)


def constant_potential(c, rank: int = 1, model: Optional[ManifoldModel] = None) -> PotentialField:
    """V = c·1 (escalar) o una matriz hermítica constante"""
    mat = np.asarray(c, dtype=complex)
    if mat.ndim == 0:
        mat = mat * np.eye(rank)
    field_ = potential_split(mat, model=model, name="constant")
    lam = np.linalg.eigvalsh(mat)
    return replace(field_, v2_weight=constant_weight(max(-lam[0], 0.0)),
                   sup_norm=float(np.max(np.abs(lam))), nonnegative=bool(lam[0] >= 0))


def cosine_potential(model: ManifoldModel, a: float = 1.0, b: float = 1.0,
                     rank: int = 1) -> PotentialField:
    """V(θ) = a + b cos(2πθ/L) en el círculo o el intervalo (primer eje)"""
    length = model.lengths[0] if model.lengths else 2 * math.pi

    def values(x):
        return a + b * np.cos(2 * math.pi * x[..., 0] / length)

    matrix_fn = lambda x, r: _scaled_identity(values(x), rank)
    split_fn = lambda x, r: (_scaled_identity(np.maximum(values(x), 0.0), rank),
                             _scaled_identity(np.maximum(-values(x), 0.0), rank))
    neg = max(-(a - abs(b)), 0.0)
    return PotentialField(rank, matrix_fn, split_fn, model=model, name="cosine",
                          v2_weight=constant_weight(neg), sup_norm=abs(a) + abs(b),
                          nonnegative=(a - abs(b) >= 0))


def harmonic_potential(model: ManifoldModel, omega: float = 1.0, rank: int = 1) -> PotentialField:
    """V(x) = ½ ω² |x|² (coordenadas de carta)"""
    def matrix_fn(x, r):
        return _scaled_identity(0.5 * omega ** 2 * np.sum(x * x, axis=-1), rank)

    zero = np.zeros((rank, rank), dtype=complex)
    return PotentialField(rank, matrix_fn, lambda x, r: (matrix_fn(x, r), zero), model=model,
                          name="harmonic", v2_weight=constant_weight(0.0), nonnegative=True)


def _green_profile(model: ManifoldModel) -> Callable[[np.ndarray], np.ndarray]:
    if model.variant == "euclidean" and model.dim == 3:
        return lambda d: 1.0 / (2 * math.pi * d)
    if model.variant == "hyperbolic3":
        return lambda d: np.exp(-d) / (2 * math.pi * np.sinh(d))
    raise ContractError(f"El potencial de Coulomb requiere una variedad no parabólica, no {model.label}")


def coulomb_potential(model: ManifoldModel, center, kappa: float, rank: int = 1,
                      r_cut: float = DEFAULT_R_CUT) -> PotentialField:
    """
    V = -κ G(·, y)·1 con G la función de Green mínima.

    Con κ = 2π en ℝ³ el coeficiente radial es 1: V = -1/r.
    """
    profile = _green_profile(model)
    c = as_points(model, center)

    def strength(x, r_cut_):
        d = distance(model, x, c)
        return kappa * profile(np.maximum(d, r_cut_) if r_cut_ > 0 else d)

    zero = np.zeros((rank, rank), dtype=complex)
    weight = radial_weight(model, c, lambda d: kappa * profile(np.asarray(d, dtype=float)),
                           name="coulomb")
    return PotentialField(rank, lambda x, r: _scaled_identity(-strength(x, r), rank),
                          lambda x, r: (zero, _scaled_identity(strength(x, r), rank)),
                          singular_points=(c,), model=model, r_cut=r_cut,
                          name="coulomb", v2_weight=weight)


def inverse_power_potential(model: ManifoldModel, center, power: float, scale: float = 1.0,
                            rank: int = 1, r_cut: float = DEFAULT_R_CUT) -> PotentialField:
    """V = scale · d(x, y)^{-power}·1 (scale >= 0: sólo parte V1)"""
    c = as_points(model, center)

    def strength(x, r_cut_):
        d = distance(model, x, c)
        return scale * (np.maximum(d, r_cut_) if r_cut_ > 0 else d) ** -power

    zero = np.zeros((rank, rank), dtype=complex)
    return PotentialField(rank, lambda x, r: _scaled_identity(strength(x, r), rank),
                          lambda x, r: (_scaled_identity(strength(x, r), rank), zero),
                          singular_points=(c,), model=model, r_cut=r_cut,
                          name="inverse_power", v2_weight=constant_weight(0.0),
                          nonnegative=scale >= 0)


def tabulated_potential(model: ManifoldModel, grid: Sequence[float], values: Sequence[float],
                        rank: int = 1) -> PotentialField:
    """Potencial escalar tabulado en una grilla 1D con interpolación lineal"""
    xs = np.asarray(grid, dtype=float)
    ys = np.asarray(values, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ContractError("La tabla requiere grilla y valores 1D de igual longitud (>= 2)")
    period = model.lengths[0] if model.periodic else None

    def interp(x):
        return np.interp(x[..., 0], xs, ys, period=period)

    field_ = potential_split(lambda x: _scaled_identity(interp(x), rank), rank=rank,
                             model=model, name="tabulated")
    return replace(field_, v2_weight=constant_weight(max(-ys.min(), 0.0)),
                   sup_norm=float(np.max(np.abs(ys))), nonnegative=bool(ys.min() >= 0))


def random_hermitian_potential(model: ManifoldModel, rank: int, seed: int = 0,
                               scale: float = 1.0) -> PotentialField:
    """
    Campo hermítico suave aleatorio V(x) = H0 + Σ_j sin(x_j + φ_j) H_j,
    normalizado a ||V||∞ <= scale, con la descomposición canónica.
    """
    rng = np.random.default_rng(seed)
    c = model.chart_dim
    mats = rng.normal(size=(c + 1, rank, rank)) + 1j * rng.normal(size=(c + 1, rank, rank))
    mats = 0.5 * (mats + dagger(mats))
    norms = np.linalg.norm(mats, ord=2, axis=(-2, -1))
    mats = mats * (scale / np.sum(norms))
    phases = rng.uniform(0, 2 * math.pi, size=c)

    def values(x):
        coeff = np.sin(x + phases)
        return mats[0] + np.einsum("...j,jab->...ab", coeff, mats[1:])

    field_ = potential_split(values, rank=rank, model=model, name="random_hermitian")
    return replace(field_, v2_weight=constant_weight(scale), sup_norm=scale)


def add_potentials(a: PotentialField, b: PotentialField, name: Optional[str] = None) -> PotentialField:
    """
    Suma V = Va + Vb con la descomposición (V1a + V1b, V2a + V2b).

    La descomposición resultante no es la canónica, pero sus partes siguen
    siendo semidefinidas positivas.
    """
    validate_rank(a.rank, b.rank)

    def split_fn(x, r):
        a1, a2 = a.split_fn(x, r)
        b1, b2 = b.split_fn(x, r)
        return np.add(a1, b1), np.add(a2, b2)

    weight = None
    if a.v2_weight is not None and b.v2_weight is not None:
        weight = _add_weights(a.v2_weight, b.v2_weight)
    return PotentialField(
        a.rank, lambda x, r: np.add(a.matrix_fn(x, r), b.matrix_fn(x, r)), split_fn,
        singular_points=tuple(a.singular_points) + tuple(b.singular_points),
        model=a.model or b.model, r_cut=min(a.r_cut, b.r_cut),
        name=name or f"{a.name}+{b.name}", v2_weight=weight,
        sup_norm=(a.sup_norm + b.sup_norm) if a.sup_norm is not None and b.sup_norm is not None else None,
        nonnegative=a.nonnegative and b.nonnegative,
    )


def _add_weights(u: ScalarField, w: ScalarField) -> ScalarField:
    """Cota |u| + |w|; conserva el perfil radial si ambos lo permiten"""
    fn = lambda x: u(x) + w(x)
    sup = u.sup + w.sup if u.sup is not None and w.sup is not None else None
    radial, const = (u, w) if u.profile is not None else (w, u)
    if radial.profile is not None and const.constant is not None:
        c0, prof = const.constant, radial.profile
        return ScalarField(fn, center=radial.center, profile=lambda d: prof(d) + c0,
                           sup=sup, singular_points=radial.singular_points,
                           name=f"{u.name}+{w.name}")
    if u.constant is not None and w.constant is not None:
        return constant_weight(u.constant + w.constant)
    return ScalarField(fn, sup=sup, singular_points=tuple(u.singular_points) + tuple(w.singular_points),
                       name=f"{u.name}+{w.name}")


def _capped_weight(w: ScalarField, n: float) -> ScalarField:
    """Cota min(|w|, n), conservando el centro radial"""
    if w.constant is not None:
        return constant_weight(min(w.constant, n))
    if w.center is not None and w.profile is not None:
        prof = w.profile
        return ScalarField(lambda x: np.minimum(w(x), n), center=w.center,
                           profile=lambda d: np.minimum(prof(d), n), sup=n,
                           name=f"min({w.name}, {n:g})")
    return ScalarField(lambda x: np.minimum(w(x), n), sup=n, name=f"min({w.name}, {n:g})")


def truncate_potential(v: PotentialField, n: float, side: str = "upper") -> PotentialField:
    """
    Aproximaciones monótonas V_n = min(V, n) ("upper") o max(-n, V) ("lower")
    por cálculo espectral fibra a fibra.

    Los puntos singulares y el recorte se conservan. La cota de V2 pasa
    intacta con "upper" (n >= 0) y acotada por n con "lower".
    """
    if side not in ("upper", "lower"):
        raise ContractError("side debe ser 'upper' o 'lower'")

    def truncated(x, r):
        lam, vecs = np.linalg.eigh(_as_matrices(v.matrix_fn(x, r), v.rank, np.asarray(x, dtype=float)))
        lam = np.minimum(lam, n) if side == "upper" else np.maximum(lam, -n)
        return (vecs * lam[..., None, :]) @ dagger(vecs)

    def split_fn(x, r):
        return spectral_parts(truncated(x, r))

    weight = None
    if v.v2_weight is not None:
        if side == "lower":
            weight = _capped_weight(v.v2_weight, n)
        elif n >= 0:
            weight = v.v2_weight
    return PotentialField(v.rank, truncated, split_fn, singular_points=v.singular_points,
                          model=v.model, r_cut=v.r_cut, name=f"{v.name}[{side} {n:g}]",
                          v2_weight=weight, nonnegative=v.nonnegative and (side == "lower" or n >= 0))


def weight_field(v: PotentialField, part: str = "v2") -> ScalarField:
    """
    Campo escalar ||V2(x)|| ("v2") o ||V(x)|| ("abs") para diagnósticos de Kato.
    """
    if part == "v2" and v.v2_weight is not None:
        return v.v2_weight

    def fn(x):
        pts = np.asarray(x, dtype=float)
        values = v.evaluate_split(pts)[1] if part == "v2" else v.evaluate(pts)[0]
        return np.linalg.norm(values, ord=2, axis=(-2, -1))

    return ScalarField(fn, singular_points=v.singular_points, name=f"|{v.name}|")


# ---------------------------------------------------------------------------
# Estructura de Clifford y potencial de Pauli
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CliffordData:
    """Generadores c(e_j*) (3, 2, 2) sobre un co-marco ortonormal de una base 3D"""
    generators: np.ndarray = field(default_factory=lambda: 1j * PAULI)

    def multiply(self, alpha: np.ndarray) -> np.ndarray:
        """c(α) = Σ α_j c(e_j*)"""
        return np.einsum("...j,jab->...ab", np.asarray(alpha, dtype=float), self.generators)


def standard_clifford() -> CliffordData:
    """c(e_j*) = i·σ_j"""
    return CliffordData(1j * PAULI)


def check_clifford(cl: CliffordData, samples: int = 32, seed: int = 0) -> bool:
    """
    Verifica c(α)* = -c(α) y c(α)*c(α) = |α|²·1 en co-vectores unitarios aleatorios.

    Raises:
        ContractError: Si alguna identidad falla
    """
    gens = np.asarray(cl.generators)
    if gens.shape != (3, 2, 2):
        raise ContractError("Se esperan tres generadores 2×2")
    rng = np.random.default_rng(seed)
    alpha = rng.normal(size=(samples, 3))
    alpha /= np.linalg.norm(alpha, axis=-1, keepdims=True)
    c = cl.multiply(alpha)
    if np.max(np.abs(dagger(c) + c)) > 1e-12:
        raise ContractError("c(α) no es antiautoadjunta")
    if np.max(np.abs(dagger(c) @ c - np.eye(2))) > 1e-12:
        raise ContractError("c(α)*c(α) != |α|²")
    return True


def pauli_potential(cl: CliffordData, curvature: Callable, scal: Callable,
                    model: Optional[ManifoldModel] = None) -> PotentialField:
    """
    V(c,∇)(x) = ¼ scal(x)·1 + ½ Σ_{i<j} tr[∇²](e_i,e_j)(x) c(e_i*) c(e_j*).

    Args:
        cl: Datos de Clifford
        curvature: puntos -> (..., 3, 3) real antisimétrica F con
            F_ij = tr[∇²](e_i, e_j) / (2i)
        scal: puntos -> curvatura escalar

    Returns:
        PotentialField de rango 2 con la descomposición canónica

    Raises:
        ContractError: Si los datos de Clifford o la curvatura no son válidos
    """
    check_clifford(cl)
    gens = np.asarray(cl.generators)
    pairs = [(0, 1), (0, 2), (1, 2)]
    products = np.stack([gens[i] @ gens[j] for i, j in pairs])

    def values(x):
        f = np.asarray(curvature(x), dtype=float)
        f = np.broadcast_to(f, np.shape(x)[:-1] + (3, 3))
        if np.max(np.abs(f + np.swapaxes(f, -1, -2))) > 1e-12:
            raise ContractError("La curvatura debe ser antisimétrica")
        coeff = np.stack([f[..., i, j] for i, j in pairs], axis=-1)
        s = np.broadcast_to(np.asarray(scal(x), dtype=float), np.shape(x)[:-1])
        # ½ · (2i F_ij) · c_i c_j
        return 0.25 * s[..., None, None] * np.eye(2) + 1j * np.einsum("...p,pab->...ab", coeff, products)

    return potential_split(values, rank=2, model=model, name="pauli")


def constant_field_curvature(b: float, axes: Tuple[int, int] = (0, 1)) -> Callable:
    """Curvatura constante con única componente F_{ij} = b"""
    f = np.zeros((3, 3))
    i, j = axes
    f[i, j], f[j, i] = b, -b
    return lambda x: f


def pauli_coulomb_potential(model: ManifoldModel, b: float, kappa: float, center,
                            r_cut: float = DEFAULT_R_CUT) -> PotentialField:
    """
    Potencial del átomo con espín: V(c,∇) - κ G(·, y)·1 para un campo
    magnético constante F₁₂ = b sobre una base plana (scal = 0).
    """
    pauli = pauli_potential(standard_clifford(), constant_field_curvature(b),
                            lambda x: 0.0, model=model)
    pauli = replace(pauli, v2_weight=constant_weight(abs(b)), sup_norm=abs(b))
    return add_potentials(pauli, coulomb_potential(model, center, kappa, rank=2, r_cut=r_cut),
                          name="pauli_coulomb")


def magnetic_self_energy(v: PotentialField, lower: Sequence[float], upper: Sequence[float],
                         nodes: int = 32) -> float:
    """
    S(c,∇) = ∫ |||V(x)|||²_HS vol(dx) sobre una caja, por regla del punto medio.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    h = (hi - lo) / nodes
    axes = [lo[i] + h[i] * (np.arange(nodes) + 0.5) for i in range(lo.size)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    values = v.evaluate(pts)[0]
    hs = np.sum(np.abs(values) ** 2, axis=(-2, -1))
    return float(np.sum(hs) * np.prod(h))


if __name__ == "__main__":
    print("BUNDLE - Pruebas")
    print("=" * 60)

    from core.geometry import circle, euclidean

    print("\n Prueba 1: Holonomía de A = i·0.5 dθ en el círculo")
    spec = abelian_connection(circle(), 0.5)
    nodes = np.linspace(0.0, 2 * math.pi, 10001)
    frame = np.eye(1, dtype=complex)
    for a, b in zip(nodes[:-1], nodes[1:]):
        frame = transport_segment(spec, a, b, frame)
    print(f"Holonomía: {complex(frame[0, 0]):.6f} (esperado -1)")

    print("\n Prueba 2: Potencial de Pauli con F12 = 2")
    pauli = pauli_potential(standard_clifford(), constant_field_curvature(2.0), lambda x: 0.0)
    print(f"Autovalores: {np.linalg.eigvalsh(pauli.eval(np.zeros(3)))}")

    print("\n Prueba 3: Descomposición canónica de diag(3, -2)")
    v = potential_split(np.diag([3.0, -2.0]), model=euclidean(1))
    print(f"scalar_bounds: {scalar_bounds(v, np.zeros(1))}")

    print("\n" + "=" * 60)
