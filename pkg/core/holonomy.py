"""
Exponencial ordenada a lo largo de caminos.

Resuelve dY/ds = -Y (τ_s* V(B_s) τ_s), Y(0) = 1, sobre la grilla del
camino, tratando M(s) = τ_s* V(B_s) τ_s como lineal a trozos entre nodos. El
paso es el esquema de Magnus de dos puntos de Gauss-Legendre (orden 4):

    Ω = -h/2 (M_a + M_b) + (√3 h²/12) [M_a, M_b],   Y <- Y expm(Ω)

La parte hermítica de Ω es -h/2 (M_i + M_{i+1}), por lo que
||Y(t)|| <= exp(∫ v2) con la integral por trapecios: ese es el certificado.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from core.bundle import BundleSpec, PotentialField, dagger
from core.stochastic_paths import PathSample, WalkState
from utils.validators import ContractError, IntegrationError, validate_count, validate_rank


logger = logging.getLogger(__name__)

GAUSS_OFFSET = math.sqrt(3.0) / 6.0
NODES_LOW = 0.5 - GAUSS_OFFSET
NODES_HIGH = 0.5 + GAUSS_OFFSET
COMMUTATOR_WEIGHT = math.sqrt(3.0) / 12.0
TOLERANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class HolonomyState:
    """
    Resultado de la integración a lo largo de un camino.

    Args:
        Y: Matriz k×k en el tiempo t
        t: Tiempo final
        bound_certificate: ∫₀^t v2(B_s) ds por trapecios
        tolerance: Tolerancia del integrador (ver integrator_tolerance)
        clamped_nodes: Nodos evaluados con la distancia recortada
        nodes: Nodos usados
    """
    Y: np.ndarray
    t: float
    bound_certificate: float
    tolerance: float
    clamped_nodes: int = 0
    nodes: int = 0

    @property
    def clamped_fraction(self) -> float:
        return self.clamped_nodes / self.nodes if self.nodes else 0.0


@dataclass
class BatchHolonomy:
    """Holonomías de un lote de caminos junto con su estado final"""
    Y: np.ndarray
    certificate: np.ndarray
    vmax: np.ndarray
    clamped: np.ndarray
    nodes: np.ndarray
    final: WalkState


def integrator_tolerance(dt: float, vmax: float) -> float:
    """Tolerancia del integrador: max(1e-12, (dt·||V||∞)^4)"""
    return max(TOLERANCE_FLOOR, float(dt * vmax) ** 4)


def node_data(v: PotentialField, points: np.ndarray,
              transports: Optional[np.ndarray]) -> Tuple[np.ndarray, ...]:
    """
    Datos de nodo para un lote: M = τ* V τ, v2, ||V|| y máscara de recorte.

    Returns:
        Tupla (M (B,k,k), v2 (B,), norma (B,), recortado (B,))
    """
    values, clamped = v.evaluate(points)
    values = np.asarray(values)
    m = values if transports is None else dagger(transports) @ values @ transports
    v2_part = v.evaluate_split(points)[1]
    # los nodos no finitos se reportan después con su índice
    finite = np.all(np.isfinite(values), axis=(-2, -1)) & np.all(np.isfinite(v2_part), axis=(-2, -1))
    values = np.where(finite[..., None, None], values, 0.0)
    v2_part = np.where(finite[..., None, None], v2_part, 0.0)
    if v.rank == 1:
        norms = np.abs(values[..., 0, 0])
        v2 = v2_part[..., 0, 0].real
    else:
        norms = np.max(np.abs(np.linalg.eigvalsh(values)), axis=-1)
        v2 = np.linalg.eigvalsh(v2_part)[..., -1]
    m = np.where(finite[..., None, None], m, np.nan)
    return m, v2, norms, clamped


def _check_finite(m: np.ndarray, active: np.ndarray, node: int,
                  indices: Optional[Sequence[int]] = None):
    bad = active & ~np.all(np.isfinite(m), axis=(-2, -1))
    if np.any(bad):
        first = int(np.argmax(bad))
        path_index = int(indices[first]) if indices is not None else None
        raise IntegrationError(f"Potencial no finito en el nodo {node} del camino {path_index}",
                               node=node, path_index=path_index)


def magnus_step(y: np.ndarray, m0: np.ndarray, m1: np.ndarray, h: float) -> np.ndarray:
    """Un paso de Magnus de orden 4 con M lineal entre m0 y m1 (admite pilas)"""
    if y.shape[-1] == 1:
        return y * np.exp(-0.5 * h * (m0 + m1))
    ma = m0 + NODES_LOW * (m1 - m0)
    mb = m0 + NODES_HIGH * (m1 - m0)
    omega = -0.5 * h * (ma + mb) + COMMUTATOR_WEIGHT * h * h * (ma @ mb - mb @ ma)
    return y @ linalg.expm(omega)


def solve_holonomy(path: PathSample, v: PotentialField, spec: BundleSpec,
                   initial: Optional[np.ndarray] = None) -> HolonomyState:
    """
    Integra dY/ds = -Y (τ* V τ) a lo largo de un camino con transportes.

    Args:
        path: Camino con transportes adjuntos
        v: Potencial (rango igual al del fibrado)
        spec: Fibrado
        initial: Y(0) (identidad por defecto)

    Returns:
        HolonomyState con Y(t) y el certificado ∫ v2

    Raises:
        ContractError: Si faltan los transportes o los rangos no coinciden
        IntegrationError: Si V no es finito en algún nodo
    """
    if path.transports is None:
        raise ContractError("El camino no tiene transportes adjuntos")
    validate_rank(v.rank, spec.rank)
    last = path.last_index
    m, v2, norms, clamped = node_data(v, path.points[:last + 1], path.transports[:last + 1])
    active = np.ones(last + 1, dtype=bool)
    for node in range(last + 1):
        _check_finite(m[node:node + 1], active[node:node + 1], node, [path.path_index])

    y = np.eye(spec.rank, dtype=complex) if initial is None else np.array(initial, dtype=complex)
    steps = np.diff(path.times[:last + 1])
    for i, h in enumerate(steps):
        y = magnus_step(y, m[i], m[i + 1], h)

    certificate = float(np.sum(0.5 * steps * (v2[:-1] + v2[1:]))) if last else 0.0
    return HolonomyState(
        Y=y, t=float(path.times[last]), bound_certificate=certificate,
        tolerance=integrator_tolerance(float(np.max(steps)) if last else 0.0, float(np.max(norms))),
        clamped_nodes=int(np.count_nonzero(clamped)), nodes=last + 1,
    )


def integrate_batch(walk: Iterator[WalkState], v: PotentialField, rank: int,
                    indices: Sequence[int]) -> BatchHolonomy:
    """
    Integra la holonomía de un lote consumiendo el flujo de walk_batch.

    Los caminos muertos conservan su Y desde el paso de absorción.

    Raises:
        IntegrationError: Si V no es finito en un nodo de un camino vivo
    """
    validate_rank(v.rank, rank)
    state = next(walk)
    size = state.points.shape[0]
    m_prev, v2_prev, vmax, clamped = node_data(v, state.points, state.transports)
    _check_finite(m_prev, state.alive, 0, indices)
    m_prev = np.where(np.isfinite(m_prev), m_prev, 0.0)
    y = np.broadcast_to(np.eye(rank, dtype=complex), (size, rank, rank)).copy()
    certificate = np.zeros(size)
    clamped = clamped.astype(np.int64)
    nodes = np.ones(size, dtype=np.int64)
    alive = state.alive
    time = state.time

    for state in walk:
        h = state.time - time
        m, v2, norms, hit = node_data(v, state.points, state.transports)
        _check_finite(m, alive, state.index, indices)
        m = np.where(np.isfinite(m), m, 0.0)
        updated = magnus_step(y, m_prev, m, h)
        y = np.where(alive[:, None, None], updated, y)
        certificate += np.where(alive, 0.5 * h * (v2_prev + v2), 0.0)
        vmax = np.where(alive, np.maximum(vmax, norms), vmax)
        clamped += alive & hit
        nodes += alive
        m_prev, v2_prev, alive, time = m, v2, state.alive, state.time

    return BatchHolonomy(Y=y, certificate=certificate, vmax=vmax, clamped=clamped,
                         nodes=nodes, final=state)


def dyson_series(path: PathSample, v: PotentialField, spec: BundleSpec, order: int) -> np.ndarray:
    """
    Serie de Dyson truncada 1 + Σ_{k<=K} (-1)^k ∫_{tΔ_k} M(s_1)...M(s_k) ds.

    Los simplejos se acumulan recursivamente: J_0 = 1,
    J_k(s) = ∫_0^s J_{k-1}(u) M(u) du por trapecios acumulados.

    Raises:
        DomainError: Si order < 1
        ContractError: Si faltan los transportes
    """
    validate_count(order, "K", 1)
    if path.transports is None:
        raise ContractError("El camino no tiene transportes adjuntos")
    validate_rank(v.rank, spec.rank)
    last = path.last_index
    m = node_data(v, path.points[:last + 1], path.transports[:last + 1])[0]
    steps = np.diff(path.times[:last + 1])[:, None, None]

    eye = np.eye(spec.rank, dtype=complex)
    j = np.broadcast_to(eye, m.shape).copy()
    total = eye.copy()
    for k in range(1, order + 1):
        integrand = j @ m
        increments = 0.5 * steps * (integrand[:-1] + integrand[1:])
        j = np.concatenate([np.zeros((1,) + eye.shape, dtype=complex),
                            np.cumsum(increments, axis=0)])
        total = total + (-1) ** k * j[-1]
    return total


def check_norm_bound(state: HolonomyState) -> bool:
    """True si ||Y||_op <= exp(certificado)·(1 + 10·tolerancia)"""
    norm = float(np.linalg.norm(state.Y, ord=2))
    return norm <= math.exp(state.bound_certificate) * (1.0 + 10.0 * state.tolerance)


if __name__ == "__main__":
    print("HOLONOMY - Pruebas")
    print("=" * 60)

    from core.bundle import constant_potential, zero_connection
    from core.geometry import flat_torus
    from core.stochastic_paths import SamplerConfig, attach_transport, sample_path

    model = flat_torus(1.0, 1.0)
    spec = zero_connection(model, 2)
    cfg = SamplerConfig(dt=1e-3, seed=1)
    path = attach_transport(sample_path(model, [0.5, 0.5], math.log(2), cfg, 0), spec)

    print("\n Prueba 1: V = 1, t = ln 2")
    state = solve_holonomy(path, constant_potential(1.0, rank=2, model=model), spec)
    print(f"Y = {np.real_if_close(np.diag(state.Y))} (esperado 0.5)")

    print("\n Prueba 2: V = -1, cota de norma")
    state = solve_holonomy(path, constant_potential(-1.0, rank=2, model=model), spec)
    print(f"||Y|| = {np.linalg.norm(state.Y, 2):.6f}, cota e^{state.bound_certificate:.4f}: "
          f"{check_norm_bound(state)}")

    print("\n Prueba 3: Dyson K=1")
    print(f"{np.real_if_close(np.diag(dyson_series(path, constant_potential(1.0, rank=2, model=model), spec, 1)))}")

    print("\n" + "=" * 60)
