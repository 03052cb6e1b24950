import math

import numpy as np
import pytest

from core.bundle import (
    PotentialField,
    constant_potential,
    cosine_potential,
    gauge_transform,
    potential_split,
    random_hermitian_potential,
    smooth_connection,
    zero_connection,
)
from core.geometry import circle, flat_torus
from core.holonomy import (
    check_norm_bound,
    dyson_series,
    integrate_batch,
    integrator_tolerance,
    magnus_step,
    solve_holonomy,
)
from core.stochastic_paths import (
    PathSample,
    SamplerConfig,
    attach_transport,
    sample_path,
    slice_path,
    walk_batch,
)
from utils.validators import ContractError, DomainError, IntegrationError


def smooth_path(model, t, nodes, speed=1.0, start=0.0):
    times = np.linspace(0.0, t, nodes)
    points = np.mod(start + speed * times, model.lengths[0])[:, None]
    return PathSample(times=times, points=points, alive=True, exit_index=None, model=model)


@pytest.fixture
def torus():
    return flat_torus(1.0, 1.0)


class TestScalarCases:
    def test_constant_potential_halves(self, torus):
        spec = zero_connection(torus, 2)
        path = attach_transport(sample_path(torus, [0.5, 0.5], math.log(2), SamplerConfig(dt=1e-2), 0), spec)
        state = solve_holonomy(path, constant_potential(1.0, rank=2, model=torus), spec)
        assert np.allclose(state.Y, 0.5 * np.eye(2), atol=1e-12)
        assert state.bound_certificate == 0.0

    def test_negative_potential_meets_certificate(self, torus):
        spec = zero_connection(torus, 2)
        path = attach_transport(sample_path(torus, [0.5, 0.5], math.log(2), SamplerConfig(dt=1e-2), 0), spec)
        state = solve_holonomy(path, constant_potential(-1.0, rank=2, model=torus), spec)
        assert np.linalg.norm(state.Y, 2) == pytest.approx(2.0)
        assert state.bound_certificate == pytest.approx(math.log(2))
        assert check_norm_bound(state)

    def test_cosine_over_full_turn(self):
        model = circle()
        spec = zero_connection(model)
        path = attach_transport(smooth_path(model, 2 * math.pi, 401), spec)
        state = solve_holonomy(path, cosine_potential(model, a=0.3, b=1.0), spec)
        assert complex(state.Y[0, 0]) == pytest.approx(math.exp(-0.6 * math.pi), rel=1e-10)


class TestNonAbelian:
    def test_magnus_matches_dyson_on_smooth_path(self):
        model = circle()
        spec = smooth_connection(model, rank=2, seed=2)
        v = random_hermitian_potential(model, rank=2, seed=8)
        path = attach_transport(smooth_path(model, 1.0, 10001, speed=2.0, start=0.4), spec)
        magnus = solve_holonomy(path, v, spec).Y
        dyson = dyson_series(path, v, spec, order=16)
        assert np.max(np.abs(magnus - dyson)) < 1e-6

    def test_norm_bound_on_brownian_paths(self, torus):
        spec = smooth_connection(torus, rank=3, seed=5)
        v = random_hermitian_potential(torus, rank=3, seed=6, scale=2.0)
        cfg = SamplerConfig(dt=1e-3, seed=4)
        for j in range(5):
            path = attach_transport(sample_path(torus, [0.1, 0.9], 0.5, cfg, j), spec)
            state = solve_holonomy(path, v, spec)
            assert check_norm_bound(state)

    def test_batch_engine_matches_single_path(self, torus):
        spec = smooth_connection(torus, rank=2, seed=1)
        v = random_hermitian_potential(torus, rank=2, seed=3)
        cfg = SamplerConfig(dt=1e-2, seed=9)
        batch = integrate_batch(walk_batch(torus, [0.3, 0.3], 0.4, cfg, [0, 1], spec), v, 2, [0, 1])
        single = solve_holonomy(attach_transport(sample_path(torus, [0.3, 0.3], 0.4, cfg, 1), spec), v, spec)
        assert np.allclose(batch.Y[1], single.Y, atol=1e-10)
        assert batch.certificate[1] == pytest.approx(single.bound_certificate)

    def test_cocycle_over_sliced_path(self):
        model = circle()
        spec = smooth_connection(model, rank=2, seed=2)
        v = random_hermitian_potential(model, rank=2, seed=8)
        path = attach_transport(smooth_path(model, 1.0, 2001, speed=2.0, start=0.4), spec)
        full = solve_holonomy(path, v, spec).Y
        first = solve_holonomy(slice_path(path, 0, 1000), v, spec).Y
        second = solve_holonomy(slice_path(path, 1000), v, spec).Y
        tau = path.transports[1000]
        assert np.allclose(full, first @ tau.conj().T @ second @ tau, atol=1e-10)

    def test_gauge_covariance(self):
        model = circle()
        spec = smooth_connection(model, rank=2, seed=6)
        v = random_hermitian_potential(model, rank=2, seed=9)
        rng = np.random.default_rng(12)
        w, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        moved_v = potential_split(lambda x: w.conj().T @ v.evaluate(x)[0] @ w, rank=2, model=model)
        moved_spec = gauge_transform(spec, w)
        path = smooth_path(model, 1.0, 501, speed=2.0, start=0.4)
        base = solve_holonomy(attach_transport(path, spec), v, spec).Y
        moved = solve_holonomy(attach_transport(path, moved_spec), moved_v, moved_spec).Y
        assert np.allclose(moved, w.conj().T @ base @ w, atol=1e-10)

    def test_magnus_step_rank_one(self):
        y = np.ones((1, 1), dtype=complex)
        out = magnus_step(y, np.array([[1.0]]), np.array([[3.0]]), 0.5)
        assert complex(out[0, 0]) == pytest.approx(math.exp(-1.0))


class TestErrors:
    def test_missing_transports(self):
        model = circle()
        path = smooth_path(model, 1.0, 11)
        with pytest.raises(ContractError):
            solve_holonomy(path, constant_potential(1.0, model=model), zero_connection(model))

    def test_rank_mismatch(self):
        model = circle()
        spec = zero_connection(model, 2)
        path = attach_transport(smooth_path(model, 1.0, 11), spec)
        with pytest.raises(ContractError):
            solve_holonomy(path, constant_potential(1.0, model=model), spec)

    def test_non_finite_potential_reports_node(self):
        model = circle()
        spec = zero_connection(model)

        def values(x, r):
            return np.where(x[..., 0] > 0.5, np.nan, 1.0)[..., None, None]

        v = PotentialField(1, values, lambda x, r: (values(x, r), np.zeros_like(values(x, r))),
                           model=model)
        path = attach_transport(smooth_path(model, 1.0, 11), spec)
        with pytest.raises(IntegrationError) as info:
            solve_holonomy(path, v, spec)
        assert info.value.node == 6

    def test_dyson_order(self):
        model = circle()
        spec = zero_connection(model)
        path = attach_transport(smooth_path(model, 1.0, 11), spec)
        with pytest.raises(DomainError):
            dyson_series(path, constant_potential(1.0, model=model), spec, order=0)


def test_integrator_tolerance_floor():
    assert integrator_tolerance(1e-4, 1.0) == 1e-12
    assert integrator_tolerance(0.1, 1.0) == pytest.approx(1e-4)
