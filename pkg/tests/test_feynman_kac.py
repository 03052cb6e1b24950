import math

import numpy as np
import pytest

from core.bundle import (
    abelian_connection,
    constant_potential,
    cosine_potential,
    harmonic_potential,
    random_hermitian_potential,
    smooth_connection,
    zero_connection,
    zero_potential,
)
from core.feynman_kac import (
    SectionField,
    bump_section,
    constant_section,
    cosine_section,
    domination_check,
    estimate_matrix_element,
    estimate_semigroup,
    gaussian_section,
    ground_energy,
    hydrogen_energy,
    indicator_section,
    local_sup_certificate,
    oscillator_ground_state,
    support_normalization,
    variance_gate,
)
from core.geometry import circle, euclidean, flat_torus, interval_absorbing
from core.spectral_oracle import discretize, sample_section, semigroup_apply
from core.stochastic_paths import SamplerConfig
from utils.validators import ContractError, DomainError


@pytest.fixture
def cfg():
    return SamplerConfig(dt=1e-2, seed=3)


@pytest.fixture
def torus():
    return flat_torus(1.0, 1.0)


def plane_wave(k):
    return SectionField(1, lambda x: np.exp(1j * k * x[..., 0])[..., None], (0.0,), (2 * math.pi,),
                        name=f"e^{{i{k}θ}}")


class TestSemigroup:
    def test_constant_potential_is_exact(self, torus, cfg):
        est = estimate_semigroup(torus, zero_connection(torus), constant_potential(1.0, model=torus),
                                 constant_section(), 1.0, [0.5, 0.5], 200, cfg)
        assert est.value[0].real == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert est.stderr[0] < 1e-12
        assert est.paths_used == 200
        assert est.alive_fraction == 1.0

    def test_flux_shifts_the_spectrum(self, cfg):
        model = circle()
        beta, k, t, x = 0.5, 1, 0.5, 1.0
        est = estimate_semigroup(model, abelian_connection(model, beta), zero_potential(model=model),
                                 plane_wave(k), t, [x], 4000, cfg)
        expected = math.exp(-(k + beta) ** 2 * t / 2) * np.exp(1j * k * x)
        assert abs(est.value[0] - expected) < 4 * est.stderr[0] + 1e-3

    def test_harmonic_ground_state(self, cfg):
        line = euclidean(1)
        est = estimate_semigroup(line, zero_connection(line), harmonic_potential(line),
                                 oscillator_ground_state(), 1.0, [0.0], 4000, cfg)
        expected = math.pi ** -0.25 * math.exp(-0.5)
        assert est.value[0].real == pytest.approx(expected, abs=4 * est.stderr[0] + 5e-3)

    def test_all_paths_absorbed(self, cfg):
        model = interval_absorbing(1.0)
        est = estimate_semigroup(model, zero_connection(model), zero_potential(model=model),
                                 constant_section(), 5.0, [0.5], 100, cfg)
        assert est.all_absorbed
        assert est.value[0] == 0.0

    def test_same_result_for_any_worker_count(self, torus):
        spec = smooth_connection(torus, rank=2, seed=1)
        v = random_hermitian_potential(torus, rank=2, seed=2)
        f = constant_section(rank=2, direction=[1.0, 1j])
        one = estimate_semigroup(torus, spec, v, f, 0.2, [0.1, 0.2], 300,
                                 SamplerConfig(dt=1e-2, seed=4, workers=1, batch_size=64))
        four = estimate_semigroup(torus, spec, v, f, 0.2, [0.1, 0.2], 300,
                                  SamplerConfig(dt=1e-2, seed=4, workers=4, batch_size=64))
        assert np.array_equal(one.value, four.value)
        assert np.array_equal(one.stderr, four.stderr)

    def test_input_validation(self, torus, cfg):
        spec = zero_connection(torus)
        v = zero_potential(model=torus)
        with pytest.raises(DomainError):
            estimate_semigroup(torus, spec, v, constant_section(), 0.0, [0.5, 0.5], 200, cfg)
        with pytest.raises(DomainError):
            estimate_semigroup(torus, spec, v, constant_section(), 1.0, [0.5, 0.5], 50, cfg)
        with pytest.raises(ContractError):
            estimate_semigroup(torus, spec, v, constant_section(rank=2), 1.0, [0.5, 0.5], 200, cfg)
        with pytest.raises(ContractError):
            estimate_semigroup(circle(), spec, v, constant_section(), 1.0, [0.5], 200, cfg)

    def test_semigroup_property_against_oracle(self):
        model = circle()
        spec = abelian_connection(model, 0.5)
        v = cosine_potential(model, 1.0, 1.0)
        f = cosine_section()
        op = discretize(model, spec, v, 256)
        fgrid = sample_section(op, f)
        composed = semigroup_apply(op, 0.3, semigroup_apply(op, 0.2, fgrid))
        assert np.allclose(composed, semigroup_apply(op, 0.5, fgrid), atol=1e-10)
        node = 40
        est = estimate_semigroup(model, spec, v, f, 0.5, op.grid[node], 4000, SamplerConfig(dt=1e-2, seed=5))
        assert abs(est.value[0] - composed[node]) < 3 * est.stderr[0] + 0.02


class TestMatrixElement:
    def test_constant_on_torus(self, torus, cfg):
        f = constant_section(lower=(0.0, 0.0), upper=(1.0, 1.0))
        for sampling in ("importance", "uniform"):
            est = estimate_matrix_element(torus, zero_connection(torus), constant_potential(1.0, model=torus),
                                          f, f, 0.5, 200, cfg, sampling=sampling)
            assert est.value.real == pytest.approx(math.exp(-0.5), rel=1e-9)
            assert est.normalization == pytest.approx(1.0)

    def test_oscillator_matrix_element(self, cfg):
        line = euclidean(1)
        f = oscillator_ground_state()
        est = estimate_matrix_element(line, zero_connection(line), harmonic_potential(line),
                                      f, f, 0.5, 2000, cfg)
        assert est.value.real == pytest.approx(math.exp(-0.25), abs=4 * est.stderr + 5e-3)

    def test_support_normalization(self):
        assert support_normalization(euclidean(1), oscillator_ground_state()) == pytest.approx(1.0, abs=1e-6)
        box = indicator_section([0.0, 0.0], [0.5, 0.25])
        assert support_normalization(flat_torus(1.0, 1.0), box) == pytest.approx(0.125, rel=1e-9)

    def test_requires_declared_support(self, torus, cfg):
        with pytest.raises(DomainError):
            estimate_matrix_element(torus, zero_connection(torus), zero_potential(model=torus),
                                    constant_section(), constant_section(), 0.5, 200, cfg)

    def test_unknown_sampling(self, torus, cfg):
        f = constant_section(lower=(0.0, 0.0), upper=(1.0, 1.0))
        with pytest.raises(DomainError):
            estimate_matrix_element(torus, zero_connection(torus), zero_potential(model=torus),
                                    f, f, 0.5, 200, cfg, sampling="stratified")

    def test_empty_indicator_rejected(self):
        with pytest.raises(DomainError):
            indicator_section([0.5], [0.5])

    def test_conjugate_symmetry(self):
        model = circle()
        spec = abelian_connection(model, 0.3)
        v = cosine_potential(model, 1.0, 1.0)
        f1 = bump_section([2.0], 0.5, model=model)
        f2 = bump_section([2.9], 0.5, model=model)
        cfg = SamplerConfig(dt=1e-2, seed=6)
        forward = estimate_matrix_element(model, spec, v, f1, f2, 0.5, 40000, cfg)
        backward = estimate_matrix_element(model, spec, v, f2, f1, 0.5, 40000, cfg)
        combined = math.hypot(forward.stderr, backward.stderr)
        assert abs(forward.value - np.conj(backward.value)) <= 4 * combined

    def test_bump_support_wraps_on_circle(self, cfg):
        model = circle()
        near_seam = bump_section([0.1], 0.5, model=model)
        inside = bump_section([3.0], 0.5, model=model)
        assert near_seam.lower == pytest.approx((0.0,))
        assert near_seam.upper == pytest.approx((2 * math.pi,))
        assert inside.lower == pytest.approx((2.5,))
        assert inside.upper == pytest.approx((3.5,))
        assert support_normalization(model, near_seam) == pytest.approx(
            support_normalization(model, inside), rel=1e-4)
        est = estimate_matrix_element(model, zero_connection(model), zero_potential(model=model),
                                      near_seam, near_seam, 0.1, 500, cfg)
        assert est.value.real > 0


class TestGroundEnergy:
    def test_oscillator_energy(self, cfg):
        line = euclidean(1)
        est = ground_energy(line, zero_connection(line), harmonic_potential(line),
                            gaussian_section([0.0], 1.0), (0.5, 1.0, 1.5), 2000, cfg)
        assert est.energy == pytest.approx(0.5, abs=4 * est.stderr + 0.02)
        assert est.window == 2
        assert len(est.log_values) == 3

    def test_grid_too_short(self, cfg):
        line = euclidean(1)
        with pytest.raises(DomainError):
            ground_energy(line, zero_connection(line), harmonic_potential(line),
                          gaussian_section([0.0], 1.0), (0.5, 1.0), 200, cfg)

    @pytest.mark.slow
    def test_hydrogen_ground_state(self):
        cfg = SamplerConfig(dt=1e-3, seed=1)
        report = hydrogen_energy((0.5, 1.0, 1.5), 20000, cfg)
        assert report.energy.energy == pytest.approx(-0.5, abs=0.05)
        assert report.kato.verdict == "kato"


class TestChecks:
    def test_certificate_bounds_constant_case(self, cfg):
        model = circle()
        cert = local_sup_certificate(model, zero_connection(model), constant_potential(-1.0, model=model),
                                     constant_section(), 0.5, [[1.0], [4.0]], 200, cfg)
        assert cert.finite
        assert cert.value == pytest.approx(math.exp(0.5), rel=1e-6)

    def test_certificate_overflow(self, cfg):
        model = circle()
        cert = local_sup_certificate(model, zero_connection(model), constant_potential(-1000.0, model=model),
                                     constant_section(), 1.0, [[1.0]], 100, cfg)
        assert not cert.finite
        assert cert.failing_point == 0
        assert cert.failing_path == 0

    def test_domination_holds(self, torus, cfg):
        spec = smooth_connection(torus, rank=2, seed=5)
        v = random_hermitian_potential(torus, rank=2, seed=6, scale=2.0)
        f = gaussian_section([0.5, 0.5], 0.2, rank=2, direction=[1.0, -1j], model=torus)
        report = domination_check(torus, spec, v, f, 0.3, [0.4, 0.6], 400, cfg)
        assert report.passed
        assert np.all(report.vector_abs <= report.scalar + 1e-12)

    def test_variance_gate(self, torus, cfg):
        v = random_hermitian_potential(torus, rank=1, seed=2)
        f = gaussian_section([0.5, 0.5], 0.2, model=torus)
        gate = variance_gate(torus, zero_connection(torus), v, f, 0.3, [0.4, 0.4], 500, cfg)
        assert gate.passed
        assert 0.5 <= gate.ratio <= 2.0
