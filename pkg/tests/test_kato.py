import math

import numpy as np
import pytest

from core.bundle import constant_weight, inverse_power_weight
from core.geometry import circle, euclidean, hyperbolic3, interval_absorbing, survival_exact
from core.kato import (
    exp_moment,
    kato_b,
    kato_b_monte_carlo,
    kato_verdict,
    lp_criterion,
    power_law_fit,
    quadrature_available,
    uniform_local_lp_norm,
    uniform_lp_criterion,
)
from core.stochastic_paths import SamplerConfig
from utils.validators import DomainError, FitError, UndecidedError


SHORT_TIMES = (0.1, 0.03, 0.01, 0.003, 0.001)


@pytest.fixture
def space():
    return euclidean(3)


class TestKatoModulus:
    def test_coulomb_closed_form(self, space):
        w = inverse_power_weight(space, np.zeros(3), 1.0)
        b = kato_b(space, w, 0.01, [np.zeros(3)])
        assert b.converged
        assert b.value == pytest.approx(2 * math.sqrt(2 * 0.01 / math.pi), rel=1e-6)
        assert np.allclose(b.argmax, 0.0)

    def test_singular_point_joins_grid(self, space):
        w = inverse_power_weight(space, np.zeros(3), 1.0)
        b = kato_b(space, w, 0.01, [np.array([2.0, 0.0, 0.0])])
        assert len(b.per_point) == 2
        assert np.allclose(b.argmax, 0.0)

    def test_constant_weight_grows_linearly(self):
        value, _ = kato_b(circle(), constant_weight(2.0), 0.3, [[1.0]])
        assert value == pytest.approx(0.6)

    def test_constant_weight_on_interval_uses_survival(self):
        model = interval_absorbing()
        b = kato_b(model, constant_weight(1.0), 0.5, [[math.pi / 2]])
        assert b.value < 0.5
        assert b.value > 0.5 * float(survival_exact(model, math.pi / 2, 0.5))

    def test_rejects_bad_time(self, space):
        with pytest.raises(DomainError):
            kato_b(space, constant_weight(1.0), 0.0, [np.zeros(3)])

    def test_quadrature_availability(self, space):
        assert quadrature_available(space, inverse_power_weight(space, np.zeros(3), 1.0))
        assert not quadrature_available(hyperbolic3(), inverse_power_weight(hyperbolic3(), [0, 0, 1], 1.0))


class TestVerdicts:
    def test_coulomb_is_kato(self, space):
        w = inverse_power_weight(space, np.zeros(3), 1.0)
        report = kato_verdict(space, w, SHORT_TIMES, [np.zeros(3)])
        assert report.verdict == "kato"
        assert report.alpha == pytest.approx(0.5, abs=1e-3)
        assert report.r_squared > 0.999

    def test_inverse_square_is_not_certified(self, space):
        w = inverse_power_weight(space, np.zeros(3), 2.0)
        report = kato_verdict(space, w, SHORT_TIMES[:4], [np.zeros(3)])
        assert report.verdict != "kato"

    def test_line_exponent(self):
        model = euclidean(1)
        w = inverse_power_weight(model, np.zeros(1), 0.5)
        report = kato_verdict(model, w, SHORT_TIMES, [np.zeros(1)])
        assert report.verdict == "kato"
        assert report.alpha == pytest.approx(0.75, abs=0.01)

    def test_zero_weight(self):
        report = kato_verdict(circle(), constant_weight(0.0), SHORT_TIMES, [[0.0]])
        assert report.verdict == "kato"
        assert report.b_values == [0.0] * len(SHORT_TIMES)

    def test_grid_must_decrease(self, space):
        with pytest.raises(DomainError):
            kato_verdict(space, constant_weight(1.0), sorted(SHORT_TIMES), [np.zeros(3)])

    def test_report_serialises(self):
        report = kato_verdict(circle(), constant_weight(1.0), SHORT_TIMES, [[0.0]])
        data = report.to_dict()
        assert data["verdict"] == "kato"
        assert data["alpha"] == pytest.approx(1.0)
        assert data["sup_points"][0] == [0.0]


class TestMonteCarlo:
    def test_constant_weight_is_exact(self):
        cfg = SamplerConfig(dt=1e-2, seed=1)
        b = kato_b_monte_carlo(circle(), constant_weight(2.0), 0.5, [[1.0]], 200, cfg)
        assert b.value == pytest.approx(1.0)
        assert b.stderr == pytest.approx(0.0, abs=1e-12)
        assert b.method == "monte_carlo"

    def test_agrees_with_quadrature_off_center(self, space):
        w = inverse_power_weight(space, np.zeros(3), 1.0)
        x = np.array([1.0, 0.0, 0.0])
        exact = kato_b(space, w, 0.1, [x]).per_point[0]
        cfg = SamplerConfig(dt=1e-3, seed=5)
        mc = kato_b_monte_carlo(space, w, 0.1, [x], 2000, cfg)
        assert mc.per_point[0] == pytest.approx(exact, abs=4 * mc.stderr + 2e-3)

    def test_exp_moment_of_constant(self):
        cfg = SamplerConfig(dt=1e-2, seed=2)
        report = exp_moment(circle(), constant_weight(0.5), 1.0, [[0.0], [3.0]], 1000, cfg)
        assert report.finite
        assert report.value == pytest.approx(math.exp(0.5))

    def test_exp_moment_overflow(self):
        cfg = SamplerConfig(dt=1e-1, seed=2)
        report = exp_moment(circle(), constant_weight(1000.0), 1.0, [[0.0]], 1000, cfg)
        assert not report.finite
        assert (report.failing_point, report.failing_path) == (0, 0)

    def test_exp_moment_needs_paths(self):
        with pytest.raises(DomainError):
            exp_moment(circle(), constant_weight(1.0), 1.0, [[0.0]], 999, SamplerConfig())


class TestCriteria:
    def test_power_law_fit(self):
        ts = np.array([0.1, 0.01, 0.001])
        fit = power_law_fit(ts, 3.0 * ts ** 0.5)
        assert fit.alpha == pytest.approx(0.5)
        assert fit.constant == pytest.approx(3.0)
        assert fit.r_squared == pytest.approx(1.0)
        with pytest.raises(FitError):
            power_law_fit(ts, [1.0, 0.0, 1.0])

    def test_lp_criterion(self, space):
        bound = ((2 * math.pi) ** -1.5, 1.0)
        assert lp_criterion(space, 2.0, bound)
        assert not lp_criterion(space, 1.4, bound)
        with pytest.raises(UndecidedError):
            lp_criterion(space, 2.0)

    def test_uniform_lp_on_hyperbolic_space(self):
        report = uniform_lp_criterion(hyperbolic3(), 2.0)
        assert report.holds
        assert not uniform_lp_criterion(hyperbolic3(), 1.5).holds
        with pytest.raises(DomainError):
            uniform_lp_criterion(hyperbolic3(), 2.0, t0=5.0)
        with pytest.raises(DomainError):
            uniform_lp_criterion(euclidean(3), 2.0)

    def test_uniform_local_norm_of_constant(self, space):
        value = uniform_local_lp_norm(space, constant_weight(1.0), 2.0, [np.zeros(3)])
        assert value == pytest.approx(4 * math.pi / 3, rel=0.02)
