import io
import json
import math

import numpy as np
import pytest

from core.bundle import (
    abelian_connection,
    constant_potential,
    cosine_potential,
    random_hermitian_potential,
    smooth_connection,
    zero_connection,
    zero_potential,
)
from core.feynman_kac import bump_section, cosine_section
from core.geometry import circle, flat_torus, interval_absorbing, sphere2
from core.spectral_oracle import (
    arc_nodes,
    convergence_ratio,
    davies_gaffney_check,
    discretize,
    dump_operator_csv,
    dump_vector_csv,
    eigen_table_json,
    eigenvalues,
    finite_speed_check,
    graph_norm_convergence,
    mollify,
    oracle_compare,
    radial_ground_energy,
    sample_section,
    semigroup_apply,
    standard_davies_gaffney_sweep,
    truncation_convergence,
    wave_cosine,
    with_shift,
)
from core.stochastic_paths import SamplerConfig
from utils.validators import ContractError, DomainError, PrecisionError


def free_operator(model, nodes, v=None, spec=None):
    spec = spec or zero_connection(model)
    return discretize(model, spec, v if v is not None else zero_potential(model=model), nodes)


class TestDiscretization:
    def test_circle_spectrum(self):
        lam = eigenvalues(free_operator(circle(), 256), 5)
        assert np.allclose(lam, [0.0, 0.5, 0.5, 2.0, 2.0], atol=1e-3)

    def test_interval_spectrum(self):
        lam = eigenvalues(free_operator(interval_absorbing(), 256), 3)
        assert np.allclose(lam, [0.5, 2.0, 4.5], atol=2e-3)

    def test_flux_moves_the_spectrum(self):
        model = circle()
        op = free_operator(model, 256, spec=abelian_connection(model, 0.25))
        assert np.allclose(eigenvalues(op, 3), [0.03125, 0.28125, 0.78125], atol=1e-3)

    def test_non_abelian_torus_is_bounded_below(self):
        model = flat_torus(1.0, 1.0)
        v = random_hermitian_potential(model, rank=2, seed=4)
        op = discretize(model, smooth_connection(model, rank=2, seed=3), v, 8)
        assert op.H.shape == (128, 128)
        assert np.allclose(op.H, op.H.conj().T)
        floor = float(np.min(np.linalg.eigvalsh(op.potential)))
        assert eigenvalues(op, 1)[0] >= floor - 1e-9

    def test_constant_potential_shifts_semigroup(self):
        model = circle()
        f = sample_section(free_operator(model, 64), cosine_section())
        free = semigroup_apply(free_operator(model, 64), 0.7, f)
        shifted = semigroup_apply(free_operator(model, 64, constant_potential(2.0, model=model)), 0.7, f)
        assert np.allclose(shifted, math.exp(-1.4) * free, atol=1e-10)

    def test_semigroup_at_zero_is_identity(self):
        op = free_operator(circle(), 32)
        f = sample_section(op, cosine_section())
        assert np.array_equal(semigroup_apply(op, 0.0, f), f)

    def test_unsupported_models(self):
        with pytest.raises(DomainError):
            free_operator(sphere2(), 16)
        with pytest.raises(DomainError):
            free_operator(circle(), 4)
        with pytest.raises(ContractError):
            discretize(circle(), zero_connection(circle(), 2), zero_potential(model=circle()), 16)


class TestWave:
    def test_negative_spectrum_needs_shift(self):
        model = circle()
        op = free_operator(model, 64, constant_potential(-1.0, model=model))
        f = np.ones(64, dtype=complex)
        with pytest.raises(ContractError):
            wave_cosine(op, 1.0, f)
        shifted = with_shift(op)
        assert shifted.shift == pytest.approx(1.0)
        assert np.allclose(wave_cosine(shifted, 1.0, f), f, atol=1e-10)

    def test_eigenvector_oscillates(self):
        op = free_operator(circle(), 128)
        f = np.cos(op.grid[:, 0]).astype(complex)
        lam = eigenvalues(op, 2)[1]
        assert np.allclose(wave_cosine(op, 2.0, f), math.cos(2.0 * math.sqrt(lam)) * f, atol=1e-10)

    def test_finite_speed(self):
        model = circle()
        op = free_operator(model, 512)
        f = sample_section(op, bump_section([math.pi], 0.5, model=model))
        assert finite_speed_check(op, f, 0.0, [math.pi], 0.5, 0.0) == 0.0
        leak = finite_speed_check(op, f, 1.0, [math.pi], 0.5, 5 * op.spacing[0])
        assert leak < 1e-2
        with pytest.raises(PrecisionError):
            finite_speed_check(op, f, 1.0, [math.pi], 0.5, op.spacing[0])


class TestDaviesGaffney:
    def test_free_circle_bound(self):
        op = free_operator(circle(), 256)
        u1 = arc_nodes(op, 0.2, 0.7)
        u2 = arc_nodes(op, 1.7, 2.2)
        result = davies_gaffney_check(op, u1, u2, (0.05, 0.2, 1.0), samples=4)
        assert result.D == 0.0
        assert result.separation == pytest.approx(1.0, abs=2 * op.spacing[0])
        assert len(result.per_time) == 3
        assert result.worst_ratio <= 1.05
        assert result.random_ratio <= result.worst_ratio + 1e-12

    def test_negative_potential_sets_d(self):
        model = circle()
        op = free_operator(model, 128, cosine_potential(model, 0.0, 1.0))
        result = davies_gaffney_check(op, arc_nodes(op, 0.2, 0.7), arc_nodes(op, 1.7, 2.2), (0.1,), samples=0)
        assert result.D == pytest.approx(1.0, abs=1e-3)

    def test_ratio_falls_with_separation(self):
        op = free_operator(circle(), 256)
        u1 = arc_nodes(op, 0.2, 0.7)
        near = davies_gaffney_check(op, u1, arc_nodes(op, 1.2, 1.7), (0.1,), samples=0)
        far = davies_gaffney_check(op, u1, arc_nodes(op, 1.7, 2.2), (0.1,), samples=0)
        assert far.worst_ratio < near.worst_ratio

    def test_overlap_rejected(self):
        op = free_operator(circle(), 64)
        with pytest.raises(DomainError):
            davies_gaffney_check(op, [1, 2, 3], [3, 4], (0.1,))
        with pytest.raises(DomainError):
            davies_gaffney_check(op, [], [3, 4], (0.1,))

    @pytest.mark.slow
    def test_standard_sweep(self):
        worst, records = standard_davies_gaffney_sweep(256)
        assert worst <= 1.05
        assert len(records) == 2 * 3 * 4 * 5


class TestMollifiers:
    def test_constant_is_preserved(self):
        out = mollify(np.ones(64), 0.3, 0.1, periodic=True)
        assert np.allclose(out, 1.0, atol=1e-12)

    def test_sup_does_not_grow(self):
        f = np.random.default_rng(1).normal(size=(32, 32))
        out = mollify(f, 0.25, (0.1, 0.1), periodic=True)
        assert np.max(np.abs(out)) <= np.max(np.abs(f)) + 1e-12

    def test_radius_below_two_steps(self):
        with pytest.raises(PrecisionError):
            mollify(np.ones(10), 0.15, 0.1)

    def test_graph_norm_convergence(self):
        model = circle()
        op = free_operator(model, 256, cosine_potential(model, 1.0, 1.0))
        h = op.spacing[0]
        f = sample_section(op, bump_section([math.pi], 1.5, model=model))
        rows = graph_norm_convergence(op, f, [16 * h, 8 * h, 4 * h])
        for column in (1, 2, 3):
            values = [row[column] for row in rows]
            assert values[0] > values[1] > values[2]
        assert rows[-1][1] < rows[0][1] / 2


class TestConvergence:
    def test_truncation_converges(self):
        model = circle()
        rows = truncation_convergence(model, zero_connection(model), cosine_potential(model, 1.0, 1.0),
                                      (0.5, 1.0, 1.5, 3.0), 0.5, cosine_section(), nodes=128)
        errors = [err for _, err in rows]
        assert errors[0] > errors[1] > errors[2]
        assert errors[3] == pytest.approx(0.0, abs=1e-10)

    def test_second_order_ratio(self):
        model = circle()
        ratio = convergence_ratio(model, zero_connection(model), cosine_potential(model, 1.0, 1.0))
        assert 3.5 < ratio < 4.5

    def test_radial_hydrogen(self):
        assert radial_ground_energy(lambda r: -1.0 / r) == pytest.approx(-0.5, abs=2e-3)

    def test_oracle_agrees_with_monte_carlo(self):
        report = oracle_compare(2000, SamplerConfig(dt=1e-2, seed=2), times=(0.25,), points=3, nodes=128)
        assert len(report.records) == 3
        assert report.passed
        assert report.metadata["beta"] == 0.5

    @pytest.mark.slow
    def test_full_oracle_comparison(self):
        report = oracle_compare(200000, SamplerConfig(dt=1e-3, seed=1))
        assert report.passed
        assert len(report.records) == 30


class TestDumps:
    def test_operator_csv(self):
        op = free_operator(circle(), 8)
        stream = io.StringIO()
        assert dump_operator_csv(op, stream) == 24
        lines = stream.getvalue().splitlines()
        assert lines[0] == "i,j,re,im"
        assert len(lines) == 25

    def test_vector_csv(self):
        op = free_operator(circle(), 8)
        stream = io.StringIO()
        assert dump_vector_csv(op, sample_section(op, cosine_section()), stream) == 8
        assert stream.getvalue().splitlines()[0] == "x0,re0,im0"

    def test_eigen_table(self):
        table = eigen_table_json(free_operator(circle(), 64), count=3)
        assert set(table) == {"model", "rank", "nodes", "boundary", "spacing", "shift", "eigenvalues"}
        assert len(table["eigenvalues"]) == 3
        assert table["boundary"] == "periodic"
        json.dumps(table)
