import io
import math

import numpy as np
import pytest

from core.bundle import abelian_connection, smooth_connection
from core.geometry import circle, euclidean, flat_torus, interval_absorbing, survival_exact
from core.stochastic_paths import (
    DUMP_HEADER,
    SamplerConfig,
    attach_transport,
    dump_paths,
    final_state,
    load_paths,
    path_rng,
    sample_path,
    sample_paths,
    slice_path,
    survival_probability,
    time_grid,
    walk_batch,
)
from utils.validators import ContractError, DomainError


@pytest.fixture
def cfg():
    return SamplerConfig(dt=1e-2, seed=7)


class TestGrid:
    def test_last_step_is_shortened(self):
        assert np.allclose(time_grid(1.0, 0.3), [0.0, 0.3, 0.6, 0.9, 1.0])

    def test_exact_multiple(self):
        grid = time_grid(1.0, 0.25)
        assert len(grid) == 5
        assert grid[-1] == 1.0

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            time_grid(0.0, 0.1)
        with pytest.raises(DomainError):
            SamplerConfig(dt=-1.0)
        with pytest.raises(DomainError):
            SamplerConfig(scheme="euler")


class TestDeterminism:
    def test_same_index_same_stream(self):
        a = path_rng(3, 12).standard_normal(5)
        b = path_rng(3, 12).standard_normal(5)
        c = path_rng(3, 13).standard_normal(5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_path_independent_of_batch(self, cfg):
        alone = sample_path(euclidean(2), [0.0, 0.0], 0.5, cfg, 3)
        batch = final_state(euclidean(2), [0.0, 0.0], 0.5, cfg, [1, 2, 3, 4])
        assert np.array_equal(alone.points[-1], batch.points[2])

    def test_independent_of_chunk_boundaries(self):
        # 300 pasos cruzan el borde de un bloque de ruido
        cfg = SamplerConfig(dt=1.0 / 300, seed=1)
        long = sample_path(euclidean(1), 0.0, 1.0, cfg, 0)
        states = list(walk_batch(euclidean(1), 0.0, 1.0, cfg, [5, 0]))
        assert np.array_equal(long.points[:, 0], np.array([s.points[1, 0] for s in states]))

    def test_sample_paths_are_consecutive(self, cfg):
        paths = sample_paths(circle(), 1.0, 0.2, cfg, 3, first_index=10)
        assert [p.path_index for p in paths] == [10, 11, 12]
        assert np.array_equal(paths[1].points, sample_path(circle(), 1.0, 0.2, cfg, 11).points)


class TestDistribution:
    def test_brownian_variance(self, cfg):
        state = final_state(euclidean(1), 0.0, 1.0, cfg, np.arange(5000))
        assert abs(state.points.mean()) < 0.06
        assert state.points.var() == pytest.approx(1.0, abs=0.1)

    def test_circle_points_stay_in_chart(self, cfg):
        state = final_state(circle(), 0.1, 3.0, cfg, np.arange(200))
        assert np.all((state.points >= 0.0) & (state.points < 2 * math.pi))

    def test_interval_survival_matches_series(self):
        model = interval_absorbing()
        cfg = SamplerConfig(dt=2e-3, seed=11)
        est = survival_probability(model, math.pi / 2, 1.0, 4000, cfg)
        exact = float(survival_exact(model, math.pi / 2, 1.0))
        assert est.value == pytest.approx(exact, abs=0.04)
        assert est.stderr == pytest.approx(math.sqrt(est.value * (1 - est.value) / 4000))

    def test_complete_model_survives(self, cfg):
        est = survival_probability(circle(), 1.0, 1.0, 100, cfg)
        assert (est.value, est.stderr) == (1.0, 0.0)

    def test_survival_needs_enough_paths(self, cfg):
        with pytest.raises(DomainError):
            survival_probability(interval_absorbing(), 1.0, 1.0, 50, cfg)

    def test_dead_paths_are_frozen(self, cfg):
        model = interval_absorbing(1.0)
        path = sample_path(model, 0.5, 3.0, cfg, 0)
        assert not path.alive
        frozen = path.points[path.exit_index:]
        assert np.all(frozen == frozen[0])
        assert frozen[0, 0] in (0.0, 1.0)

    def test_start_must_be_interior(self, cfg):
        with pytest.raises(DomainError):
            sample_path(interval_absorbing(), 0.0, 1.0, cfg, 0)


class TestTransport:
    def test_batch_frames_match_attached_transport(self, cfg):
        model = flat_torus(1.0, 1.0)
        spec = smooth_connection(model, rank=2, seed=3)
        path = attach_transport(sample_path(model, [0.2, 0.4], 0.3, cfg, 6), spec)
        state = final_state(model, [0.2, 0.4], 0.3, cfg, [6], spec)
        assert np.allclose(path.transports[-1], state.transports[0], atol=1e-12)

    def test_abelian_phase_follows_displacement(self, cfg):
        model = circle()
        spec = abelian_connection(model, 0.3)
        path = attach_transport(sample_path(model, 1.0, 0.5, cfg, 2), spec)
        steps = np.diff(path.points[:, 0])
        steps = np.mod(steps + math.pi, 2 * math.pi) - math.pi
        expected = np.exp(-0.3j * np.sum(steps))
        assert complex(path.transports[-1, 0, 0]) == pytest.approx(expected, abs=1e-10)

    def test_bundle_must_share_base(self, cfg):
        path = sample_path(circle(), 1.0, 0.1, cfg, 0)
        with pytest.raises(ContractError):
            attach_transport(path, abelian_connection(circle(3.0), 0.3))

    def test_slice_rebases_transport(self, cfg):
        model = flat_torus(1.0, 1.0)
        spec = smooth_connection(model, rank=2, seed=3)
        path = attach_transport(sample_path(model, [0.2, 0.4], 0.3, cfg, 1), spec)
        part = slice_path(path, 10, 20)
        assert part.times[0] == 0.0
        assert np.allclose(part.transports[0], np.eye(2))
        assert np.allclose(part.transports[-1] @ path.transports[10], path.transports[20])
        with pytest.raises(DomainError):
            slice_path(path, 20, 10)


class TestDump:
    def test_dump_layout_and_reload(self, cfg):
        model = flat_torus(1.0, 1.0)
        paths = sample_paths(model, [0.5, 0.5], 0.05, cfg, 2)
        buffer = io.BytesIO()
        written = dump_paths(paths, buffer)
        assert written == 2 * (DUMP_HEADER.size + 6 * 2 * 8)
        buffer.seek(0)
        loaded = load_paths(buffer, model)
        assert [p.path_index for p in loaded] == [0, 1]
        assert np.array_equal(loaded[1].points, paths[1].points)
        assert loaded[0].dt == cfg.dt

    def test_truncated_dump(self, cfg):
        paths = sample_paths(circle(), 1.0, 0.05, cfg, 1)
        buffer = io.BytesIO()
        dump_paths(paths, buffer)
        with pytest.raises(DomainError):
            load_paths(io.BytesIO(buffer.getvalue()[:-3]), circle())

    def test_dimension_mismatch(self, cfg):
        buffer = io.BytesIO()
        dump_paths(sample_paths(circle(), 1.0, 0.05, cfg, 1), buffer)
        buffer.seek(0)
        with pytest.raises(ContractError):
            load_paths(buffer, flat_torus(1.0, 1.0))
