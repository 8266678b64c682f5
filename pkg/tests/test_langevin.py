import math

import numpy as np
import pytest

from scoreflow.flowcore.langevin import (
    LangevinDiverged,
    LangevinSchedule,
    langevin_run,
    schedule_alpha,
    schedule_gamma,
)
from scoreflow.kernels import imq, phs, rbfg
from scoreflow.numkit import SeededPrng


class TestSchedule:
    def test_constant(self):
        s = LangevinSchedule(0.7, 10)
        assert all(schedule_alpha(s, t) == 0.7 for t in range(10))
        assert schedule_gamma(s, 3) == 0.0

    def test_geometric(self):
        s = LangevinSchedule(2.0, 10, decay="geometric", rho=0.99)
        assert schedule_alpha(s, 0) == 2.0
        assert schedule_alpha(s, 5) == pytest.approx(2.0 * 0.99**5, rel=1e-15)

    def test_noise_scale(self):
        s = LangevinSchedule(8.0, 3, noise="sqrt_two_alpha")
        assert schedule_gamma(s, 0) == 4.0

    def test_out_of_range(self):
        s = LangevinSchedule(1.0, 4)
        for t in (-1, 4):
            with pytest.raises(IndexError):
                schedule_alpha(s, t)

    @pytest.mark.parametrize("kw", [dict(alpha0=-1.0), dict(decay="linear"), dict(noise="pink"), dict(rho=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LangevinSchedule(**{"alpha0": 1.0, "steps": 3, **kw})


class TestRun:
    def test_zero_step_freezes(self, nprng):
        x0 = nprng.normal(size=(20, 2))
        res = langevin_run(x0, nprng.normal(size=(30, 2)), imq(), LangevinSchedule(0.0, 5), SeededPrng(0))
        np.testing.assert_array_equal(res.particles, x0)
        np.testing.assert_array_equal(res.step_sq, 0.0)

    def test_single_centre_unit_steps(self):
        # PHS k=1 in odd dimension has a unit-norm gradient field, so a lone particle walks
        # straight at the data centre by alpha per step.
        d = np.array([[1.0, -2.0, 0.5]])
        u = np.array([3.0, 4.0, 0.0]) / 5.0
        x0 = d + 5.3 * u
        dist = []
        res = langevin_run(x0, d, phs(1, 3), LangevinSchedule(1.0, 8), SeededPrng(0),
                           recorder=lambda t, x: dist.append(float(np.linalg.norm(x[0] - d[0]))))
        np.testing.assert_allclose(dist[:6], [5.3, 4.3, 3.3, 2.3, 1.3, 0.3], atol=1e-12)
        assert all(v <= 1.0 + 1e-12 for v in dist[5:])
        np.testing.assert_allclose(res.step_sq, 1.0, atol=1e-12)

    def test_deterministic_with_resampling_and_noise(self, nprng):
        x0 = nprng.normal(size=(15, 2))
        pool = nprng.normal(size=(40, 2)) + 1
        sched = LangevinSchedule(0.1, 6, noise="sqrt_two_alpha")
        a = langevin_run(x0, pool, rbfg(), sched, SeededPrng(4), batch_size=10)
        b = langevin_run(x0, pool, rbfg(), sched, SeededPrng(4), batch_size=10)
        np.testing.assert_array_equal(a.particles, b.particles)

    def test_mirror_symmetry_preserved(self, nprng):
        half = nprng.normal(size=(10, 2))
        x0 = np.vstack([half, half * [1, -1]])
        data_half = nprng.normal(size=(12, 2)) + [2.0, 0.0]
        pool = np.vstack([data_half, data_half * [1, -1]])
        res = langevin_run(x0, pool, phs(0, 2), LangevinSchedule(0.5, 20), SeededPrng(0), scale=0.1)
        top, bottom = res.particles[:10], res.particles[10:]
        np.testing.assert_allclose(bottom, top * [1, -1], atol=1e-12)

    def test_step_sq_and_snapshots(self, nprng):
        x0 = nprng.normal(size=(10, 2))
        pool = nprng.normal(size=(10, 2)) + 3
        seen = []
        res = langevin_run(x0, pool, imq(), LangevinSchedule(0.5, 6), SeededPrng(0),
                           recorder=lambda t, x: seen.append(x.copy()), snapshot_stride=3)
        for t in range(6):
            dx = seen[t + 1] - seen[t]
            assert res.step_sq[t] == pytest.approx(np.mean(np.sum(dx * dx, axis=1)), rel=1e-12)
        assert [t for t, _ in res.snapshots] == [0, 3, 6]
        np.testing.assert_array_equal(res.snapshots[-1][1], res.particles)

    def test_data_batch_without_replacement(self, nprng, monkeypatch):
        import scoreflow.flowcore.langevin as lv

        seen = []
        real = lv.DiscriminatorField

        def spy(centers, x, kernel, scale):
            seen.append(centers)
            return real(centers, x, kernel, scale)

        monkeypatch.setattr(lv, "DiscriminatorField", spy)
        pool = np.arange(40.0).reshape(20, 2)
        langevin_run(nprng.normal(size=(5, 2)), pool, imq(), LangevinSchedule(0.1, 3), SeededPrng(0), batch_size=8)
        assert len(seen) == 3
        for c in seen:
            assert c.shape == (8, 2) and len({tuple(r) for r in c}) == 8

    def test_gradient_explosion_aborts(self, nprng):
        with pytest.raises(LangevinDiverged) as info:
            langevin_run(nprng.normal(size=(5, 2)), nprng.normal(size=(5, 2)) + 2, phs(1, 2),
                         LangevinSchedule(1e308, 10), SeededPrng(0))
        assert 1 <= info.value.step <= 10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            langevin_run(np.zeros((3, 2)), np.zeros((3, 3)), imq(), LangevinSchedule(1.0, 1), SeededPrng(0))
