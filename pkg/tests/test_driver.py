import numpy as np
import pytest

from conftest import accuracy, monotone, random_feasible, two_constant
from softms.driver import (RunConfig, initialize, run_pc_sms, run_sms,
                           update_means)
from softms.energy import ModelParams, mm_energy, pc_energy
from softms.supervision import Supervision


def config(model="full", k=2, **kw):
    return RunConfig(model=model, params=ModelParams(k=k), **kw)


class TestRunConfig:
    def test_model_validation(self):
        with pytest.raises(ValueError):
            RunConfig(model="nope")

    def test_tolerance_validation(self):
        with pytest.raises(ValueError):
            RunConfig(energy_tol=0.0)
        with pytest.raises(ValueError):
            RunConfig(max_outer=0)

    def test_init_validation(self):
        with pytest.raises(ValueError):
            RunConfig(init="magic")

    def test_model_runner_mismatch(self):
        img = np.full((8, 8), 0.5)
        with pytest.raises(ValueError):
            run_sms(img, config(model="pc"))
        with pytest.raises(ValueError):
            run_pc_sms(img, config(model="full"))


class TestUpdateMeans:
    def test_hard_indicators(self):
        img, _ = two_constant(16, noise=0.0)
        P = np.zeros((2, 16, 16))
        P[0, :, :8] = 1.0
        P[1, :, 8:] = 1.0
        m, dumb = update_means(P, img)
        assert np.allclose(m, [0.25, 0.75], atol=1e-14)
        assert not dumb.any()

    def test_uniform_ownership_gives_global_mean(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(12, 12))
        P = np.full((3, 12, 12), 1.0 / 3.0)
        m, _ = update_means(P, img)
        assert np.allclose(m, img.mean(), atol=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(9, 9))
        P = random_feasible(rng, 3, 9, 9)
        m, _ = update_means(P, img)
        for i in range(3):
            ref = (img * P[i]).sum() / P[i].sum()
            assert m[i] == pytest.approx(ref, abs=1e-12)

    def test_dumb_channel_zeroed(self):
        img = np.ones((8, 8))
        P = np.zeros((2, 8, 8))
        P[0] = 1.0
        m, dumb = update_means(P, img)
        assert m[1] == 0.0 and dumb[1] and not dumb[0]

    def test_color_means(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(3, 6, 6))
        P = random_feasible(rng, 2, 6, 6)
        m, _ = update_means(P, img)
        assert m.shape == (2, 3)


class TestInitialize:
    def test_quantile_two_valued(self):
        img, _ = two_constant(16, noise=0.0, lo=0.0, hi=1.0)
        P0, _, m0 = initialize(img, config(model="pc"))
        assert np.array_equal(m0, [0.0, 1.0])
        assert np.all(P0 >= 0)
        assert np.max(np.abs(P0.sum(axis=0) - 1.0)) <= 1e-12

    def test_supervision_pixels_exact(self):
        img, _ = two_constant(16)
        sup = Supervision.from_dict({"patches": [
            {"channel": 1, "x": 0, "y": 0, "w": 4, "h": 4}]})
        P0, _, _ = initialize(img, config(), sup)
        assert np.all(P0[0, :4, :4] == 1.0)
        assert np.all(P0[1, :4, :4] == 0.0)

    def test_seed_determinism(self):
        img, _ = two_constant(16)
        a, _, _ = initialize(img, config(seed=42))
        b, _, _ = initialize(img, config(seed=42))
        c, _, _ = initialize(img, config(seed=43))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_uniform_mode(self):
        img, _ = two_constant(16)
        P0, U0, _ = initialize(img, config(init="uniform"))
        assert np.max(np.abs(P0 - 0.5)) <= 5e-3
        assert U0.shape == (2, 16, 16)

    def test_supplied_mode(self):
        img, _ = two_constant(16)
        P = random_feasible(np.random.default_rng(3), 2, 16, 16)
        cfg = config(init="supplied", init_ownerships=P)
        P0, U0, _ = initialize(img, cfg)
        assert np.array_equal(P0, P)
        with pytest.raises(ValueError):
            initialize(img, config(init="supplied"))


class TestFullModel:
    def test_constant_image(self):
        img = np.full((24, 24), 0.6)
        cfg = config()
        P0, U0, _ = initialize(img, cfg)
        init_mm = sum(mm_energy(p, cfg.params.epsilon) for p in P0)
        res = run_sms(img, cfg)
        assert res.trace.converged
        assert res.trace.converged_at <= 2
        last = res.trace.rows[-1].energy
        assert last.data_term + last.sobolev_term <= 1e-8
        assert last.total <= init_mm + 1e-9 * init_mm

    def test_two_constant_monotone(self):
        img, _ = two_constant(48)
        res = run_sms(img, config())
        assert res.trace.converged
        assert monotone(res.trace.totals)
        assert res.patterns.shape == (2, 48, 48)

    def test_determinism(self):
        img, _ = two_constant(24)
        a = run_sms(img, config(seed=7))
        b = run_sms(img, config(seed=7))
        # wall-clock column aside, traces and iterates are bit-identical
        assert a.trace.totals == b.trace.totals
        assert np.array_equal(a.ownerships, b.ownerships)
        assert np.array_equal(a.patterns, b.patterns)

    def test_order_switch(self):
        img, _ = two_constant(24)
        res = run_sms(img, config(order="u_first"))
        assert monotone(res.trace.totals)


class TestPiecewiseModel:
    def test_noiseless_two_value_means(self):
        # strong fidelity and a narrow band polarize the ownerships fully,
        # so the weighted means hit the two image values exactly
        img, _ = two_constant(32, noise=0.0, lo=0.2, hi=0.9)
        cfg = RunConfig(model="pc",
                        params=ModelParams(k=2, lam=50.0, epsilon=0.5))
        res = run_pc_sms(img, cfg)
        assert np.allclose(np.sort(res.means), [0.2, 0.9], atol=1e-6)

    def test_recovery(self):
        img, gt = two_constant(64)
        res = run_pc_sms(img, config(model="pc"))
        assert accuracy(res.labels, gt) >= 0.99

    def test_symmetrized_z_energy_identity(self):
        # K=2 in the symmetrized variable z: p = ((1-z)/2, (1+z)/2)
        rng = np.random.default_rng(4)
        img = rng.uniform(size=(10, 10))
        z = rng.uniform(-1, 1, size=(10, 10))
        P = np.stack([(1 - z) / 2, (1 + z) / 2])
        m = [0.3, 0.7]
        params = ModelParams(k=2)
        bd = pc_energy(P, m, img, params)
        data = params.lam * np.sum((m[0] - img) ** 2 * (1 - z) / 2
                                   + (m[1] - img) ** 2 * (1 + z) / 2)
        mm = 2 * mm_energy((1 - z) / 2, params.epsilon)
        assert bd.data_term == pytest.approx(data, rel=1e-12)
        assert bd.mm_term == pytest.approx(mm, rel=1e-12)

    def test_monotone_on_textured_image(self):
        rng = np.random.default_rng(5)
        x, y = np.meshgrid(np.linspace(0, 3, 48), np.linspace(0, 2, 48))
        img = np.clip(0.5 + 0.3 * np.sin(2 * x + y) +
                      0.05 * rng.standard_normal((48, 48)), 0, 1)
        res = run_pc_sms(img, config(model="pc"))
        assert monotone(res.trace.totals)

    def test_color_image(self):
        rng = np.random.default_rng(6)
        img = np.zeros((3, 24, 24))
        img[:, :, 12:] = np.array([0.8, 0.2, 0.1])[:, None, None]
        img[:, :, :12] = np.array([0.1, 0.6, 0.9])[:, None, None]
        img = np.clip(img + 0.03 * rng.standard_normal(img.shape), 0, 1)
        res = run_pc_sms(img, config(model="pc"))
        assert res.means.shape == (2, 3)
        assert monotone(res.trace.totals)


class TestSupervisionHandling:
    def test_persistence_bit_exact(self):
        img, _ = two_constant(32)
        sup = Supervision.from_dict({"patches": [
            {"channel": 1, "x": 2, "y": 2, "w": 6, "h": 6},
            {"channel": 2, "x": 24, "y": 24, "w": 6, "h": 6}]})
        res = run_pc_sms(img, config(model="pc"), sup)
        fixed, values = sup.masks(2, img.shape)
        for i in range(2):
            assert np.array_equal(res.ownerships[i][fixed], values[i][fixed])

    def test_permuted_supervision_permutes_labels(self):
        img, _ = two_constant(32)
        base = {"patches": [
            {"channel": 1, "x": 2, "y": 2, "w": 6, "h": 6},
            {"channel": 2, "x": 24, "y": 24, "w": 6, "h": 6}]}
        swapped = {"patches": [
            {"channel": 2, "x": 2, "y": 2, "w": 6, "h": 6},
            {"channel": 1, "x": 24, "y": 24, "w": 6, "h": 6}]}
        a = run_pc_sms(img, config(model="pc"), Supervision.from_dict(base))
        b = run_pc_sms(img, config(model="pc"), Supervision.from_dict(swapped))
        assert np.array_equal(a.labels, 3 - b.labels)

    def test_invalid_supervision_rejected(self):
        img, _ = two_constant(16)
        sup = Supervision.from_dict({"patches": [
            {"channel": 1, "x": 0, "y": 0, "w": 99, "h": 2}]})
        with pytest.raises(Exception):
            run_pc_sms(img, config(model="pc"), sup)


class TestTrace:
    def test_csv_layout(self):
        img, _ = two_constant(24)
        res = run_pc_sms(img, config(model="pc"))
        lines = res.trace.to_csv().strip().splitlines()
        assert lines[0] == "iter,data,sobolev,mm,total,max_dp,ms"
        assert len(lines) == len(res.trace.rows) + 1
        first = lines[1].split(",")
        assert int(first[0]) == 1
        assert float(first[4]) == pytest.approx(res.trace.rows[0].energy.total)

    def test_residuals_recorded(self):
        img, _ = two_constant(24)
        res = run_pc_sms(img, config(model="pc"))
        assert np.isfinite(res.trace.pattern_residual)
        assert np.isfinite(res.trace.ownership_residual)
        assert res.trace.dumb == [False, False]
