import math

import numpy as np
import pytest

from smdsr.baselines import LassoConfig, lambda_theory, lasso_cd, lasso_objective, soft_threshold, vanilla_smd
from smdsr.core import RngStream
from smdsr.models import make_sparse_instance
from smdsr.prox import l1_power
from smdsr.smd import StageConfig, run_stage
from smdsr.smd_sr import PracticalConfig, SmdSrConfig, run_smd_sr
from smdsr.sparsify import vanilla


def reference_lasso(phi, eta, lam, iters=200_000):
    """Proximal gradient (ISTA) with a fixed 1/L step: slow, independent oracle."""
    N = phi.shape[0]
    L = np.linalg.eigvalsh(phi.T @ phi / N).max()
    x = np.zeros(phi.shape[1])
    for _ in range(iters):
        x_new = soft_threshold(x - phi.T @ (phi @ x - eta) / (N * L), lam / L)
        if np.max(np.abs(x_new - x)) < 1e-15:
            return x_new
        x = x_new
    return x


class TestLambda:
    def test_example(self):
        assert lambda_theory(0.1, 50000, 10000) == pytest.approx(0.009304, abs=5e-7)
        assert lambda_theory(0.0, 10, 10) == 0.0
        assert lambda_theory(1.0, 10, 200) == pytest.approx(lambda_theory(1.0, 10, 100) / math.sqrt(2))

    def test_errors(self):
        with pytest.raises(ValueError):
            lambda_theory(1.0, 1, 10)
        with pytest.raises(ValueError):
            lambda_theory(1.0, 10, 0)
        with pytest.raises(ValueError):
            LassoConfig(-1.0)


class TestLassoCD:
    def test_orthonormal_least_squares(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(20, 5)))
        phi = q * math.sqrt(20)
        eta = rng.normal(size=20)
        x = lasso_cd(phi, eta, LassoConfig(0.0))
        assert np.allclose(x, np.linalg.lstsq(phi, eta, rcond=None)[0], atol=1e-8)

    def test_scalar_closed_form(self, rng):
        phi = rng.normal(size=(30, 1))
        eta = rng.normal(size=30)
        lam = 0.1
        x = lasso_cd(phi, eta, LassoConfig(lam))
        expected = soft_threshold(phi[:, 0] @ eta / 30, lam) / (phi[:, 0] @ phi[:, 0] / 30)
        assert x[0] == pytest.approx(expected)

    def test_matches_reference(self, rng):
        for _ in range(5):
            phi = rng.normal(size=(50, 5))
            eta = phi @ np.array([1.0, 0, -0.5, 0, 0]) + 0.3 * rng.normal(size=50)
            lam = 0.05
            x = lasso_cd(phi, eta, LassoConfig(lam, tol=1e-12))
            ref = reference_lasso(phi, eta, lam)
            assert lasso_objective(phi, eta, x, lam) == pytest.approx(lasso_objective(phi, eta, ref, lam), abs=1e-6)

    def test_kkt(self, rng):
        phi = rng.normal(size=(80, 30))
        eta = phi[:, :3] @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=80)
        cfg = LassoConfig(0.05, tol=1e-8)
        x = lasso_cd(phi, eta, cfg)
        grad = phi.T @ (eta - phi @ x) / 80
        on = x != 0
        assert np.all(np.abs(grad[on] - cfg.lam * np.sign(x[on])) <= 10 * cfg.tol * max(1, np.abs(x).max()) * 30)
        assert np.all(np.abs(grad[~on]) <= cfg.lam + 10 * cfg.tol * 30)

    def test_monotone_objective(self, rng):
        phi = rng.normal(size=(40, 60))
        eta = rng.normal(size=40)
        hist = []
        lasso_cd(phi, eta, LassoConfig(0.02), history=hist)
        assert len(hist) > 1
        assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))

    def test_zero_variance_column(self, rng):
        phi = rng.normal(size=(20, 3))
        phi[:, 1] = 0.0
        x = lasso_cd(phi, rng.normal(size=20), LassoConfig(0.01), x_init=np.array([0.0, 7.0, 0.0]))
        assert x[1] == 7.0

    def test_max_iters(self, rng):
        phi = rng.normal(size=(20, 10))
        hist = []
        lasso_cd(phi, rng.normal(size=20), LassoConfig(0.0, max_iters=3, tol=0.0), history=hist)
        assert len(hist) == 3

    def test_support_recovery(self):
        n, s, sigma = 500, 5, 0.1
        N = int(math.ceil(10 * s * math.log(n)))
        fracs = []
        for seed in range(20):
            m = make_sparse_instance(n, s, 1.0, 1.0, sigma, rng=RngStream(seed, 0).generator())
            phi, eta = m.sample(RngStream(seed, 1).generator(), N)
            x = lasso_cd(phi, eta, LassoConfig(lambda_theory(sigma, n, N)))
            sup = np.flatnonzero(m.x_star)
            fracs.append(np.mean(x[sup] != 0))
        assert np.median(fracs) >= 0.9


class TestVanillaSmd:
    def test_wrapper_matches_stage(self, noisy_glr):
        m = noisy_glr
        setup = l1_power(m.n)
        avg, tr = vanilla_smd(m, setup, 700, RngStream(1, 0).generator(), beta=1.5)
        ref = run_stage(m, setup, StageConfig(700, np.zeros(m.n), 1.5, "perSample"), RngStream(1, 0).generator())
        assert np.array_equal(avg, ref.average)
        assert list(tr.oracle_calls) == [0, 700]

    def test_checkpoints(self, noisy_glr):
        _, tr = vanilla_smd(noisy_glr, l1_power(noisy_glr.n), 100, 0, checkpoints=np.array([10, 50]))
        assert list(tr.oracle_calls) == [0, 10, 50, 100]

    def test_budget(self, noisy_glr):
        with pytest.raises(ValueError):
            vanilla_smd(noisy_glr, l1_power(noisy_glr.n), 0, 0)

    def test_same_accounting_as_smdsr(self, noisy_glr):
        m = noisy_glr
        N = 5000
        _, tr_v = vanilla_smd(m, l1_power(m.n), N, 0)
        cfg = SmdSrConfig(N, mode="practical", practical=PracticalConfig(m0_override=100))
        _, _, tr_s = run_smd_sr(m, l1_power(m.n), vanilla(m.n, m.s), cfg, 0)
        assert tr_v.oracle_calls[-1] == tr_s.oracle_calls[-1] == N

    def test_noiseless_sublinear_rate(self):
        # a small covariance floor keeps the problem far from strongly convex over the budget,
        # where the averaged iterate follows the worst-case 1/t rate
        slopes = []
        for seed in range(5):
            m = make_sparse_instance(50, 3, 0.01, 1.0, 0.0, rng=RngStream(seed, 0).generator())
            marks = np.unique(np.geomspace(100, 100_000, 30).astype(int))
            _, tr = vanilla_smd(m, l1_power(50), 100_000, RngStream(seed, 1).generator(), checkpoints=marks)
            gap = tr.metric("objective_gap")[1:]
            slopes.append(np.polyfit(np.log(tr.oracle_calls[1:]), np.log(gap), 1)[0])
        assert -1.2 <= np.median(slopes) <= -0.8

    def test_noiseless_gap_bound(self):
        # t * gap stays bounded for any conditioning
        m = make_sparse_instance(50, 3, 1.0, 1.0, 0.0, rng=RngStream(9, 0).generator())
        marks = np.unique(np.geomspace(100, 50_000, 20).astype(int))
        _, tr = vanilla_smd(m, l1_power(50), 50_000, RngStream(9, 1).generator(), checkpoints=marks)
        scaled = tr.oracle_calls[1:] * tr.metric("objective_gap")[1:]
        assert scaled[-1] <= scaled[0]
