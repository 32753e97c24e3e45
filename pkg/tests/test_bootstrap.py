"""Bootstrap thresholds (P1boot) and the double bootstrap (P2boot)."""

import math

import numpy as np
import pytest
from scipy import stats

from kmonotone.bootstrap import (
    BATCH_SIZE, boot_quantile_q, double_boot_u, resample_counts, test_p1boot, test_p2boot, u_grid,
)
from kmonotone.errors import DegenerateSupportError
from kmonotone.monotest import FreqSample, TestConfig, mc_quantile_q, run_test
from kmonotone.shape import lambda_threshold, poisson_dist

Z95 = stats.norm.ppf(0.05)
TWO_CELL = FreqSample.from_mapping({0: 500, 1: 500})


def batch_stream(seed, level, b):
    """The documented stream of batch ``b``: SeedSequence(seed) keyed by (level, b)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(level, b)))


def oracle_boot_q(s, k, alpha, reps, seed):
    """Loop re-implementation of the P1boot threshold."""
    f = s.counts / s.d
    tau = s.tau_hat
    mins = []
    for start in range(0, reps, BATCH_SIZE):
        rng = batch_stream(seed, 0, start // BATCH_SIZE)
        for row in rng.multinomial(s.d, f, size=min(BATCH_SIZE, reps - start)):
            diff = list(row / s.d - f) + [0.0] * k
            vals = [sum((-1) ** h * math.comb(k, h) * diff[j + h] for h in range(k + 1))
                    for j in range(tau)]
            mins.append(math.sqrt(s.d) * min(vals))
    mins.sort()
    return mins[math.ceil(alpha * reps) - 1]


class TestResampling:
    def test_totals_preserved(self):
        s = FreqSample.from_mapping({0: 7, 1: 5, 3: 2})
        c = resample_counts(s, 1000, seed=1)
        assert c.shape == (1000, 4)
        assert np.all(c.sum(axis=1) == s.d)

    def test_batches_independent_of_workers(self):
        s = FreqSample.from_mapping({0: 40, 1: 30, 2: 20, 3: 10})
        a = resample_counts(s, 1234, seed=3, workers=1)
        b = resample_counts(s, 1234, seed=3, workers=8)
        np.testing.assert_array_equal(a, b)


class TestBootQuantile:
    def test_two_cell_clt(self):
        q = boot_quantile_q(TWO_CELL, 1, 0.05, boot_reps=2000, seed=1)
        assert q == pytest.approx(Z95, abs=0.1)

    def test_degenerate(self):
        with pytest.raises(DegenerateSupportError):
            boot_quantile_q(FreqSample.from_mapping({3: 10}), 1, 0.05, seed=0)

    @pytest.mark.parametrize("k", [1, 2])
    def test_matches_loop_oracle(self, k):
        s = FreqSample.from_mapping({0: 9, 1: 6, 2: 3, 4: 2})
        got = boot_quantile_q(s, k, 0.05, boot_reps=600, seed=42)
        assert got == pytest.approx(oracle_boot_q(s, k, 0.05, 600, 42), abs=1e-12)

    def test_gaussian_limit(self):
        s = FreqSample.from_mapping({0: 2600, 1: 2400})
        q_boot = boot_quantile_q(s, 1, 0.05, boot_reps=4000, seed=5)
        q_mc = mc_quantile_q(s.frequencies(), 1, 0.05, B=10 ** 5, seed=5)
        assert abs(q_boot - q_mc) <= 0.15


class TestDoubleBootstrap:
    def test_grid(self):
        g = u_grid(0.05, 4)
        assert g[0] == pytest.approx(0.0125) and g[-1] == pytest.approx(0.05)
        assert len(g) == 50

    def test_single_constraint(self):
        u, nu = double_boot_u(TWO_CELL, 1, 0.05, 2000, 2000, seed=2)
        assert nu.shape == (1,)
        # single grid point collapses: alpha / tau = alpha
        assert u == pytest.approx(0.05)
        assert nu[0] == pytest.approx(Z95, abs=0.15)

    def test_matches_nested_loop_oracle(self):
        # small sample whose calibrated u falls strictly inside the grid
        s = FreqSample.from_mapping({0: 25, 1: 18, 2: 10, 3: 7})
        k, alpha, n1, n2, seed = 1, 0.05, 500, 400, 3
        u, nu = double_boot_u(s, k, alpha, n1, n2, seed=seed)

        f = s.counts / s.d
        tau = s.tau_hat
        A = np.array([[1.0 if c == j else -1.0 if c == j + 1 else 0.0 for c in range(tau + 1)]
                      for j in range(tau)])
        G = np.diag(f) - np.outer(f, f)
        zeta = np.sqrt(np.diag(A @ G @ A.T))

        def resamples(level, n):
            rows = []
            for start in range(0, n, BATCH_SIZE):
                rng = batch_stream(seed, level, start // BATCH_SIZE)
                rows.extend(rng.multinomial(s.d, f, size=min(BATCH_SIZE, n - start)))
            return [math.sqrt(s.d) * (A @ (r / s.d - f)) for r in rows]

        first = resamples(0, n1)
        second = resamples(1, n2)
        best = None
        for g in u_grid(alpha, tau):
            idx = math.ceil(g * n1) - 1
            nus = [sorted(v[j] / zeta[j] for v in first)[idx] for j in range(tau)]
            p = np.mean([min(v[j] - nus[j] * zeta[j] for j in range(tau)) <= 0 for v in second])
            if p <= alpha:
                best = (g, nus)
        assert best is not None and best[0] > alpha / tau
        assert u == pytest.approx(best[0], rel=1e-12)
        np.testing.assert_allclose(nu, best[1], rtol=1e-12)


class TestBootProcedures:
    def test_two_cell_rejects(self):
        s = FreqSample.from_mapping({0: 30, 1: 70})
        for proc in ("p1boot", "p2boot"):
            rep = run_test(s, TestConfig(k=1, procedure=proc, seed=4))
            assert rep.reject, proc

    def test_monotone_sample_accepts(self):
        s = FreqSample.from_mapping({0: 50, 1: 30, 2: 15, 3: 5})
        assert not test_p1boot(s, TestConfig(k=2, procedure="p1boot", seed=1)).reject
        assert not test_p2boot(s, TestConfig(k=2, procedure="p2boot", seed=1)).reject

    @pytest.mark.parametrize("proc", ["p1boot", "p2boot"])
    def test_deterministic_across_workers(self, proc):
        rng = np.random.default_rng(0)
        s = FreqSample(rng.multinomial(800, poisson_dist(0.6).masses))
        a = run_test(s, TestConfig(k=3, procedure=proc, seed=77, workers=1)).to_dict()
        b = run_test(s, TestConfig(k=3, procedure=proc, seed=77, workers=8)).to_dict()
        c = run_test(s, TestConfig(k=3, procedure=proc, seed=77, workers=1)).to_dict()
        assert a == b == c

    @pytest.mark.slow
    def test_rate_close_to_p1(self):
        # bootstrap and asymptotic calibration agree at d = 5000
        p = poisson_dist(lambda_threshold(2)).masses
        rng = np.random.default_rng(3)
        reps = 150
        rates = {"p1": 0, "p1boot": 0}
        for r in range(reps):
            s = FreqSample(rng.multinomial(5000, p))
            for proc in rates:
                rates[proc] += run_test(s, TestConfig(k=2, procedure=proc, seed=r, mc_reps=2000,
                                                      boot_reps=1000)).reject
        assert abs(rates["p1"] - rates["p1boot"]) / reps <= 0.04 + 2 * math.sqrt(0.05 * 0.95 / reps)
