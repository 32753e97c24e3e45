"""Least-squares projection onto k-monotone pmfs by support reduction."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kmonotone.errors import InvalidArgumentError, SolverError
from kmonotone.projection import project_k_monotone, spline_basis
from kmonotone.shape import is_k_monotone, mixture_dist, spline_masses

from _oracles import difference_operator, ls_qp_oracle, padded


def random_instances(n_inst, seed=5, max_support=6, max_k=3):
    rng = np.random.default_rng(seed)
    for _ in range(n_inst):
        n = int(rng.integers(1, max_support + 1))
        k = int(rng.integers(1, max_k + 1))
        f = rng.random(n)
        yield f / f.sum(), k


class TestBasis:
    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_columns_are_splines(self, k):
        B = spline_basis(k, 12)
        for ell in range(13):
            np.testing.assert_allclose(B[:, ell], spline_masses(k, ell, 13), rtol=1e-14, atol=1e-300)


class TestExamples:
    def test_pool_adjacent_violators(self):
        r = project_k_monotone([0.2, 0.5, 0.3], 1)
        np.testing.assert_allclose(r.q, [0.35, 0.35, 0.3], atol=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_idempotent_on_k_monotone(self, k):
        p = mixture_dist(k, [(2, 0.3), (5, 0.7)]).masses
        r = project_k_monotone(p, k)
        m = max(len(p), len(r.q))
        np.testing.assert_allclose(padded(r.q, m), padded(p, m), atol=1e-10)

    def test_point_mass(self):
        r = project_k_monotone([1.0], 3)
        np.testing.assert_allclose(r.q, [1.0], atol=1e-12)

    def test_invalid_input(self):
        with pytest.raises(InvalidArgumentError):
            project_k_monotone([0.5, 0.6], 1)
        with pytest.raises(InvalidArgumentError):
            project_k_monotone([1.5, -0.5], 1)
        with pytest.raises(InvalidArgumentError):
            project_k_monotone([1.0], 0)

    def test_iteration_cap(self):
        f = np.array([0.05, 0.1, 0.3, 0.05, 0.3, 0.2])
        with pytest.raises(SolverError) as exc:
            project_k_monotone(f, 3, max_iter=1)
        assert exc.value.best is not None


class TestAgainstQPOracle:
    @pytest.mark.parametrize("f,k", list(random_instances(40, seed=11)))
    def test_matches(self, f, k):
        r = project_k_monotone(f, k)
        oracle = ls_qp_oracle(f, k)
        assert np.linalg.norm(padded(r.q, len(oracle)) - oracle) <= 1e-8


class TestOptimality:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 10 ** 6))
    def test_kkt_certificate(self, n, k, seed):
        f = np.random.default_rng(seed).dirichlet(np.ones(n))
        r = project_k_monotone(f, k, eps=1e-10)
        L = r.basis_size
        B = spline_basis(k, L)
        pi = np.zeros(L + 1)
        for ell, w in r.weights.items():
            pi[ell] = w
        q = B @ pi
        g = B.T @ (q - padded(f, L + 1))
        dd = g - pi @ g
        assert dd.min() >= -1e-9
        active = list(r.weights)
        assert np.abs(dd[active]).max() <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 10 ** 6))
    def test_output_is_k_monotone_pmf(self, n, k, seed):
        f = np.random.default_rng(seed).dirichlet(np.ones(n))
        r = project_k_monotone(f, k)
        assert r.q.sum() == pytest.approx(1.0, abs=1e-8)
        assert is_k_monotone(r.q, k, tol=1e-10)[0]

    def test_marshall_inequality(self):
        """The projection is closer than f to every k-monotone pmf."""
        rng = np.random.default_rng(2)
        for _ in range(200):
            k = int(rng.integers(1, 4))
            n = int(rng.integers(1, 9))
            f = rng.dirichlet(np.ones(n))
            knots = rng.choice(8, size=int(rng.integers(1, 4)), replace=False)
            w = rng.dirichlet(np.ones(len(knots)))
            q = mixture_dist(k, list(zip(knots.tolist(), w.tolist()))).masses
            pt = project_k_monotone(f, k).q
            m = max(len(pt), len(q), n)
            assert np.linalg.norm(padded(pt, m) - padded(q, m)) <= np.linalg.norm(padded(f, m) - padded(q, m)) + 1e-12

    def test_kkt_in_sequence_space(self):
        # independent check of feasibility with the oracle's own difference operator
        f = np.array([0.1, 0.4, 0.1, 0.4])
        r = project_k_monotone(f, 2)
        q = padded(r.q, 40)
        assert (difference_operator(2, 39) @ q).min() >= -1e-12
