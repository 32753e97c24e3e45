"""Finite differences, spline basis, decomposition and abundance construction."""

from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kmonotone.errors import InvalidArgumentError, InvalidConstructionError, NotKMonotoneError
from kmonotone.shape import (
    DiscreteDist, SplineMixture, binom, decompose, is_k_monotone, lambda_threshold,
    make_abundance, mixture_dist, nabla, nabla_vector, poisson_dist, recompose, shift_up,
    spline_masses, spline_pmf, spline_pmf_exact,
)


def direct_nabla(seq, k, j):
    """Independent oracle: recursive first differences with zero padding."""
    ext = list(seq) + [0.0] * (k + 1)
    for _ in range(k):
        ext = [ext[i] - ext[i + 1] for i in range(len(ext) - 1)]
    return ext[j]


def direct_spline(k, ell, j):
    if j > ell:
        return Fraction(0)
    return Fraction(math.comb(k - 1 + ell - j, k - 1), math.comb(k + ell, k))


@st.composite
def spline_mixtures(draw, max_k=6, max_tau=30):
    k = draw(st.integers(1, max_k))
    knots = draw(st.lists(st.integers(0, max_tau), min_size=1, max_size=5, unique=True))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=len(knots), max_size=len(knots)))
    w = np.array(raw) / sum(raw)
    return k, dict(zip(knots, w))


class TestNabla:
    def test_constant_sequence(self):
        assert nabla([0.2, 0.2, 0.2], 1, 0) == 0.0

    def test_padding(self):
        seq = [0.5, 0.3, 0.2]
        assert nabla(seq, 2, 0) == pytest.approx(0.1, abs=1e-15)
        assert nabla(seq, 2, 1) == pytest.approx(-0.1, abs=1e-15)

    def test_q21_at_one(self):
        assert nabla([2 / 3, 1 / 3], 2, 1) == pytest.approx(1 / 3, abs=1e-15)

    def test_index_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            nabla([0.5, 0.5], 1, 3)
        with pytest.raises(InvalidArgumentError):
            nabla([0.5, 0.5], 0, 0)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=15), st.integers(1, 7))
    def test_matches_recursive_differences(self, seq, k):
        vec = nabla_vector(seq, k, len(seq))
        for j in range(len(seq)):
            assert vec[j] == pytest.approx(direct_nabla(seq, k, j), abs=1e-9)


class TestBinomials:
    def test_exact_when_small(self):
        assert binom(10, 3) == 120.0

    def test_large_arguments_do_not_overflow(self):
        # C(606, 6): the microbiome-sized case mentioned in the docs
        assert binom(606, 6) == pytest.approx(math.comb(606, 6), rel=1e-15)

    def test_unrepresentable(self):
        with pytest.raises(InvalidArgumentError):
            binom(5000, 2500)


class TestSplinePmf:
    def test_uniform_for_k1(self):
        np.testing.assert_allclose(spline_pmf(1, 2).masses, [1 / 3] * 3, atol=1e-15)

    def test_k2_ell1(self):
        np.testing.assert_allclose(spline_pmf(2, 1).masses, [2 / 3, 1 / 3], atol=1e-15)

    def test_dirac_at_zero(self):
        assert spline_pmf(3, 0).masses.tolist() == [1.0]

    @pytest.mark.parametrize("k,ell", [(1, 0), (2, 5), (3, 15), (6, 30), (4, 1)])
    def test_exact_sum_and_differences(self, k, ell):
        exact = spline_pmf_exact(k, ell)
        assert sum(exact) == 1
        assert exact == [direct_spline(k, ell, j) for j in range(ell + 1)]
        ext = exact + [Fraction(0)] * (k + 1)
        for j in range(ell + 2):
            d = sum((-1) ** h * math.comb(k, h) * ext[j + h] for h in range(k + 1))
            assert d == (Fraction(1, math.comb(k + ell, k)) if j == ell else 0)

    def test_masses_padded(self):
        m = spline_masses(2, 1, length=5)
        assert len(m) == 5 and m[2:].sum() == 0.0

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            spline_pmf(0, 3)
        with pytest.raises(InvalidArgumentError):
            spline_pmf(2, -1)


class TestDiscreteDist:
    def test_trims_trailing_zeros(self):
        p = DiscreteDist([0.5, 0.5, 0.0, 0.0])
        assert p.tau == 1

    def test_rejects_bad_masses(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteDist([0.6, 0.6])
        with pytest.raises(InvalidArgumentError):
            DiscreteDist([1.2, -0.2])

    def test_immutable(self):
        p = DiscreteDist([0.25, 0.75])
        with pytest.raises(ValueError):
            p.masses[0] = 0.5


class TestDecomposition:
    def test_basis_element(self):
        assert decompose(spline_pmf(2, 3), 2).weights == pytest.approx({3: 1.0})

    def test_two_component_mixture(self):
        p = mixture_dist(2, [(1, 0.5), (3, 0.5)])
        m = decompose(p, 2)
        assert set(m.weights) == {1, 3}
        assert m.weights[1] == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(recompose(m).masses, p.masses, atol=1e-12)

    def test_not_k_monotone(self):
        with pytest.raises(NotKMonotoneError) as exc:
            decompose(DiscreteDist([0.5, 0.3, 0.2]), 2)
        assert exc.value.indices == [1]

    def test_recompose_against_direct_sum(self):
        p = recompose(SplineMixture(2, {1: 0.5, 15: 0.5}))
        oracle = [float(Fraction(1, 2) * (direct_spline(2, 1, j) + direct_spline(2, 15, j)))
                  for j in range(16)]
        np.testing.assert_allclose(p.masses, oracle, atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(spline_mixtures())
    def test_round_trips(self, km):
        k, w = km
        p = recompose(SplineMixture(k, w))
        m = decompose(p, k)
        for ell, wt in w.items():
            assert m.weights.get(ell, 0.0) == pytest.approx(wt, abs=1e-10)
        assert sum(m.weights.values()) == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(recompose(m).masses, p.masses, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(spline_mixtures(max_k=5))
    def test_lower_orders_are_strict(self, km):
        # a k-monotone pmf is strictly l-monotone for l < k wherever it has mass left
        k, w = km
        if k < 2:
            return
        p = recompose(SplineMixture(k, w)).masses
        for ell in range(1, k):
            d = nabla_vector(p, ell, len(p) - 1)
            assert np.all(d > 0)


class TestIsKMonotone:
    def test_uniform_is_monotone(self):
        ok, bad = is_k_monotone(DiscreteDist([1 / 6] * 6), 1)
        assert ok and bad == []

    def test_uniform_is_not_convex(self):
        ok, bad = is_k_monotone(DiscreteDist([1 / 6] * 6), 2)
        assert not ok and bad == [4]

    @pytest.mark.parametrize("k,ell", [(1, 4), (2, 7), (5, 3), (6, 20)])
    def test_basis_elements(self, k, ell):
        assert is_k_monotone(spline_pmf(k, ell), k)[0]


class TestMakeAbundance:
    def test_k1_example(self):
        p = make_abundance(DiscreteDist([0, 0.5, 0.3, 0.2]), 1)
        np.testing.assert_allclose(p.masses, [1 / 3, 1 / 3, 0.2, 2 / 15], atol=1e-15)
        assert abs(nabla(p.masses, 1, 0)) <= 1e-12

    @pytest.mark.parametrize("k,ell", [(1, 3), (2, 6), (3, 10), (4, 15)])
    def test_shifted_spline(self, k, ell):
        p = make_abundance(shift_up(spline_pmf(k, ell)), k)
        assert abs(nabla(p.masses, k, 0)) <= 1e-12

    def test_no_mass_at_one(self):
        plus = DiscreteDist([0, 0, 0.5, 0.5])
        p = make_abundance(plus, 1)
        assert p.pmf(0) == 0.0
        np.testing.assert_array_equal(p.masses, plus.masses)

    def test_p0_increases_with_k(self):
        # shifted Poisson(0.3) is strictly 3-monotone
        plus = shift_up(poisson_dist(0.3))
        p0 = [make_abundance(plus, k).pmf(0) for k in (1, 2, 3, 4)]
        assert all(a < b for a, b in zip(p0, p0[1:]))

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            make_abundance(DiscreteDist([0.5, 0.5]), 1)
        with pytest.raises(InvalidConstructionError):
            make_abundance(DiscreteDist([0, 0.1, 0.9]), 2)


class TestPoisson:
    def test_renormalised(self):
        p = poisson_dist(0.5857)
        assert p.masses.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("h,expected", [(1, 1.0), (2, 0.5857), (10, 0.1377)])
    def test_lambda_thresholds(self, h, expected):
        # published thresholds, truncated to 4 decimals
        assert lambda_threshold(h, tol=1e-9) == pytest.approx(expected, abs=5e-4)

    def test_lambda_h2_closed_form(self):
        # the binding constraint is j = 0: 1 - 2 lam + lam^2 / 2 >= 0
        assert lambda_threshold(2, tol=1e-10) == pytest.approx(2 - math.sqrt(2), abs=1e-9)

    def test_strictly_decreasing_with_loglog_slope(self):
        # the published fit 0.12 - 0.92 log(h) is over h = 1..30
        lam = np.array([lambda_threshold(h, tol=1e-8) for h in range(1, 31)])
        assert np.all(np.diff(lam) < 0)
        slope, intercept = np.polyfit(np.log(np.arange(1, 31)), np.log(lam), 1)
        assert slope == pytest.approx(-0.92, abs=0.05)
        assert intercept == pytest.approx(0.12, abs=0.05)

    def test_lambda_h0_is_not_defined(self):
        with pytest.raises(InvalidArgumentError):
            lambda_threshold(0)
