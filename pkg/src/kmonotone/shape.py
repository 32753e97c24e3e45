"""Finite differences, spline bases and k-monotone shape primitives.

Every distribution here lives on a finite support ``{0, ..., tau}`` and is
zero-padded beyond ``tau`` whenever a difference reaches past the end.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np
from scipy import stats

from .errors import InvalidArgumentError, InvalidConstructionError, NotKMonotoneError

POISSON_TAIL = 1e-12
# weights below this are rounding noise of an exact zero difference
_WEIGHT_NOISE = 1e-13


def binom_exact(n, k):
    return math.comb(n, k)


def binom(n, k):
    """``C(n, k)`` as a float, computed from the exact integer value."""
    try:
        return float(math.comb(n, k))
    except OverflowError:
        raise InvalidArgumentError(f"C({n}, {k}) exceeds the float range") from None


def difference_coefficients(k):
    """Signed coefficients ``(-1)^h C(k, h)`` for ``h = 0..k``."""
    return np.array([(-1) ** h * math.comb(k, h) for h in range(k + 1)], dtype=float)


def nabla_vector(seq, k, n=None):
    """Vector of ``nabla^k seq_j`` for ``j = 0..n-1`` (default ``n = len(seq)``).

    Entries beyond the end of ``seq`` are treated as zero.
    """
    seq = np.asarray(seq, dtype=float)
    if n is None:
        n = len(seq)
    padded = np.zeros(n + k)
    m = min(len(seq), n + k)
    padded[:m] = seq[:m]
    coef = difference_coefficients(k)
    out = np.zeros(n)
    for h, c in enumerate(coef):
        out += c * padded[h:h + n]
    return out


def nabla(seq, k, j):
    """k-th alternating difference ``sum_h (-1)^h C(k, h) seq_{j+h}``.

    Parameters
    ----------
    seq : sequence of float
        Values ``seq_0..seq_tau``; indices past ``tau`` count as zero.
    k : int
        Order, ``k >= 1``.
    j : int
        Index in ``[0, tau]`` (at ``j = tau`` only ``seq_tau`` contributes).
    """
    seq = np.asarray(seq, dtype=float)
    tau = len(seq) - 1
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if not 0 <= j <= tau:
        raise InvalidArgumentError(f"j must lie in [0, {tau}], got {j}")
    if not np.all(np.isfinite(seq)):
        raise InvalidArgumentError("sequence entries must be finite")
    return float(nabla_vector(seq, k, j + 1)[j])


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability mass function on ``{0, ..., tau}``.

    Trailing zero masses are trimmed, so ``masses[tau] > 0`` always holds.
    """

    masses: np.ndarray
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).ravel()
        if m.size == 0 or not np.all(np.isfinite(m)):
            raise InvalidArgumentError("masses must be a non-empty finite vector")
        if np.any(m < 0):
            raise InvalidArgumentError("masses must be nonnegative")
        if abs(m.sum() - 1.0) > self.tol:
            raise InvalidArgumentError(f"masses sum to {m.sum()!r}, not 1")
        nz = np.flatnonzero(m)
        if nz.size == 0:
            raise InvalidArgumentError("masses are all zero")
        m = m[:nz[-1] + 1]
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_weights(cls, weights):
        """Normalise nonnegative ``weights`` into a pmf."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvalidArgumentError("weights must be nonnegative with positive sum")
        return cls(w / w.sum())

    @property
    def tau(self):
        return len(self.masses) - 1

    def __len__(self):
        return len(self.masses)

    def pmf(self, j):
        return float(self.masses[j]) if 0 <= j <= self.tau else 0.0

    def padded(self, length):
        """Masses zero-padded (never truncated) to at least ``length`` entries."""
        out = np.zeros(max(length, len(self.masses)))
        out[:len(self.masses)] = self.masses
        return out

    def __repr__(self):
        return f"DiscreteDist(tau={self.tau}, masses={np.array2string(self.masses, precision=4)})"


def spline_pmf_exact(k, ell):
    """Exact rational masses of the spline basis element ``Q^k_ell``."""
    _check_spline_args(k, ell)
    denom = math.comb(k + ell, k)
    return [Fraction(math.comb(k - 1 + ell - j, k - 1), denom) for j in range(ell + 1)]


def spline_masses(k, ell, length=None):
    """Float masses of ``Q^k_ell``, optionally zero-padded to ``length``."""
    _check_spline_args(k, ell)
    denom = math.comb(k + ell, k)
    n = ell + 1 if length is None else max(length, ell + 1)
    out = np.zeros(n)
    for j in range(ell + 1):
        # int / int is correctly rounded, so huge binomials are safe here
        out[j] = math.comb(k - 1 + ell - j, k - 1) / denom
    return out


def spline_pmf(k, ell):
    """The extremal k-monotone distribution supported on ``{0, ..., ell}``.

    ``Q^k_ell(j) = C(k - 1 + ell - j, k - 1) / C(k + ell, k)`` for ``j <= ell``.
    ``Q^1_ell`` is uniform and ``Q^k_0`` is a point mass at 0.
    """
    return DiscreteDist(spline_masses(k, ell), tol=1e-10)


def _check_spline_args(k, ell):
    if k < 1 or ell < 0:
        raise InvalidArgumentError(f"need k >= 1 and ell >= 0, got k={k}, ell={ell}")


@dataclass(frozen=True)
class SplineMixture:
    """Nonnegative weights over the basis ``Q^k_ell``, keyed by knot ``ell``."""

    k: int
    weights: dict

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        w = {int(ell): float(v) for ell, v in self.weights.items() if v != 0}
        if any(v < 0 for v in w.values()) or any(ell < 0 for ell in w):
            raise InvalidArgumentError("weights and knots must be nonnegative")
        if abs(sum(w.values()) - 1.0) > 1e-10:
            raise InvalidArgumentError(f"weights sum to {sum(w.values())!r}, not 1")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    @property
    def knots(self):
        return list(self.weights)


def is_k_monotone(p, k, tol=1e-12):
    """Check ``nabla^k p_j >= -tol`` for ``j = 0..tau``.

    Returns
    -------
    ok : bool
    violations : list of int
        Every index where the check fails.
    """
    masses = p.masses if isinstance(p, DiscreteDist) else np.asarray(p, dtype=float)
    values = nabla_vector(masses, k, len(masses))
    bad = np.flatnonzero(values < -tol)
    return bad.size == 0, bad.tolist()


def decompose(p, k, tol=1e-10):
    """Spline-mixture weights ``pi_ell = C(k + ell, k) nabla^k p_ell``.

    Raises
    ------
    NotKMonotoneError
        If some ``nabla^k p_ell < -tol``.
    """
    ok, bad = is_k_monotone(p, k, tol)
    if not ok:
        raise NotKMonotoneError(k, bad)
    values = nabla_vector(p.masses, k, p.tau + 1)
    weights = {}
    for ell, v in enumerate(values):
        w = binom(k + ell, k) * v
        if w > _WEIGHT_NOISE:
            weights[ell] = w
    return SplineMixture(k, weights)


def recompose(mixture):
    """Pointwise mixture ``p_j = sum_ell pi_ell Q^k_ell(j)``."""
    top = max(mixture.knots)
    p = np.zeros(top + 1)
    for ell, w in mixture.weights.items():
        p += w * spline_masses(mixture.k, ell, top + 1)
    return DiscreteDist(p / p.sum())


def mixture_dist(k, components):
    """Distribution of ``sum_i w_i Q^k_{ell_i}`` from ``(ell, w)`` pairs."""
    return recompose(SplineMixture(k, {ell: w for ell, w in components}))


def shift_up(p):
    """Distribution of ``X + 1`` for ``X ~ p`` (a pmf on ``{1, 2, ...}``)."""
    return DiscreteDist(np.concatenate([[0.0], p.masses]))


def make_abundance(p_plus, k):
    """k-monotone abundance distribution with zero-truncated law ``p_plus``.

    ``p_0`` solves ``1 / (1 - p_0) = 1 - sum_{h=1}^k (-1)^h C(k, h) p+_h`` and
    ``p_j = (1 - p_0) p+_j`` for ``j >= 1``, so that ``nabla^k p_0 = 0``.

    Parameters
    ----------
    p_plus : DiscreteDist
        Must put no mass on 0.
    k : int
    """
    if p_plus.pmf(0) != 0:
        raise InvalidArgumentError("p_plus must put zero mass on 0")
    coef = difference_coefficients(k)
    plus = p_plus.padded(k + 1)
    theta = 1.0 - float(np.dot(coef[1:], plus[1:k + 1]))
    if not theta >= 1.0:
        raise InvalidConstructionError(
            f"implied 1/(1-p_0) = {theta:g} < 1: p_0 would be negative for k={k}"
        )
    p0 = 1.0 - 1.0 / theta
    masses = (1.0 - p0) * p_plus.masses.copy()
    masses[0] = p0
    return DiscreteDist(masses)


def poisson_cutoff(lam, tail=POISSON_TAIL):
    """Smallest ``tau`` with ``P(X > tau) < tail`` for ``X ~ Poisson(lam)``."""
    tau = int(max(lam, 1.0))
    while stats.poisson.sf(tau, lam) >= tail:
        tau += 1
    while tau > 0 and stats.poisson.sf(tau - 1, lam) < tail:
        tau -= 1
    return tau


def poisson_dist(lam, tau=None):
    """Poisson(``lam``) truncated at ``tau`` (default: tail below 1e-12), renormalised."""
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    if tau is None:
        tau = poisson_cutoff(lam)
    m = stats.poisson.pmf(np.arange(tau + 1), lam)
    return DiscreteDist(m / m.sum())


def _poisson_h_monotone(lam, h):
    p = poisson_dist(lam).masses
    if len(p) < 2:
        return True
    return nabla_vector(p, h, len(p) - 1).min() >= 0


def lambda_threshold(h, tol=1e-9, grid=400):
    """Largest ``lam`` for which Poisson(``lam``) is ``h``-monotone.

    A grid scan over ``(0, 2]`` brackets the first failure, then bisection
    refines it to absolute precision ``tol``.
    """
    if h < 1:
        raise InvalidArgumentError("h must be >= 1")
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    lams = np.linspace(2.0 / grid, 2.0, grid)
    lo = 0.0
    hi = None
    for lam in lams:
        if _poisson_h_monotone(lam, h):
            lo = lam
        else:
            hi = lam
            break
    if hi is None:
        return 2.0
    if lo == 0.0 and not _poisson_h_monotone(hi / 1e6, h):
        raise InvalidArgumentError(f"no h-monotone Poisson found for h={h}")
    if lo == 0.0:
        lo = hi / 1e6
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _poisson_h_monotone(mid, h):
            lo = mid
        else:
            hi = mid
    return lo
