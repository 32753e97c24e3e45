"""Estimators of the total number of classes under a k-monotone abundance model."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from .degree import DEFAULT_KMAX, estimate_k
from .errors import InapplicableOrderError, InvalidArgumentError
from .monotest import FreqSample, TestConfig
from .projection import MAX_ITER, EPS, project_k_monotone
from .shape import DiscreteDist, difference_coefficients, nabla_vector


@dataclass(frozen=True, eq=False)
class AbundanceSample:
    """Frequencies of frequencies: ``s[j]`` classes were observed ``j`` times.

    ``s[0]`` is always zero (unobserved classes are unknown).
    """

    s: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.s)
        if c.ndim != 1 or (c.size and (np.any(c < 0) or not np.all(np.mod(c, 1) == 0))):
            raise InvalidArgumentError("S_j must be nonnegative integers")
        c = c.astype(np.int64)
        if c.size and c[0] != 0:
            raise InvalidArgumentError("abundances must be >= 1")
        nz = np.flatnonzero(c)
        if nz.size == 0:
            raise InvalidArgumentError("at least one class must be observed")
        c = c[:nz[-1] + 1]
        c.setflags(write=False)
        object.__setattr__(self, "s", c)

    @classmethod
    def from_mapping(cls, mapping):
        if not mapping or min(int(j) for j in mapping) < 1:
            raise InvalidArgumentError("abundance values must be >= 1")
        c = np.zeros(max(int(j) for j in mapping) + 1, dtype=np.int64)
        for j, n in mapping.items():
            c[int(j)] += int(n)
        return cls(c)

    @classmethod
    def from_freq_sample(cls, sample):
        return cls(sample.counts)

    @property
    def D(self):
        return int(self.s.sum())

    @property
    def n(self):
        return int(np.dot(np.arange(len(self.s)), self.s))

    def S(self, j):
        return int(self.s[j]) if 0 <= j < len(self.s) else 0

    def truncated_frequencies(self):
        """Empirical ``p+``: ``f_j = S_j / D`` for ``j >= 1`` (entry 0 is zero)."""
        return self.s / self.D

    def shifted_sample(self):
        """Observed abundances minus one, as a :class:`FreqSample` on ``{0, 1, ...}``."""
        return FreqSample(self.s[1:])


@dataclass
class RichnessEstimate:
    n_hat: float
    k_used: int
    method: str
    D: int
    se: float = None
    diagnostics: dict = field(default_factory=dict)

    def ci(self, level=0.95):
        """Normal interval ``n_hat -/+ z_{(1+level)/2} se``; ``None`` without ``se``."""
        if self.se is None:
            return None
        z = float(special.ndtri(0.5 + level / 2))
        return (self.n_hat - z * self.se, self.n_hat + z * self.se)

    def to_dict(self, ci_level=None):
        out = {"N_hat": self.n_hat, "se": self.se, "k_used": self.k_used,
               "D": self.D, "method": self.method, "diagnostics": self.diagnostics}
        if ci_level is not None:
            ci = self.ci(ci_level)
            out["ci"] = None if ci is None else list(ci)
            out["ci_level"] = ci_level
        return out


def _correction(values, k):
    """``sum_{h=1}^k (-1)^h C(k, h) values[h]`` with zero padding."""
    coef = difference_coefficients(k)
    v = np.zeros(k + 1)
    m = min(len(values), k + 1)
    v[:m] = values[:m]
    return float(np.dot(coef[1:], v[1:]))


def n_hat_empirical(a, k):
    """``N^k = D - sum_{h=1}^k (-1)^h C(k, h) S_h`` with its standard error.

    The standard error is
    ``sqrt(sum_h ((-1)^{h+1} + C(k, h)) C(k, h) S_h)``.

    Raises
    ------
    InapplicableOrderError
        When ``sum_h (-1)^h C(k, h) S_h > 0``.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    corr = _correction(a.s, k)
    if corr > 0:
        raise InapplicableOrderError(k, corr)
    var = sum(((-1) ** (h + 1) + math.comb(k, h)) * math.comb(k, h) * a.S(h)
              for h in range(1, k + 1))
    return RichnessEstimate(n_hat=a.D - corr, se=math.sqrt(var), k_used=k,
                            method="empirical", D=a.D)


def ls_project(f_plus, k, eps=EPS, max_iter=MAX_ITER):
    """Closest k-monotone pmf on ``{1, 2, ...}`` to ``f_plus`` in squared error.

    ``f_plus[0]`` must be zero; the returned vector keeps that indexing.
    """
    f_plus = np.asarray(f_plus, dtype=float)
    if f_plus.size == 0 or f_plus[0] != 0:
        raise InvalidArgumentError("f_plus must be indexed from 0 with f_plus[0] = 0")
    proj = project_k_monotone(f_plus[1:], k, eps=eps, max_iter=max_iter)
    return np.concatenate([[0.0], proj.q]), proj


def n_tilde(a, k, eps=EPS, max_iter=MAX_ITER):
    """``N~^k = D (1 - sum_h (-1)^h C(k, h) p~+_h)`` from the projected ``p+``."""
    p_tilde, proj = ls_project(a.truncated_frequencies(), k, eps, max_iter)
    corr = _correction(p_tilde, k)
    return RichnessEstimate(
        n_hat=a.D * (1.0 - corr), k_used=k, method="least_squares", D=a.D,
        diagnostics={"p_tilde": p_tilde[1:].tolist(), "knots": {int(l) + 1: w for l, w in proj.weights.items()},
                     "iterations": proj.iterations, "renormalised": proj.renormalised},
    )


def estimate(a, k, method="empirical", **opts):
    if method == "empirical":
        return n_hat_empirical(a, k)
    if method in ("ls", "least_squares"):
        return n_tilde(a, k, **opts)
    raise InvalidArgumentError(f"unknown estimator {method!r}")


def chao1(a):
    """Reference value ``D + S_1^2 / (2 S_2)`` (``None`` when ``S_2 = 0``)."""
    s2 = a.S(2)
    return None if s2 == 0 else a.D + a.S(1) ** 2 / (2 * s2)


def richness_auto(a, k_max=DEFAULT_KMAX, alpha=0.05, procedure="p1", method="empirical", cfg=None):
    """Two-step estimate: ``k_hat`` on the shifted abundances, then ``N^{k_hat}``.

    Returns
    -------
    degree : DegreeReport
    estimate : RichnessEstimate or None
        ``None`` when ``k_hat = 0`` (no order accepted).
    """
    degree = estimate_k(a.shifted_sample(), k_max=k_max, alpha=alpha, procedure=procedure, cfg=cfg)
    if degree.k_hat == 0:
        return degree, None
    return degree, estimate(a, degree.k_hat, method)


def bias_variance(p, k):
    """Closed-form ``E(N^k) / N`` and ``Var(N^k / sqrt(N))`` for abundance law ``p``.

    ``E = 1 - nabla^k p_0`` and
    ``V = p_0 + sum_{h=1}^k C(k, h)^2 p_h - (nabla^k p_0)^2``.
    """
    masses = p.masses if isinstance(p, DiscreteDist) else np.asarray(p, dtype=float)
    n0 = float(nabla_vector(masses, k, 1)[0])
    padded = np.zeros(k + 1)
    m = min(len(masses), k + 1)
    padded[:m] = masses[:m]
    var = padded[0] + sum(math.comb(k, h) ** 2 * padded[h] for h in range(1, k + 1)) - n0 ** 2
    return 1.0 - n0, var
