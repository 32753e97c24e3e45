"""Goodness-of-fit tests of k-monotonicity calibrated by Gaussian simulation.

Two procedures are provided.  ``P1`` compares ``sqrt(d) min_j nabla^k f_j``
with the simulated lower quantile of the minimum of the limiting Gaussian
vector.  ``P2`` standardises every constraint and uses a common normal
quantile ``nu_u`` whose level ``u`` is calibrated so that the family of
one-sided tests has overall level ``alpha``.
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np
from scipy import special

from ._rng import make_rng
from .errors import (
    CalibrationError,
    DegenerateSupportError,
    EmptySampleError,
    InvalidArgumentError,
)
from .shape import DiscreteDist, difference_coefficients

PROCEDURES = ("p1", "p2", "p1boot", "p2boot")
_CHUNK = 1 << 16


class NotPSDError(InvalidArgumentError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


@dataclass(frozen=True, eq=False)
class FreqSample:
    """Observed counts: ``counts[j]`` is the number of observations equal to ``j``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise InvalidArgumentError("counts must be one-dimensional")
        if c.size and (not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0)):
            raise InvalidArgumentError("counts must be nonnegative integers")
        c = c.astype(np.int64)
        nz = np.flatnonzero(c)
        c = c[:nz[-1] + 1] if nz.size else c[:0]
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_mapping(cls, mapping):
        if not mapping:
            return cls(np.zeros(0, dtype=np.int64))
        keys = [int(j) for j in mapping]
        if min(keys) < 0:
            raise InvalidArgumentError("values must be >= 0")
        c = np.zeros(max(keys) + 1, dtype=np.int64)
        for j, n in mapping.items():
            c[int(j)] += int(n)
        return cls(c)

    @classmethod
    def from_observations(cls, values):
        v = np.asarray(list(values), dtype=np.int64)
        if v.size and v.min() < 0:
            raise InvalidArgumentError("observations must be >= 0")
        return cls(np.bincount(v) if v.size else np.zeros(0, dtype=np.int64))

    @property
    def d(self):
        return int(self.counts.sum())

    @property
    def tau_hat(self):
        return len(self.counts) - 1

    def to_mapping(self):
        return {j: int(n) for j, n in enumerate(self.counts) if n > 0}

    def frequencies(self):
        if self.d == 0:
            raise EmptySampleError("sample is empty")
        return self.counts / self.d

    def shifted(self, by=1):
        """Sample of ``X - by``; observations below ``by`` are not allowed."""
        if np.any(self.counts[:by] > 0):
            raise InvalidArgumentError(f"sample has observations below {by}")
        return FreqSample(self.counts[by:])


def empirical_dist(s):
    """Relative frequencies ``f_j = counts_j / d`` as a :class:`DiscreteDist`."""
    return DiscreteDist(s.frequencies())


@dataclass(frozen=True)
class TestConfig:
    """Parameters of one test run.

    ``max_support`` caps the number of tested constraints at
    ``min(max_support, tau_hat)``.
    """

    k: int
    alpha: float = 0.05
    procedure: str = "p1"
    mc_reps: int = 10_000
    max_support: int = None
    seed: object = None
    boot_reps: int = 1000
    boot_reps2: int = 1000
    workers: int = 1

    __test__ = False

    def __post_init__(self):
        proc = str(self.procedure).lower()
        if proc not in PROCEDURES:
            raise InvalidArgumentError(f"unknown procedure {self.procedure!r}")
        object.__setattr__(self, "procedure", proc)
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if not 0 < self.alpha < 0.5:
            raise InvalidArgumentError("alpha must lie in (0, 0.5)")
        if self.mc_reps < 100:
            raise InvalidArgumentError("mc_reps must be >= 100")
        if self.max_support is not None and self.max_support < 1:
            raise InvalidArgumentError("max_support must be >= 1")
        if self.boot_reps < 1 or self.boot_reps2 < 1:
            raise InvalidArgumentError("bootstrap resample counts must be positive")


@dataclass
class TestReport:
    statistic: float
    threshold: float
    reject: bool
    k: int
    alpha: float
    procedure: str
    effective_tau: int
    d: int
    per_index: list = field(default_factory=list)
    u_hat: float = None
    nu: object = None

    __test__ = False

    def to_dict(self):
        return asdict(self)


def build_gamma(p):
    """Multinomial covariance ``diag(p) - p p^T``."""
    p = p.masses if isinstance(p, DiscreteDist) else np.asarray(p, dtype=float)
    return np.diag(p) - np.outer(p, p)


def difference_matrix(k, rows, cols):
    """``rows x cols`` matrix whose row ``j`` maps a vector to ``nabla^k v_j``.

    Columns past ``cols - 1`` are dropped, which amounts to zero padding.
    """
    A = np.zeros((rows, cols))
    coef = difference_coefficients(k)
    for j in range(rows):
        for h, c in enumerate(coef):
            if j + h < cols:
                A[j, j + h] = c
    return A


def build_A(k, tau):
    """The ``tau x (tau + 1)`` matrix with ``(A p)_j = nabla^k p_j``."""
    if tau < 1:
        raise InvalidArgumentError("tau must be >= 1")
    return difference_matrix(k, tau, tau + 1)


def psd_sqrt(S, tol=1e-10):
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues in ``[-tol * ||S||, 0)`` are clipped to zero; anything more
    negative raises :class:`NotPSDError`.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    norm = np.linalg.norm(S)
    if norm == 0:
        return np.zeros_like(S)
    if np.linalg.norm(S - S.T) > tol * norm:
        raise InvalidArgumentError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() < -tol * norm:
        raise NotPSDError(f"smallest eigenvalue {w.min():g} is negative")
    M = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (M + M.T)


def effective_tau(tau_hat, max_support=None):
    tau = tau_hat if max_support is None else min(max_support, tau_hat)
    if tau < 1:
        raise DegenerateSupportError("support is reduced to {0}; nothing to test")
    return tau


def quantile_index(alpha, n):
    """0-based index of the ``ceil(alpha n)``-th order statistic."""
    return max(math.ceil(alpha * n - 1e-9), 1) - 1


def lower_quantile(values, alpha):
    values = np.asarray(values)
    i = quantile_index(alpha, len(values))
    return float(np.partition(values, i)[i])


@dataclass(frozen=True, eq=False)
class _Design:
    """Everything the tests need about one frequency vector."""

    f: np.ndarray
    A: np.ndarray
    gamma: np.ndarray
    tau: int

    @classmethod
    def build(cls, f, k, max_support=None):
        f = np.trim_zeros(np.asarray(f, dtype=float), "b")
        tau = effective_tau(len(f) - 1, max_support)
        cols = min(tau - 1 + k, len(f) - 1) + 1
        return cls(f, difference_matrix(k, tau, cols), build_gamma(f[:cols]), tau)

    @property
    def cols(self):
        return self.A.shape[1]

    def nabla(self):
        return self.A @ self.f[:self.cols]

    def covariance(self):
        return self.A @ self.gamma @ self.A.T

    def zeta(self):
        return np.sqrt(np.clip(np.diag(self.covariance()), 0.0, None))


def _gaussian_min(L, n, rng, shift=None):
    """``min_j (shift_j + (L Z)_j)`` for ``n`` draws of ``Z ~ N(0, I)``."""
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        Z = rng.standard_normal((stop - start, L.shape[1]))
        W = Z @ L.T
        if shift is not None:
            W += shift
        out[start:stop] = W.min(axis=1)
    return out


def simulate_min_quantile(cov, alpha, B, seed=None):
    """Lower ``alpha``-quantile of ``min_j W_j`` for ``W ~ N(0, cov)``."""
    rng = make_rng(seed)
    return lower_quantile(_gaussian_min(psd_sqrt(cov), B, rng), alpha)


def mc_quantile_q(f, k, alpha, B=10_000, seed=None, max_support=None):
    """Simulated threshold of procedure P1.

    Draws ``B`` standard normal vectors ``Z`` and returns the
    ``ceil(alpha B)``-th smallest value of ``min_j (M Z)_j`` where
    ``M M = A Gamma A^T`` at the frequencies ``f``.
    """
    des = _Design.build(f, k, max_support)
    return simulate_min_quantile(des.covariance(), alpha, B, seed)


def _standardised_min(des, B, rng):
    """Draws of ``min_j (A Gamma^{1/2} Z)_j / zeta_j`` over usable ``j``."""
    zeta = des.zeta()
    usable = zeta > 0
    if not usable.any():
        raise CalibrationError("every constraint has zero variance")
    L = (des.A @ psd_sqrt(des.gamma))[usable] / zeta[usable, None]
    return _gaussian_min(L, B, rng)


def calibrate_u(f, k, alpha, B=10_000, seed=None, max_support=None):
    """Calibrated level ``u`` and quantile ``nu_u`` of procedure P2.

    With common random numbers the probability
    ``P(min_j {(A Gamma^{1/2} Z)_j - nu_u zeta_j} <= 0)`` equals the
    distribution function of ``V = min_j (A Gamma^{1/2} Z)_j / zeta_j`` at
    ``nu_u``.  It is a step function of ``u`` and reaches ``alpha`` exactly at
    the ``ceil(alpha B)``-th order statistic of ``V``, which is returned.

    Returns
    -------
    u : float
    nu : float
        ``nu = Phi^{-1}(u)``.
    """
    des = _Design.build(f, k, max_support)
    V = _standardised_min(des, B, make_rng(seed))
    nu = lower_quantile(V, alpha)
    u = float(special.ndtr(nu))
    if not 0 < u < 1:
        raise CalibrationError(f"calibrated level u={u} is outside (0, 1)")
    return u, nu


def _per_index(des, contributions, zeta):
    nab = des.nabla()
    return [
        {"j": j, "nabla": float(nab[j]), "zeta": float(zeta[j]),
         "contribution": None if contributions[j] is None else float(contributions[j])}
        for j in range(des.tau)
    ]


def _check_sample(s):
    if s.d < 1:
        raise EmptySampleError("sample is empty")


def test_p1(s, cfg):
    """Procedure P1: reject when ``sqrt(d) min_j nabla^k f_j <= q_alpha``."""
    _check_sample(s)
    des = _Design.build(s.frequencies(), cfg.k, cfg.max_support)
    sd = math.sqrt(s.d)
    contrib = sd * des.nabla()
    stat = float(contrib.min())
    q = simulate_min_quantile(des.covariance(), cfg.alpha, cfg.mc_reps, cfg.seed)
    return TestReport(
        statistic=stat, threshold=q, reject=stat <= q, k=cfg.k, alpha=cfg.alpha,
        procedure=cfg.procedure, effective_tau=des.tau, d=s.d,
        per_index=_per_index(des, list(contrib), des.zeta()),
    )


test_p1.__test__ = False


def standardised_statistic(des, d, nu):
    """``min_j {sqrt(d) nabla^k f_j - nu_j zeta_j}`` over ``j`` with ``zeta_j > 0``.

    ``nu`` is a scalar or a per-index vector.
    """
    zeta = des.zeta()
    nu = np.broadcast_to(np.asarray(nu, dtype=float), zeta.shape)
    values = math.sqrt(d) * des.nabla() - nu * zeta
    contrib = [float(v) if z > 0 else None for v, z in zip(values, zeta)]
    usable = zeta > 0
    if not usable.any():
        raise CalibrationError("every constraint has zero variance")
    return float(values[usable].min()), contrib, zeta


def test_p2(s, cfg):
    """Procedure P2: reject when ``min_j {sqrt(d) nabla^k f_j - nu_u zeta_j} <= 0``."""
    _check_sample(s)
    des = _Design.build(s.frequencies(), cfg.k, cfg.max_support)
    V = _standardised_min(des, cfg.mc_reps, make_rng(cfg.seed))
    nu = lower_quantile(V, cfg.alpha)
    u = float(special.ndtr(nu))
    stat, contrib, zeta = standardised_statistic(des, s.d, nu)
    return TestReport(
        statistic=stat, threshold=0.0, reject=stat <= 0, k=cfg.k, alpha=cfg.alpha,
        procedure=cfg.procedure, effective_tau=des.tau, d=s.d,
        per_index=_per_index(des, contrib, zeta), u_hat=u, nu=nu,
    )


test_p2.__test__ = False


def run_test(s, cfg):
    """Dispatch on ``cfg.procedure``."""
    if cfg.procedure == "p1":
        return test_p1(s, cfg)
    if cfg.procedure == "p2":
        return test_p2(s, cfg)
    from . import bootstrap

    if cfg.procedure == "p1boot":
        return bootstrap.test_p1boot(s, cfg)
    return bootstrap.test_p2boot(s, cfg)


run_test.__test__ = False
