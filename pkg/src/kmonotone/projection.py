"""Least-squares projection onto k-monotone distributions.

The minimiser of ``sum_j (q_j - f_j)^2`` over k-monotone pmfs ``q`` is a
mixture ``q = sum_l pi_l Q^k_l`` with ``pi`` on the simplex.  It is computed
by a support reduction algorithm: grow the active set with the basis element
of most negative directional derivative, re-solve the equality-constrained
least squares on the active set, and step back to the boundary of the
simplex whenever a weight turns negative.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidArgumentError, SolverError

EPS = 1e-10
MAX_ITER = 10_000
_ZERO = 1e-14


def spline_basis(k, L):
    """Matrix ``B`` of shape ``(L + 1, L + 1)`` with ``B[:, l] = Q^k_l``."""
    c = np.array([float(math.comb(k - 1 + m, k - 1)) for m in range(L + 1)])
    denom = np.cumsum(c)  # C(k + l, k) by the hockey-stick identity
    j = np.arange(L + 1)[:, None]
    ell = np.arange(L + 1)[None, :]
    diff = ell - j
    B = np.where(diff >= 0, c[np.clip(diff, 0, None)], 0.0) / denom[None, :]
    return B


@dataclass
class Projection:
    """Result of :func:`project_k_monotone`.

    ``q`` is indexed like the input ``f`` (first entry = first cell).
    """

    q: np.ndarray
    weights: dict
    k: int
    iterations: int
    basis_size: int
    max_directional_derivative_violation: float
    renormalised: bool = False
    diagnostics: dict = field(default_factory=dict)


def _solve_active(G, b, S):
    """Equality-constrained least squares on the active set ``S``."""
    n = len(S)
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = G[np.ix_(S, S)]
    K[:n, n] = 1.0
    K[n, :n] = 1.0
    rhs = np.concatenate([b[S], [1.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n]


def _support_reduction(G, b, eps, max_iter):
    L1 = len(b)
    start = int(np.argmin(0.5 * np.diag(G) - b))
    S = [start]
    pi = np.zeros(L1)
    pi[start] = 1.0
    it = 0
    while True:
        grad = G @ pi - b
        dd = grad - pi @ grad
        cand = int(np.argmin(dd))
        if dd[cand] >= -eps:
            return pi, it, float(max(0.0, -dd.min()))
        it += 1
        if it > max_iter:
            raise SolverError(f"support reduction did not converge in {max_iter} iterations", best=pi)
        if cand not in S:
            S.append(cand)
        while True:
            new = _solve_active(G, b, S)
            cur = pi[S]
            if np.all(new >= -_ZERO):
                pi[:] = 0.0
                pi[S] = np.clip(new, 0.0, None)
                pi /= pi.sum()
                break
            neg = new < -_ZERO
            ratios = cur[neg] / (cur[neg] - new[neg])
            t = float(ratios.min())
            mixed = cur + t * (new - cur)
            pi[:] = 0.0
            pi[S] = np.clip(mixed, 0.0, None)
            keep = [ell for ell in S if pi[ell] > _ZERO]
            pi[[ell for ell in S if ell not in keep]] = 0.0
            S = keep
            pi /= pi.sum()


def project_k_monotone(f, k, eps=EPS, max_iter=MAX_ITER, basis_size=None):
    """Closest k-monotone pmf to ``f`` in squared-error loss.

    Parameters
    ----------
    f : array_like
        Nonnegative vector summing to one (cells ``0..n-1``).
    k : int
    eps : float
        Stopping tolerance on the directional derivatives.
    max_iter : int
    basis_size : int, optional
        Largest knot to start with; defaults to ``n + k``.  It is doubled
        while one of the top ``k`` knots stays active, up to ``8 n``.

    Returns
    -------
    Projection
    """
    f = np.trim_zeros(np.asarray(f, dtype=float), "b")
    if f.size == 0 or np.any(f < 0):
        raise InvalidArgumentError("f must be a nonempty nonnegative vector")
    if abs(f.sum() - 1.0) > 1e-8:
        raise InvalidArgumentError(f"f sums to {f.sum()!r}, not 1")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    n = len(f)
    L = basis_size if basis_size is not None else n + k
    cap = max(8 * n, L)
    while True:
        B = spline_basis(k, L)
        fp = np.zeros(L + 1)
        fp[:n] = f
        G = B.T @ B
        b = B.T @ fp
        pi, it, viol = _support_reduction(G, b, eps, max_iter)
        top_active = np.any(pi[max(0, L - k + 1):] > 0)
        if not top_active or L >= cap:
            break
        L = min(2 * L, cap)
    q = B @ pi
    s = q.sum()
    renorm = abs(s - 1.0) > 1e-8
    if renorm:
        q = q / s
    q = np.trim_zeros(q, "b")
    weights = {int(ell): float(pi[ell]) for ell in np.flatnonzero(pi)}
    return Projection(q=q, weights=weights, k=k, iterations=it, basis_size=L,
                      max_directional_derivative_violation=viol, renormalised=renorm,
                      diagnostics={"top_knot_active": bool(top_active), "sum_before_normalisation": float(s)})
