"""Bootstrap calibration of the P1 and P2 thresholds.

Resamples are drawn as multinomial counts over the observed cells.  They are
generated in fixed-size batches, batch ``b`` using the stream keyed by
``(seed, level, b)``, so results do not depend on how many workers evaluate
the batches.
"""

from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np
from scipy import special

from ._rng import as_seed_sequence, make_rng
from .errors import CalibrationError, DegenerateSupportError, EmptySampleError
from .monotest import TestReport, _Design, _per_index, lower_quantile, quantile_index, standardised_statistic

BATCH_SIZE = 250
GRID_SIZE = 50


def _prepare(s, k, max_support):
    if s.d < 1:
        raise EmptySampleError("sample is empty")
    if s.tau_hat < 1 or np.count_nonzero(s.counts) < 2:
        raise DegenerateSupportError("all observations are equal; resamples would not vary")
    if s.d < 2:
        raise DegenerateSupportError("bootstrap needs at least two observations")
    return _Design.build(s.frequencies(), k, max_support)


def resample_counts(s, n, seed, level=0, batch_size=BATCH_SIZE, workers=1):
    """``n`` bootstrap count vectors of total ``d``, shape ``(n, tau_hat + 1)``."""
    ss = as_seed_sequence(seed)
    f = s.frequencies()
    sizes = [min(batch_size, n - start) for start in range(0, n, batch_size)]

    def batch(b):
        return make_rng(ss, level, b).multinomial(s.d, f, size=sizes[b])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(batch, range(len(sizes))))
    else:
        parts = [batch(b) for b in range(len(sizes))]
    return np.concatenate(parts) if parts else np.zeros((0, len(f)), dtype=np.int64)


def centred_differences(s, des, counts):
    """Rows ``sqrt(d) nabla^k (f* - f)_j`` for ``j < tau_eff``."""
    fstar = counts[:, :des.cols] / s.d
    return math.sqrt(s.d) * ((fstar - des.f[:des.cols]) @ des.A.T)


def boot_quantile_q(s, k, alpha, boot_reps=1000, seed=None, max_support=None, workers=1):
    """Bootstrap threshold for P1: lower ``alpha``-quantile of
    ``min_j sqrt(d) nabla^k (f* - f)_j``."""
    des = _prepare(s, k, max_support)
    G = centred_differences(s, des, resample_counts(s, boot_reps, seed, 0, workers=workers))
    return lower_quantile(G.min(axis=1), alpha)


def u_grid(alpha, tau):
    return np.unique(np.geomspace(alpha / tau, alpha, GRID_SIZE))


def double_boot_u(s, k, alpha, boot_reps=1000, boot_reps2=1000, seed=None,
                  max_support=None, workers=1):
    """Double-bootstrap calibration of the P2 level.

    First-level resamples give per-index quantiles ``nu*_{j,u}`` of
    ``sqrt(d) nabla^k (f* - f)_j / zeta_j``; an independent second level
    estimates, for each ``u`` of a log grid on ``[alpha / tau, alpha]``,
    ``P(min_j {sqrt(d) nabla^k (f** - f)_j - nu*_{j,u} zeta_j} <= 0)``.
    The largest ``u`` whose probability does not exceed ``alpha`` wins.  When
    none does, the smallest grid value is kept as long as its probability
    is within three Monte-Carlo standard errors of ``alpha``.

    Returns
    -------
    u : float
    nu : numpy.ndarray
        ``nu*_{j,u}`` for every index; NaN where ``zeta_j = 0``.
    """
    des = _prepare(s, k, max_support)
    ss = as_seed_sequence(seed)
    zeta = des.zeta()
    usable = zeta > 0
    if not usable.any():
        raise CalibrationError("every constraint has zero variance")
    g1 = centred_differences(s, des, resample_counts(s, boot_reps, ss, 0, workers=workers))
    ratios = np.sort(g1[:, usable] / zeta[usable], axis=0)
    g2 = centred_differences(s, des, resample_counts(s, boot_reps2, ss, 1, workers=workers))
    g2 = g2[:, usable]
    z = zeta[usable]

    grid = u_grid(alpha, des.tau)
    probs = np.empty(len(grid))
    for i, u in enumerate(grid):
        nu_u = ratios[quantile_index(u, boot_reps)]
        probs[i] = np.mean((g2 - nu_u * z).min(axis=1) <= 0)

    below = np.flatnonzero(probs <= alpha)
    if below.size:
        i = below[-1]
    elif probs[0] <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / boot_reps2):
        i = 0
    else:
        raise CalibrationError(
            f"double bootstrap cannot reach level {alpha}: P = {probs[0]:.4f} at u = {grid[0]:.3g}"
        )
    nu = np.full(des.tau, np.nan)
    nu[usable] = ratios[quantile_index(grid[i], boot_reps)]
    return float(grid[i]), nu


def test_p1boot(s, cfg):
    """P1 with the bootstrap threshold ``q*``."""
    des = _prepare(s, cfg.k, cfg.max_support)
    contrib = math.sqrt(s.d) * des.nabla()
    stat = float(contrib.min())
    q = boot_quantile_q(s, cfg.k, cfg.alpha, cfg.boot_reps, cfg.seed, cfg.max_support, cfg.workers)
    return TestReport(
        statistic=stat, threshold=q, reject=stat <= q, k=cfg.k, alpha=cfg.alpha,
        procedure=cfg.procedure, effective_tau=des.tau, d=s.d,
        per_index=_per_index(des, list(contrib), des.zeta()),
    )


def test_p2boot(s, cfg):
    """P2 with per-index quantiles from the double bootstrap."""
    des = _prepare(s, cfg.k, cfg.max_support)
    u, nu = double_boot_u(s, cfg.k, cfg.alpha, cfg.boot_reps, cfg.boot_reps2, cfg.seed,
                         cfg.max_support, cfg.workers)
    stat, contrib, zeta = standardised_statistic(des, s.d, np.nan_to_num(nu))
    return TestReport(
        statistic=stat, threshold=0.0, reject=stat <= 0, k=cfg.k, alpha=cfg.alpha,
        procedure=cfg.procedure, effective_tau=des.tau, d=s.d,
        per_index=_per_index(des, contrib, zeta), u_hat=u,
        nu=[None if np.isnan(v) else float(v) for v in nu],
    )


test_p1boot.__test__ = False
test_p2boot.__test__ = False
