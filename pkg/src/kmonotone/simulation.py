"""Seeded replication engine for rejection, degree and richness studies.

Replicate ``r`` of a study draws all its randomness from streams keyed by
``(seed, r, ...)``, and the summaries only depend on the multiset of
replicate outcomes, so a report is identical for any number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
import csv
import functools
import io
import math
import time

import numpy as np
from scipy import special

from ._rng import derive_seed, make_rng
from .degree import estimate_k
from .errors import InapplicableOrderError, InvalidArgumentError, KMonotoneError, SolverError
from .monotest import FreqSample, PROCEDURES, TestConfig, build_gamma, difference_matrix, lower_quantile, psd_sqrt, run_test
from .richness import AbundanceSample, n_hat_empirical, n_tilde
from .shape import binom, lambda_threshold, make_abundance, mixture_dist, poisson_cutoff, poisson_dist, shift_up

FAMILIES = ("poisson", "spline_mixture", "abundance")
STUDIES = ("rejection", "degree", "richness")
ESTIMATORS = ("empirical", "ls")


@dataclass(frozen=True)
class Scenario:
    """One simulation design.

    ``family`` selects the sampling law:

    * ``poisson``: Poisson(``lam``), or Poisson(``lambda_threshold(h)``) when
      ``h`` is given;
    * ``spline_mixture``: ``sum_i w_i Q^{k_true}_{l_i}`` with
      ``components = ((l_1, w_1), ...)``;
    * ``abundance``: ``N`` classes with abundance law
      ``make_abundance(shift_up(Poisson(lambda_threshold(h))), k_construct)``.

    ``size`` is ``d`` (observations) for the first two families and ``N``
    (classes) for the third.
    """

    family: str
    size: int
    replicates: int = 500
    h: int = None
    lam: float = None
    k_true: int = None
    components: tuple = ()
    k_construct: int = None
    ks: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    procedures: tuple = ("p1",)
    k_max: int = 6
    alpha: float = 0.05
    mc_reps: int = 10_000
    boot_reps: int = 1000
    boot_reps2: int = 1000
    max_support: int = None
    estimators: tuple = ESTIMATORS
    degree_procedure: str = "p1"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        if self.replicates < 1:
            raise InvalidArgumentError("replicates must be >= 1")
        if self.size < 1:
            raise InvalidArgumentError("sample size must be >= 1")
        object.__setattr__(self, "components", tuple((int(l), float(w)) for l, w in self.components))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "procedures", tuple(str(p).lower() for p in self.procedures))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.family == "poisson" and (self.h is None) == (self.lam is None):
            raise InvalidArgumentError("poisson scenario needs exactly one of h or lambda")
        if self.family == "spline_mixture":
            if self.k_true is None or not self.components:
                raise InvalidArgumentError("spline_mixture needs k_true and components")
            w = [w for _, w in self.components]
            if min(w) <= 0 or abs(sum(w) - 1) > 1e-9:
                raise InvalidArgumentError("mixture weights must be positive and sum to 1")
        if self.family == "abundance" and self.h is None:
            raise InvalidArgumentError("abundance scenario needs h")
        for p in self.procedures:
            if p not in PROCEDURES:
                raise InvalidArgumentError(f"unknown procedure {p!r}")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise InvalidArgumentError(f"unknown estimator {e!r}")

    def test_config(self, k, procedure, seed):
        return TestConfig(k=k, alpha=self.alpha, procedure=procedure, mc_reps=self.mc_reps,
                          max_support=self.max_support, seed=seed, boot_reps=self.boot_reps,
                          boot_reps2=self.boot_reps2)

    def label(self):
        if self.family == "poisson":
            par = f"h={self.h}" if self.h is not None else f"lambda={self.lam}"
        elif self.family == "spline_mixture":
            par = f"k_true={self.k_true}," + "+".join(f"{w:g}Q{l}" for l, w in self.components)
        else:
            par = f"h={self.h},k_construct={self.k_construct if self.k_construct is not None else self.h}"
        return f"{self.family}({par})"


@functools.lru_cache(maxsize=32)
def scenario_distribution(sc):
    """Sampling law of the scenario as a :class:`DiscreteDist` (cached)."""
    if sc.family == "poisson":
        lam = sc.lam if sc.lam is not None else lambda_threshold(sc.h)
        return poisson_dist(lam)
    if sc.family == "spline_mixture":
        return mixture_dist(sc.k_true, sc.components)
    k = sc.k_construct if sc.k_construct is not None else sc.h
    return make_abundance(shift_up(poisson_dist(lambda_threshold(sc.h))), k)


@dataclass
class SimReport:
    """Table cells of one study.

    Each cell holds ``value`` (a rate, mean or ``100 sqrt(PE)/N``), its
    Monte-Carlo standard error (``None`` when not defined), the number of
    replicates that produced a result and the failure count.
    """

    study: str
    scenario: str
    size: int
    replicates: int
    seed: int
    cells: list = field(default_factory=list)
    wall_clock: float = 0.0

    def cell(self, **keys):
        """The unique cell whose fields match ``keys``."""
        hits = [c for c in self.cells if all(c.get(k) == v for k, v in keys.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {keys}")
        return hits[0]

    def value(self, **keys):
        return self.cell(**keys)["value"]

    def to_dict(self):
        return asdict(self)

    def to_csv(self):
        cols = ["study", "scenario", "size", "variant", "row", "column", "statistic",
                "value", "mc_se", "successes", "failures"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for c in self.cells:
            w.writerow({"study": self.study, "scenario": self.scenario, "size": self.size,
                        **{k: ("" if c.get(k) is None else c.get(k)) for k in cols[3:]}})
        return buf.getvalue()

    def to_markdown(self):
        """One table per (variant, statistic): rows ``row``, columns ``column``."""
        out = [f"### {self.study}: {self.scenario}, size {self.size}, "
               f"{self.replicates} replicates, seed {self.seed}", ""]
        groups = {}
        for c in self.cells:
            groups.setdefault((c["variant"], c["statistic"]), []).append(c)
        for (variant, stat), cells in groups.items():
            rows = list(dict.fromkeys(c["row"] for c in cells))
            cols = list(dict.fromkeys(c["column"] for c in cells))
            lookup = {(c["row"], c["column"]): c for c in cells}
            out.append(f"{variant} / {stat}")
            out.append("")
            out.append("| | " + " | ".join(str(c) for c in cols) + " |")
            out.append("|---" * (len(cols) + 1) + "|")
            for r in rows:
                vals = []
                for col in cols:
                    c = lookup.get((r, col))
                    if c is None or c["value"] is None:
                        vals.append("")
                        continue
                    txt = f"{c['value']:.4g}" if isinstance(c["value"], float) else str(c["value"])
                    if c["failures"]:
                        txt += f"^({c['failures']})"
                    vals.append(txt)
                out.append(f"| {r} | " + " | ".join(vals) + " |")
            out.append("")
        return "\n".join(out)


def rate_se(rate, n):
    """``sqrt(r (1 - r) / n)``; ``None`` for a single replicate."""
    if n is None or n < 2:
        return None
    return math.sqrt(rate * (1 - rate) / n)


def _map(fn, sc, n):
    if sc.workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=sc.workers) as pool:
            return list(pool.map(fn, [sc] * n, range(n), chunksize=max(1, n // (4 * sc.workers))))
    return [fn(sc, r) for r in range(n)]


def _draw_sample(sc, r):
    p = scenario_distribution(sc)
    counts = make_rng(derive_seed(sc.seed, r), 0).multinomial(sc.size, p.masses)
    return FreqSample(counts)


# --------------------------------------------------------------------------
# rejection


def _rejection_replicate(sc, r):
    s = _draw_sample(sc, r)
    out = {}
    for pi, proc in enumerate(sc.procedures):
        for k in sc.ks:
            try:
                rep = run_test(s, sc.test_config(k, proc, derive_seed(sc.seed, r, 1, pi, k)))
                out[(proc, k)] = bool(rep.reject)
            except KMonotoneError:
                out[(proc, k)] = None
    return out


def run_rejection_study(sc):
    """Rejection rates of ``H^k`` for every ``(procedure, k)`` cell.

    Two variants are reported.  ``unconditional`` is the fraction of
    replicates rejecting ``H^k``.  ``sequential`` declares ``H^k`` rejected
    as soon as some ``H^l`` with ``l <= k`` is rejected, which is the rate of
    the procedure that only tests ``H^k`` when ``H^{k-1}`` was not rejected.
    Replicates in which a test fails are excluded from that cell and
    counted as failures.
    """
    if sc.family == "abundance":
        raise InvalidArgumentError("rejection studies need a poisson or spline_mixture scenario")
    t0 = time.perf_counter()
    results = _map(_rejection_replicate, sc, sc.replicates)
    cells = []
    ks = sorted(sc.ks)
    for proc in sc.procedures:
        for variant in ("unconditional", "sequential"):
            for k in ks:
                outcomes = []
                for res in results:
                    if variant == "unconditional":
                        outcomes.append(res[(proc, k)])
                        continue
                    seq = [res[(proc, l)] for l in ks if l <= k]
                    if any(v is True for v in seq):
                        outcomes.append(True)
                    elif any(v is None for v in seq):
                        outcomes.append(None)
                    else:
                        outcomes.append(False)
                ok = [v for v in outcomes if v is not None]
                rate = float(np.mean(ok)) if ok else None
                cells.append({"variant": variant, "row": k, "column": proc, "statistic": "rejection_rate",
                              "value": rate, "mc_se": None if rate is None else rate_se(rate, len(ok)),
                              "successes": len(ok), "failures": len(outcomes) - len(ok)})
    return SimReport("rejection", sc.label(), sc.size, sc.replicates, sc.seed, cells,
                     time.perf_counter() - t0)


# --------------------------------------------------------------------------
# degree


def _degree_replicate(sc, r):
    s = _draw_sample(sc, r)
    out = {}
    for pi, proc in enumerate(sc.procedures):
        cfg = sc.test_config(1, proc, derive_seed(sc.seed, r, 2, pi))
        try:
            out[proc] = estimate_k(s, k_max=sc.k_max, alpha=sc.alpha, procedure=proc, cfg=cfg).k_hat
        except KMonotoneError:
            out[proc] = None
    return out


def run_degree_study(sc, k_max=None):
    """Distribution of ``k_hat`` over replicates, and its mean, per procedure."""
    if sc.family == "abundance":
        raise InvalidArgumentError("degree studies need a poisson or spline_mixture scenario")
    if k_max is not None:
        sc = _replace(sc, k_max=k_max)
    t0 = time.perf_counter()
    results = _map(_degree_replicate, sc, sc.replicates)
    cells = []
    for proc in sc.procedures:
        vals = [res[proc] for res in results]
        ok = np.array([v for v in vals if v is not None])
        fails = len(vals) - len(ok)
        for j in range(sc.k_max + 1):
            rate = float(np.mean(ok == j)) if ok.size else None
            cells.append({"variant": "histogram", "row": j, "column": proc, "statistic": "P(k_hat=row)",
                          "value": rate, "mc_se": None if rate is None else rate_se(rate, ok.size),
                          "successes": int(ok.size), "failures": fails})
        mean = float(ok.mean()) if ok.size else None
        se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else None
        cells.append({"variant": "summary", "row": "mean", "column": proc, "statistic": "k_hat",
                      "value": mean, "mc_se": se, "successes": int(ok.size), "failures": fails})
    return SimReport("degree", sc.label(), sc.size, sc.replicates, sc.seed, cells,
                     time.perf_counter() - t0)


# --------------------------------------------------------------------------
# richness


def draw_abundance(sc, r):
    """``D ~ Bin(N, 1 - p_0)`` observed classes, then their abundances from ``p+``."""
    p = scenario_distribution(sc).masses
    rng = make_rng(derive_seed(sc.seed, r), 0)
    D = int(rng.binomial(sc.size, 1.0 - p[0]))
    if D == 0:
        return None
    plus = p.copy()
    plus[0] = 0.0
    plus /= plus.sum()
    return AbundanceSample(rng.multinomial(D, plus))


def _estimate(a, k, estimator):
    try:
        if estimator == "empirical":
            return n_hat_empirical(a, k).n_hat, None
        return n_tilde(a, k).n_hat, None
    except InapplicableOrderError:
        return None, "inapplicable"
    except SolverError:
        return None, "solver"


def _richness_replicate(sc, r):
    a = draw_abundance(sc, r)
    out = {}
    keys = [(e, k) for e in sc.estimators for k in sc.ks]
    if a is None:
        return {key: (None, "empty") for key in keys + [(e, "k_hat") for e in sc.estimators]}
    for e, k in keys:
        out[(e, k)] = _estimate(a, k, e)
    cfg = sc.test_config(1, sc.degree_procedure, derive_seed(sc.seed, r, 3))
    try:
        k_hat = estimate_k(a.shifted_sample(), k_max=sc.k_max, alpha=sc.alpha,
                           procedure=sc.degree_procedure, cfg=cfg).k_hat
    except KMonotoneError:
        k_hat = None
    out["k_hat"] = k_hat
    for e in sc.estimators:
        if k_hat is None:
            out[(e, "k_hat")] = (None, "degree")
        elif k_hat == 0:
            out[(e, "k_hat")] = (None, "k_hat=0")
        else:
            out[(e, "k_hat")] = out.get((e, k_hat)) or _estimate(a, k_hat, e)
    return out


def run_richness_study(sc, ks=None, k_max=None):
    """Mean estimate and ``100 sqrt(PE) / N`` per (estimator, k) cell.

    Rows are ``k = 1, ...`` and ``k_hat`` (the two-step procedure with
    ``k_max`` and ``degree_procedure``).  ``PE`` is the mean squared error
    over the replicates that produced an estimate; the others are counted
    as failures (inapplicable order, solver failure, ``k_hat = 0``).
    """
    if sc.family != "abundance":
        raise InvalidArgumentError("richness studies need an abundance scenario")
    changes = {}
    if ks is not None:
        changes["ks"] = tuple(ks)
    if k_max is not None:
        changes["k_max"] = k_max
    if changes:
        sc = _replace(sc, **changes)
    t0 = time.perf_counter()
    results = _map(_richness_replicate, sc, sc.replicates)
    N = sc.size
    cells = []
    for e in sc.estimators:
        for k in list(sc.ks) + ["k_hat"]:
            vals = [res[(e, k)] for res in results]
            est = np.array([v for v, _ in vals if v is not None])
            fails = len(vals) - est.size
            reasons = {}
            for _, why in vals:
                if why is not None:
                    reasons[why] = reasons.get(why, 0) + 1
            mean = float(est.mean()) if est.size else None
            se = float(est.std(ddof=1) / math.sqrt(est.size)) if est.size > 1 else None
            rpe = float(100 * math.sqrt(np.mean((est - N) ** 2)) / N) if est.size else None
            base = {"variant": e, "row": k, "successes": int(est.size), "failures": fails,
                    "failure_reasons": reasons}
            cells.append({**base, "column": "mean", "statistic": "mean", "value": mean, "mc_se": se})
            cells.append({**base, "column": "100sqrtPE/N", "statistic": "rel_root_pe", "value": rpe, "mc_se": None})
    k_hats = np.array([res["k_hat"] for res in results if isinstance(res.get("k_hat"), (int, np.integer))])
    if k_hats.size:
        cells.append({"variant": "degree", "row": "median", "column": "k_hat", "statistic": "k_hat",
                      "value": float(np.median(k_hats)), "mc_se": None,
                      "successes": int(k_hats.size), "failures": sc.replicates - int(k_hats.size)})
    return SimReport("richness", sc.label(), sc.size, sc.replicates, sc.seed, cells,
                     time.perf_counter() - t0)


def _replace(sc, **changes):
    from dataclasses import replace

    return replace(sc, **changes)


def run_study(study, sc):
    if study == "rejection":
        return run_rejection_study(sc)
    if study == "degree":
        return run_degree_study(sc)
    if study == "richness":
        return run_richness_study(sc)
    raise InvalidArgumentError(f"unknown study {study!r}")


# --------------------------------------------------------------------------
# sample-size calculators


def d_parametric(h, alpha=0.05, beta=0.05):
    """Sample size for power ``1 - beta`` of the parametric Poisson test of
    ``lambda^{h+1}`` against ``lambda^h``::

        d_P = ((sqrt(l_h) nu_beta - sqrt(l_{h+1}) nu_{1-alpha}) / (l_h - l_{h+1}))^2
    """
    if h < 1:
        raise InvalidArgumentError("h must be >= 1")
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise InvalidArgumentError("alpha and beta must lie in (0, 1)")
    lh, lh1 = lambda_threshold(h), lambda_threshold(h + 1)
    num = math.sqrt(lh) * special.ndtri(beta) - math.sqrt(lh1) * special.ndtri(1 - alpha)
    return float((num / (lh - lh1)) ** 2)


@dataclass
class EfficiencyResult:
    d_p1: int
    curve: list
    tau: int
    q: float


def d_p1_efficiency(h, alpha=0.05, beta=0.05, B=100_000, seed=0, d_max=10 ** 9):
    """Smallest ``d`` at which the Gaussian-shift power of P1 for ``H^{h+1}``
    under Poisson(``lambda^h``) reaches ``1 - beta``.

    The power is
    ``P(min_j {sqrt(d) nabla^{h+1} p^h_j + (M Z)_j} <= q)`` with ``q`` the
    P1 threshold at ``p^{h+1}`` and ``M`` the square root of
    ``A Gamma(p^h) A^T``.  The same ``B`` normal vectors are reused for
    every ``d`` so the estimated curve is monotone; the search doubles ``d``
    and then bisects on integers.

    Returns
    -------
    EfficiencyResult
        ``curve`` lists the evaluated ``(d, power)`` pairs sorted by ``d``.
    """
    if h < 1:
        raise InvalidArgumentError("h must be >= 1")
    k = h + 1
    lh, lh1 = lambda_threshold(h), lambda_threshold(h + 1)
    tau = max(poisson_cutoff(lh), poisson_cutoff(lh1))
    ph = poisson_dist(lh, tau).padded(tau + 1)
    ph1 = poisson_dist(lh1, tau).padded(tau + 1)
    A = difference_matrix(k, tau, tau + 1)
    rng = make_rng(seed)
    Z = rng.standard_normal((B, tau))
    M_null = psd_sqrt(A @ build_gamma(ph1) @ A.T)
    q = lower_quantile((Z @ M_null.T).min(axis=1), alpha)
    noise = Z @ psd_sqrt(A @ build_gamma(ph) @ A.T).T
    mu = A @ ph
    cache = {}

    def power(d):
        if d not in cache:
            cache[d] = float(np.mean((math.sqrt(d) * mu + noise).min(axis=1) <= q))
        return cache[d]

    target = 1 - beta
    hi = 1
    while power(hi) < target:
        if hi >= d_max:
            raise InvalidArgumentError(f"power {1 - beta} not reached below d = {d_max}")
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power(mid) >= target:
            hi = mid
        else:
            lo = mid
    return EfficiencyResult(d_p1=hi, curve=sorted(cache.items()), tau=tau, q=q)


def spline_min_d(h, tau, alpha=0.05):
    """``nu_alpha^2 C(h + tau, h) (h + (h + 1)^2)``: sample size above which P1
    detects the top knot of ``Q^h_tau`` when testing ``H^{h+1}``."""
    if h < 1 or tau < 1:
        raise InvalidArgumentError("h and tau must be >= 1")
    return float(special.ndtri(alpha) ** 2 * binom(h + tau, h) * (h + (h + 1) ** 2))


def log_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
