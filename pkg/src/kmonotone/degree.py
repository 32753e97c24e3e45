"""Sequential estimation of the degree of monotonicity."""

from dataclasses import dataclass, field, replace

from ._rng import as_seed_sequence, derive_seed
from .monotest import TestConfig, run_test

DEFAULT_KMAX = 6


@dataclass
class DegreeReport:
    """Outcome of testing ``H^1, H^2, ...`` until the first rejection.

    ``per_level[i]`` is the report for ``H^{i+1}``.
    """

    k_hat: int
    k_max: int
    alpha: float
    procedure: str
    per_level: list = field(default_factory=list)

    def to_dict(self):
        return {
            "k_hat": self.k_hat, "k_max": self.k_max, "alpha": self.alpha,
            "procedure": self.procedure,
            "per_level": [r.to_dict() for r in self.per_level],
        }


def estimate_k(s, k_max=DEFAULT_KMAX, alpha=0.05, procedure="p1", cfg=None):
    """Estimate ``k_hat = (first rejected level) - 1``, or ``k_max``.

    Levels above the first rejection are not tested.  Level ``l`` draws its
    calibration noise from the stream keyed by ``(seed, l)``.

    Parameters
    ----------
    s : FreqSample
    k_max : int
    alpha : float
    procedure : {"p1", "p2", "p1boot", "p2boot"}
    cfg : TestConfig, optional
        Template for Monte-Carlo sizes, support cap and seed; its ``k``,
        ``alpha`` and ``procedure`` are overridden.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    base = cfg if cfg is not None else TestConfig(k=1)
    root = as_seed_sequence(base.seed)
    reports = []
    k_hat = k_max
    for level in range(1, k_max + 1):
        level_cfg = replace(base, k=level, alpha=alpha, procedure=procedure,
                            seed=derive_seed(root, level))
        rep = run_test(s, level_cfg)
        reports.append(rep)
        if rep.reject:
            k_hat = level - 1
            break
    return DegreeReport(k_hat=k_hat, k_max=k_max, alpha=alpha,
                        procedure=reports[0].procedure, per_level=reports)
