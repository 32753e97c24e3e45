"""Testing k-monotonicity of discrete distributions and estimating the number
of classes under a k-monotone abundance model."""

from .errors import (CalibrationError, DegenerateSupportError, EmptySampleError,
                     InapplicableOrderError, InvalidArgumentError, InvalidConstructionError,
                     KMonotoneError, NotKMonotoneError, SolverError)
from .shape import (DiscreteDist, SplineMixture, decompose, is_k_monotone, lambda_threshold,
                    make_abundance, mixture_dist, nabla, nabla_vector, poisson_dist, recompose,
                    shift_up, spline_pmf)
from .monotest import FreqSample, TestConfig, TestReport, mc_quantile_q, calibrate_u, run_test
from .bootstrap import boot_quantile_q, double_boot_u
from .degree import DegreeReport, estimate_k
from .projection import Projection, project_k_monotone
from .richness import (AbundanceSample, RichnessEstimate, bias_variance, chao1, ls_project,
                       n_hat_empirical, n_tilde, richness_auto)
from .simulation import (Scenario, SimReport, d_p1_efficiency, d_parametric, run_degree_study,
                         run_rejection_study, run_richness_study, spline_min_d)

__version__ = "0.1.0"
