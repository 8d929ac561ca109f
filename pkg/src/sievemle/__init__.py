"""Sieve maximum likelihood for partially linear and Cox regression.

Estimation with growing parametric nuisance families, plus the numerical
diagnostics that quantify how the sieve laws approach the generating law:
exact log-likelihood ratios, efficient-score gaps, profile-likelihood
expansions, and replication studies of efficiency.
"""

__version__ = "0.1.0"

from .basis import (
    BasisMatrix,
    BasisSpec,
    basis_design,
    coefficients_for_target,
    evaluate_basis,
    gram_and_orthonormalize,
)
from .contiguity import (
    DiagnosticsReport,
    diagnostics_report,
    hellinger_sq,
    jm_convergence,
    lan_residual,
    loglr_plm,
    projection_convergence_test,
    rate_check,
    score_approx_err,
)
from .cox import (
    CoxData,
    CoxDgpSpec,
    CoxFit,
    CoxSample,
    efficient_info_cox,
    fit_cox_partial,
    loglr_cox,
    s_n_k,
    sieve_efficient_score_cox,
    sieve_scores_cox,
    simulate_cox,
)
from .errors import SieveError
from .leastfav import (
    ExpansionReport,
    FisherBlocks,
    expansion_report,
    gamma_sub,
    l_m_curve,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentSummary,
    run_experiment,
    summarize,
)
from .plm import (
    PlmData,
    PlmDgpSpec,
    PlmFit,
    PlmSample,
    efficient_info_plm,
    efficient_score_plm_m,
    fit_plm,
    profile_loglik_plm,
    simulate_plm,
)
