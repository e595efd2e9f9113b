"""Sparse Bayesian regression with logit-normal spike-and-slab shrinkage priors."""

from .dataprep import (
    Dataset,
    FoldPlan,
    impute_mean,
    kfold_stratified,
    load_csv,
    log1p_transform,
    loocv_balanced,
    save_csv,
    scale_unit,
    standardize,
    wald_screen,
)
from .errors import (
    DataError,
    DimensionError,
    LncassError,
    ModelSpecError,
    SamplingError,
)
from .gam import KnotGrid, expand_design, phi, reconstruct_f
from .metrics import (
    PosteriorSummary,
    RocCurve,
    auc,
    hard_select,
    mae,
    recovery_auc,
    roc_curve,
    summarize,
)
from .model import (
    HyperParams,
    Likelihood,
    LogDensityResult,
    ModelSpec,
    ParameterVector,
    Prior,
    inv_logit,
    log_likelihood,
    log_posterior_with_gradient,
    log_prior_horseshoe,
    log_prior_lncass_basic,
    log_prior_lncass_gam,
    log_prior_lncass_grouped,
    logit,
)
from .sampler import PosteriorDraws, SamplerConfig, ess, leapfrog, rhat, sample
from .simulate import (
    GroundTruth,
    SimCase,
    latin_hypercube,
    simulate_case,
    simulate_regression,
    truth_coefficients,
)

__version__ = "0.1.0"
