"""Self-training of linear predictors from summary statistics.

Monte-Carlo resampling of train/validation summary vectors, reference-panel
estimators, and closed-form asymptotic prediction accuracy.
"""

from .errors import ConfigError, DegenerateError, NumericalError, SumtrainError, ValidationError
from .estimators import (
    EnsembleRule,
    LinearRule,
    MultiAncestryRule,
    custom_fit,
    ensemble_fit,
    multi_fit,
    ridge_fit,
    threshold_fit,
)
from .evaluation import (
    R2Inputs,
    TuneResult,
    TuningContext,
    optimal_two_pop_weights,
    r2_holdout,
    r2_individual,
    r2_pseudo,
    tune_ensemble,
    tune_theta,
    tune_threshold,
)
from .model_gen import (
    Covariance,
    CovarianceSpec,
    Dataset,
    GenConfig,
    MultiAncestryConfig,
    build_covariance,
    calibrate_noise,
    generate_dataset,
    generate_multi_dataset,
    matrix_sqrt_psd,
    sample_effects,
    sample_multi_effects,
)
from .summary import (
    LDReference,
    PseudoSplit,
    SummaryStats,
    compute_summary,
    individual_split,
    oracle_xty_covariance,
    plugin_xty_covariance,
    population_xty_covariance,
    pseudo_split,
)
from .theory import (
    RuleEquivalents,
    SpectralState,
    TheoryInputs,
    compute_rho,
    ridge_equivalents,
    solve_tau,
    theory_r2_ensemble,
    theory_r2_general,
    theory_r2_multi,
    theory_r2_ridge,
    threshold_equivalents,
    trace_second_moment_rhs,
)

__version__ = "0.1.0"
