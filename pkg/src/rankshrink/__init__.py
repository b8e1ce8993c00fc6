"""Selection-bias correction for large-scale simultaneous estimation.

Ranking many noisy estimates inflates the extremes: the largest observed
statistics systematically overshoot the effects they point at.  This package
estimates the rank-wise bias curve by parametric bootstrap (first and second
order), benchmarks it against the true-means oracle, and ships empirical-Bayes
(Tweedie/Lindsey) and James-Stein comparators together with a simulation
harness and CLI.
"""

from .core import (
    BiasCurve,
    ConfigError,
    EffectEstimates,
    InputFormatError,
    InvalidInputError,
    NumericalError,
    RankedSample,
    RngSpec,
    as_effect_vector,
    rank_sample,
)
from .gauss_bias import (
    boot1,
    boot2,
    default_window,
    james_stein,
    mc_bias,
    oracle_estimates,
    smooth_bias,
)
from .genmod import (
    Anova3Model,
    GaussianMeansModel,
    ModelFit,
    ParametricModel,
    anova3_fit,
    anova3_make,
    generic_bias,
    generic_boot,
)
from .harness import (
    ScenarioSpec,
    Theorem1Row,
    TrialReport,
    TwoPointPrior,
    UniformPrior,
    gen_scenario,
    make_prior,
    run_table,
    t_to_z,
    theorem1_experiment,
    two_sample_t,
)
from .tweedie import BinnedCounts, DensityModel, bin_z, fit_lindsey, tweedie_correct

__version__ = "0.1.0"

__all__ = [
    "BiasCurve",
    "ConfigError",
    "EffectEstimates",
    "InputFormatError",
    "InvalidInputError",
    "NumericalError",
    "RankedSample",
    "RngSpec",
    "as_effect_vector",
    "rank_sample",
    "boot1",
    "boot2",
    "default_window",
    "james_stein",
    "mc_bias",
    "oracle_estimates",
    "smooth_bias",
    "Anova3Model",
    "GaussianMeansModel",
    "ModelFit",
    "ParametricModel",
    "anova3_fit",
    "anova3_make",
    "generic_bias",
    "generic_boot",
    "ScenarioSpec",
    "Theorem1Row",
    "TrialReport",
    "TwoPointPrior",
    "UniformPrior",
    "gen_scenario",
    "make_prior",
    "run_table",
    "t_to_z",
    "theorem1_experiment",
    "two_sample_t",
    "BinnedCounts",
    "DensityModel",
    "bin_z",
    "fit_lindsey",
    "tweedie_correct",
    "__version__",
]
