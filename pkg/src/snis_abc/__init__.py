"""Softmax-weighted centroid estimators with analytical bias correction."""
from .errors import (
    DominatedWeightError,
    EmptyBatchError,
    ExperimentError,
    InsufficientSamplesError,
    InvalidInputError,
    SnisAbcError,
)
from .kernel import KernelSpec, WeightProfile, eval_log_weights, normalize, weight_profile
from .estimators import (
    BootstrapSpec,
    BrSnisSpec,
    CentroidEstimate,
    Method,
    abc_centroid,
    bootstrap_centroid,
    brsnis_centroid,
    jackknife_centroid,
    standard_centroid,
)
from .distributions import (
    GaussianMixtureSpec,
    QueryScheme,
    QuerySet,
    SamplePool,
    build_pool,
    build_queries,
    draw_minibatch,
    four_mode_spec,
)
from .oracle import LeadingBias, TargetCentroid, effective_sample_size, leading_bias, n1_bias, target_centroid
from .harness import (
    ExperimentConfig,
    ScalingReport,
    TrialAggregate,
    bias_corrected_norm,
    fit_slope,
    run_baseline_comparison,
    run_point,
    run_scaling_experiment,
)

__version__ = "0.1.0"
