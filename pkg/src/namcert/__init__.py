"""Certified minimal feature-subset explanations for neural additive models."""

from .model import (
    ColumnNorm,
    DatasetError,
    FeatureMeta,
    Instance,
    ModelFormatError,
    NamModel,
    PerturbationSpec,
    Prediction,
    UnivariateNet,
    default_meta,
    feature_intervals,
    forward_component,
    identity_net,
    linear_net,
    load_dataset,
    load_model,
    mirror_net,
    predict,
    reduce_pairwise,
    reduce_regression,
    relu_net,
    save_model,
)
from .pwl import Extrema, PieceLimitError, PwlFunction, exact_extrema, propagate
from .verifier import (
    Budget,
    BudgetExceededError,
    IbpBounds,
    MinResult,
    VerifyOutcome,
    ibp_bounds,
    min_lower_bound,
    minimize,
    verify_ge,
)
from .importance import (
    ImportanceInterval,
    ImportanceOrder,
    SortConfig,
    SortContradictionError,
    apply_counterexample_tightening,
    probe_near_upper_bound,
    sort_features,
)
from .explain import (
    BruteForceResult,
    ExplanationResult,
    MulticlassSuffOracle,
    SensitivityConfig,
    SuffOracle,
    SufficiencyCertificate,
    SufficiencyQuery,
    brute_force_min,
    explain_cardinal_linear,
    explain_cardinal_log,
    explain_sampling,
    explain_subset_minimal,
    sensitivity_order,
    suff,
)

__version__ = "0.1.0"
