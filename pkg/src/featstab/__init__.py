"""Stability of MDA, LIME and SHAP feature rankings over random forests."""

__version__ = "0.1.0"

from .data import (
    FeatureProvenance,
    LabeledDataset,
    Provenance,
    SplitIndices,
    Task,
    load_csv,
    split,
    synth_classification,
    synth_regression,
    time_split,
)
from .errors import ConfigError, DataError, FeatstabError, NumericError
from .explain import (
    Algorithm,
    ExplainerConfig,
    ImportanceMatrix,
    LimeConfig,
    ShapConfig,
    exact_shap_values,
    lime_importance,
    mda_importance,
    shap_importance,
    shap_values,
)
from .forest import ForestConfig, ForestModel, fit
from .pipeline import Experiment, prepare
from .stability import (
    InstabilityCurve,
    RankMatrix,
    StabilityReport,
    convergence_study,
    instability_index,
    plateau_point,
    rank_scores,
    stability_report,
)
