"""Scoring and prediction of momentary facial expressiveness.

The pipeline aggregates crowd ratings of 3-second clips into a single latent
expressiveness score per clip, engineers nine kinematic/action-unit features
from facial-tracking time series, trains an elastic-net linear model on
subject-disjoint splits, and compares it against random and human baselines
with cluster-bootstrap inference. See the ``expresskit`` CLI for the
file-based pipeline and the submodules for the library API.
"""

from .errors import ExpresskitError, NumericalError, ValidationError
from .evaluation import (
    EvalPairs,
    cluster_bootstrap,
    normal_baseline,
    nrmse,
    pearson,
    uniform_baseline,
)
from .features import FEATURE_NAMES, ClipFeatureExtractor, ClipFeatures, clip_features
from .ingest import (
    ClipId,
    RatingsTable,
    Task,
    TrackingSequence,
    parse_ratings,
    parse_tracking,
    segment_clips,
)
from .psychometrics import (
    CfaFit,
    CfaScorer,
    IccResult,
    bartlett_scores,
    fit_cfa,
    human_baseline_scores,
    icc_1k,
    mean_answers,
)
from .regression import (
    ElasticNetFit,
    ElasticNetRegressor,
    HyperGrid,
    fit_elastic_net,
    grid_search,
    make_splits,
)
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ExpresskitError",
    "ValidationError",
    "NumericalError",
    "Task",
    "ClipId",
    "RatingsTable",
    "TrackingSequence",
    "parse_ratings",
    "parse_tracking",
    "segment_clips",
    "IccResult",
    "CfaFit",
    "CfaScorer",
    "icc_1k",
    "mean_answers",
    "fit_cfa",
    "bartlett_scores",
    "human_baseline_scores",
    "FEATURE_NAMES",
    "ClipFeatures",
    "ClipFeatureExtractor",
    "clip_features",
    "HyperGrid",
    "ElasticNetFit",
    "ElasticNetRegressor",
    "make_splits",
    "fit_elastic_net",
    "grid_search",
    "EvalPairs",
    "nrmse",
    "pearson",
    "uniform_baseline",
    "normal_baseline",
    "cluster_bootstrap",
    "SynthConfig",
    "generate",
]
