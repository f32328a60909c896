"""Model families and the experimental protocol built on them."""

from .dataset import (
    DOMAIN_SCHEMA,
    Dataset,
    DatasetError,
    Normalizer,
    Schema,
    ZeroVarianceError,
    fit_normalizer,
    load_csv,
    load_feature_csv,
    split,
    split_indices,
    write_dataset_csv,
)
from .grnn import GrnnModel, fit_grnn, grnn_distance, grnn_predict, select_bandwidth
from .mlfn import (
    MlfnModel,
    MlfnTopology,
    TargetScaler,
    TrainingDivergedError,
    TrainingResult,
    finite_difference_gradient,
    forward,
    gradient,
    objective,
    sigmoid,
)
from .mlfn import train as train_mlfn
from .svr import SvrModel, rbf_kernel, svr_dual_objective, svr_grid_search, svr_predict, svr_train
from .metrics import (
    Evaluation,
    MetricsError,
    ToleranceRuleError,
    check_tolerance_rule,
    evaluate,
    rms_error,
    tolerance_accuracy,
)
from .harness import (
    FittedCandidate,
    RegressionModel,
    SearchReport,
    SearchRow,
    TrainedModel,
    TrialSeries,
    abest_net_search,
    best_net_search,
    default_roster,
    emit_scatter_report,
    evaluate_model,
    fit_candidate,
    node_sweep,
    parse_node_range,
    repeated_trials,
)
from .persistence import (
    ChecksumMismatchError,
    ModelFile,
    ModelFormatError,
    Provenance,
    UnsupportedVersionError,
    load_model,
    save_model,
)
from .fixture import generate_yield_fixture
from .optimize import ConditionOptimum, bounds_from_dataset, optimize_conditions

__all__ = [
    "DOMAIN_SCHEMA",
    "Dataset",
    "DatasetError",
    "Normalizer",
    "Schema",
    "ZeroVarianceError",
    "fit_normalizer",
    "load_csv",
    "load_feature_csv",
    "split",
    "split_indices",
    "write_dataset_csv",
    "GrnnModel",
    "fit_grnn",
    "grnn_distance",
    "grnn_predict",
    "select_bandwidth",
    "MlfnModel",
    "MlfnTopology",
    "TargetScaler",
    "TrainingDivergedError",
    "TrainingResult",
    "finite_difference_gradient",
    "forward",
    "gradient",
    "objective",
    "sigmoid",
    "train_mlfn",
    "SvrModel",
    "rbf_kernel",
    "svr_dual_objective",
    "svr_grid_search",
    "svr_predict",
    "svr_train",
    "Evaluation",
    "MetricsError",
    "ToleranceRuleError",
    "check_tolerance_rule",
    "evaluate",
    "rms_error",
    "tolerance_accuracy",
    "FittedCandidate",
    "RegressionModel",
    "SearchReport",
    "SearchRow",
    "TrainedModel",
    "TrialSeries",
    "abest_net_search",
    "best_net_search",
    "default_roster",
    "emit_scatter_report",
    "evaluate_model",
    "fit_candidate",
    "node_sweep",
    "parse_node_range",
    "repeated_trials",
    "ChecksumMismatchError",
    "ModelFile",
    "ModelFormatError",
    "Provenance",
    "UnsupportedVersionError",
    "load_model",
    "save_model",
    "generate_yield_fixture",
    "ConditionOptimum",
    "bounds_from_dataset",
    "optimize_conditions",
]
