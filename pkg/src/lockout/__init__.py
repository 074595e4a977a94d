"""Path-seeking sparse training for dense networks and linear models."""

from .network import (
    NetworkParams,
    NetworkSpec,
    NumericError,
    ShapeError,
    backward,
    error_rate,
    forward,
    loss_value,
    relative_rmse,
)
from .optim import (
    ConvergenceRule,
    OptimizerKind,
    TrainingDivergedError,
    TrainResult,
    optimizer_step,
    train_to_convergence,
    train_with_early_stopping,
)
from .penalties import (
    ConfigError,
    PenaltySpec,
    RegularizedSelection,
    penalty_slope,
    penalty_value,
)
from .planner import (
    DS,
    DSC,
    FREE,
    LockoutConfig,
    LockoutState,
    PathDivergedError,
    StepPlan,
    apply_step,
    classify,
    plan_linear_step,
    plan_step,
    run_path,
)
from .oracles import (
    LinStepInstance,
    OracleError,
    finite_diff_gradient,
    grid_search_step,
    lasso_path_oracle,
    lp_step_oracle,
)
from .datasets import (
    Dataset,
    FormatError,
    add_noise_snr,
    friedman_signal,
    gen_friedman,
    gen_synthetic_one_node,
    load_csv,
    one_node_signal,
    split_dataset,
    split_tags,
    zscore_by_train,
)
from .pathlog import (
    PathLog,
    PathPoint,
    export_log,
    feature_importance,
    load_log,
    select_min_validation,
    select_sparsest_within,
)

__version__ = "0.1.0"
