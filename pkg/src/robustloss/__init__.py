"""Noise-robust classification losses with analytic output errors, output-bias
calibration, learning-curve diagnostics, and a deterministic MLP training
harness, plus a scikit-learn estimator facade and a CLI (``robustloss``)."""

from .analysis import (
    CurveTable,
    Histogram,
    default_z_grid,
    initial_histogram,
    learning_curve,
    overlap_metric,
)
from .bias import BiasProblem, estimate_mean_correct_activation, solve_bias
from .data import (
    Dataset,
    inject_symmetric_noise,
    load_csv,
    load_dataset,
    load_idx,
    save_dataset,
    save_idx,
    split_per_class,
    standardize,
    synth_blobs,
)
from .errors import (
    BracketError,
    ConfigError,
    DivergenceError,
    NumericError,
    ParseError,
    PrecisionError,
    SolverError,
)
from .estimator import RobustMLPClassifier
from .losses import (
    KINDS,
    LossEval,
    LossSpec,
    apply_output_bias,
    evaluate_batch,
    format_loss_key,
    parse_loss_key,
)
from .numerics import RngStream, clamp_probability, glorot_uniform, log_sum_exp, softmax
from .trainer import (
    MetricsRow,
    MlpModel,
    Schedule,
    TrainConfig,
    init_mlp,
    load_model,
    lr_at,
    save_model,
    summarize_finals,
    train,
    write_metrics_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BiasProblem",
    "BracketError",
    "ConfigError",
    "CurveTable",
    "Dataset",
    "DivergenceError",
    "Histogram",
    "KINDS",
    "LossEval",
    "LossSpec",
    "MetricsRow",
    "MlpModel",
    "NumericError",
    "ParseError",
    "PrecisionError",
    "RngStream",
    "RobustMLPClassifier",
    "Schedule",
    "SolverError",
    "TrainConfig",
    "apply_output_bias",
    "clamp_probability",
    "default_z_grid",
    "estimate_mean_correct_activation",
    "evaluate_batch",
    "format_loss_key",
    "glorot_uniform",
    "init_mlp",
    "initial_histogram",
    "inject_symmetric_noise",
    "learning_curve",
    "load_csv",
    "load_dataset",
    "load_idx",
    "load_model",
    "log_sum_exp",
    "lr_at",
    "overlap_metric",
    "parse_loss_key",
    "save_dataset",
    "save_idx",
    "save_model",
    "softmax",
    "solve_bias",
    "split_per_class",
    "standardize",
    "summarize_finals",
    "synth_blobs",
    "train",
    "write_metrics_csv",
]
