"""From-scratch MLP training: forward/backward passes driven by the analytic
loss deltas, SGD with momentum and weight decay, learning-rate schedules, and
the per-epoch metrics loop.

The network is a stack of ReLU hidden layers with an identity output; the raw
pre-activations z go straight into the loss evaluators, which hand back the
output errors that seed backpropagation.  A run is fully determined by
(seed, config, data): weight init, per-epoch shuffles, and noise streams are
all derived from the one seed, so repeating a run reproduces its metrics bit
for bit.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .errors import ConfigError, DivergenceError, ParseError
from .losses import LossSpec, evaluate_batch
from .numerics import RngStream, glorot_uniform

_EVAL_CHUNK = 8192
_CHECKPOINT_MAGIC = b"RMLP"
_CHECKPOINT_VERSION = 1

# child-stream keys under the run seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


@dataclass
class MlpModel:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


class Gradients(NamedTuple):
    """Per-parameter arrays mirroring MlpModel; also used for momentum state."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


class ForwardCache(NamedTuple):
    activations: list[np.ndarray]  # input to each layer
    relu_masks: list[np.ndarray]  # strict pre > 0, one per hidden layer


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: ``exponential`` decays by ``decay`` each epoch,
    ``step`` multiplies by 0.1 at each milestone epoch."""

    kind: str
    initial_lr: float
    decay: float = 0.95
    milestones: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("exponential", "step"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.initial_lr <= 0:
            raise ConfigError(f"initial learning rate must be positive, got {self.initial_lr}")
        if self.kind == "exponential" and self.decay <= 0:
            raise ConfigError(f"decay must be positive, got {self.decay}")
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    epochs: int
    schedule: Schedule
    batch_size: int = 32
    momentum: float = 0.95
    weight_decay: float = 0.0
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class MetricsRow:
    """One epoch of training telemetry.

    ``false_label_accuracy`` is the accuracy on the noise-masked training rows
    scored against their clean labels; it is None when nothing is masked.
    ``test_accuracy`` is None when no test set was supplied.
    """

    epoch: int
    train_accuracy: float
    test_accuracy: float | None
    false_label_accuracy: float | None
    mean_train_loss: float
    learning_rate: float


def init_mlp(input_dim: int, hidden: list[int], n_classes: int, rng: RngStream) -> MlpModel:
    """Glorot-uniform weights, zero biases, for input -> hidden... -> n_classes."""
    dims = [int(input_dim), *(int(h) for h in hidden), int(n_classes)]
    if any(d < 1 for d in dims):
        raise ValueError(f"all layer dimensions must be >= 1, got {dims}")
    weights = [glorot_uniform(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return MlpModel(weights, biases)


def forward(model: MlpModel, batch) -> tuple[np.ndarray, ForwardCache]:
    """Pre-activations z of shape (batch, n_classes) plus the backward cache."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[0]:
        raise ValueError(
            f"batch shape {x.shape} does not match input dimension {model.weights[0].shape[0]}"
        )
    activations = [x]
    masks = []
    h = x
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        pre = h @ W + b
        mask = pre > 0.0  # subgradient 0 at exactly 0
        h = np.where(mask, pre, 0.0)
        activations.append(h)
        masks.append(mask)
    z = h @ model.weights[-1] + model.biases[-1]
    return z, ForwardCache(activations, masks)


def backward_from_delta(model: MlpModel, cache: ForwardCache, delta) -> Gradients:
    """Gradients of the batch-mean loss given per-example output errors."""
    delta = np.asarray(delta, dtype=np.float64)
    n_out = model.weights[-1].shape[1]
    if delta.ndim != 2 or delta.shape[1] != n_out or delta.shape[0] != cache.activations[0].shape[0]:
        raise ValueError(f"delta shape {delta.shape} does not match the forward cache")
    d = delta / delta.shape[0]
    grad_w: list[np.ndarray] = []
    grad_b: list[np.ndarray] = []
    for i in reversed(range(len(model.weights))):
        grad_w.insert(0, cache.activations[i].T @ d)
        grad_b.insert(0, d.sum(axis=0))
        if i > 0:
            d = (d @ model.weights[i].T) * cache.relu_masks[i - 1]
    return Gradients(grad_w, grad_b)


def sgd_step(
    model: MlpModel,
    grads: Gradients,
    lr: float,
    momentum: float,
    weight_decay: float,
    velocity: Gradients | None,
) -> tuple[MlpModel, Gradients]:
    """v <- momentum*v + (g + wd*w); w <- w - lr*v.  Biases skip weight decay."""
    if velocity is None:
        velocity = Gradients(
            [np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases],
        )
    new_w, new_b, vel_w, vel_b = [], [], [], []
    for W, g, v in zip(model.weights, grads.weights, velocity.weights):
        v = momentum * v + (g + weight_decay * W)
        vel_w.append(v)
        new_w.append(W - lr * v)
    for b, g, v in zip(model.biases, grads.biases, velocity.biases):
        v = momentum * v + g
        vel_b.append(v)
        new_b.append(b - lr * v)
    return MlpModel(new_w, new_b), Gradients(vel_w, vel_b)


def lr_at(schedule: Schedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if schedule.kind == "exponential":
        return schedule.initial_lr * schedule.decay**epoch
    hits = sum(1 for m in schedule.milestones if m <= epoch)
    return schedule.initial_lr * 0.1**hits


def predict(model: MlpModel, features) -> np.ndarray:
    """Argmax class indices; ties resolve to the lowest index."""
    features = np.asarray(features, dtype=np.float64)
    preds = np.empty(features.shape[0], dtype=np.int64)
    for start in range(0, features.shape[0], _EVAL_CHUNK):
        z, _ = forward(model, features[start : start + _EVAL_CHUNK])
        preds[start : start + _EVAL_CHUNK] = z.argmax(axis=1)
    return preds


def evaluate(model: MlpModel, ds: Dataset, against_clean: bool = False) -> float:
    """Accuracy of the plain (bias-free) forward pass.

    With ``against_clean`` the score is restricted to the noise-masked rows
    and compared against the clean labels: the false-label accuracy.
    """
    preds = predict(model, ds.features)
    if against_clean:
        if not ds.noise_mask.any():
            raise ConfigError("false-label accuracy is undefined: the noise mask is empty")
        sel = ds.noise_mask
        return float((preds[sel] == ds.clean_labels[sel]).mean())
    return float((preds == ds.labels).mean())


def train(
    train_ds: Dataset,
    test_ds: Dataset | None,
    hidden: list[int],
    cfg: TrainConfig,
) -> tuple[MlpModel, list[MetricsRow]]:
    """Run the full training loop and return the final model with its history.

    Each epoch reshuffles with a stream derived from (seed, epoch), walks the
    mini-batches (the last short batch included), pushes the loss deltas
    through backprop, and records a MetricsRow.  The loss spec's epsilon is
    applied per example inside the loss only; every recorded accuracy comes
    from the unbiased forward pass.
    """
    if test_ds is not None and test_ds.n_classes != train_ds.n_classes:
        raise ValueError(
            f"class counts disagree: train {train_ds.n_classes}, test {test_ds.n_classes}"
        )
    root = RngStream(cfg.seed)
    model = init_mlp(train_ds.n_features, hidden, train_ds.n_classes, root.child(_INIT_STREAM))
    velocity: Gradients | None = None
    history: list[MetricsRow] = []
    features, labels = train_ds.features, train_ds.labels
    n = train_ds.n_examples
    has_mask = bool(train_ds.noise_mask.any())
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg.schedule, epoch)
        if cfg.shuffle:
            order = root.child(_SHUFFLE_STREAM, epoch).generator.permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start : start + cfg.batch_size]
            z, cache = forward(model, features[sel])
            values, deltas = evaluate_batch(cfg.loss, z, labels[sel])
            batch_loss = float(values.sum())
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}, batch {batch_index}"
                )
            loss_sum += batch_loss
            grads = backward_from_delta(model, cache, deltas)
            model, velocity = sgd_step(
                model, grads, lr, cfg.momentum, cfg.weight_decay, velocity
            )
        history.append(
            MetricsRow(
                epoch=epoch,
                train_accuracy=evaluate(model, train_ds),
                test_accuracy=evaluate(model, test_ds) if test_ds is not None else None,
                false_label_accuracy=(
                    evaluate(model, train_ds, against_clean=True) if has_mask else None
                ),
                mean_train_loss=loss_sum / n,
                learning_rate=lr,
            )
        )
    return model, history


# ---------------------------------------------------------------------------
# Metrics and checkpoint serialization.
# ---------------------------------------------------------------------------

METRICS_FIELDS = (
    "epoch",
    "train_accuracy",
    "test_accuracy",
    "false_label_accuracy",
    "mean_train_loss",
    "learning_rate",
)


def write_metrics_csv(history: list[MetricsRow], path) -> None:
    """One CSV row per epoch; absent metrics are written as empty fields."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_FIELDS)
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    repr(row.train_accuracy),
                    "" if row.test_accuracy is None else repr(row.test_accuracy),
                    "" if row.false_label_accuracy is None else repr(row.false_label_accuracy),
                    repr(row.mean_train_loss),
                    repr(row.learning_rate),
                ]
            )


def read_metrics_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for record in reader:
            rows.append(
                MetricsRow(
                    epoch=int(record["epoch"]),
                    train_accuracy=float(record["train_accuracy"]),
                    test_accuracy=(
                        float(record["test_accuracy"]) if record["test_accuracy"] else None
                    ),
                    false_label_accuracy=(
                        float(record["false_label_accuracy"])
                        if record["false_label_accuracy"]
                        else None
                    ),
                    mean_train_loss=float(record["mean_train_loss"]),
                    learning_rate=float(record["learning_rate"]),
                )
            )
    return rows


def summarize_finals(histories: list[list[MetricsRow]]) -> dict:
    """Mean and standard error of the final-epoch metrics across seeds."""

    def stats(values):
        values = [v for v in values if v is not None]
        if not values:
            return None
        arr = np.asarray(values, dtype=np.float64)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "stderr": stderr, "n": arr.size}

    finals = [h[-1] for h in histories if h]
    return {
        "train_accuracy": stats([r.train_accuracy for r in finals]),
        "test_accuracy": stats([r.test_accuracy for r in finals]),
        "false_label_accuracy": stats([r.false_label_accuracy for r in finals]),
        "mean_train_loss": stats([r.mean_train_loss for r in finals]),
    }


def save_model(model: MlpModel, path) -> None:
    """Flat little-endian binary: magic, version, layer shapes, weights, biases."""
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", _CHECKPOINT_VERSION, len(model.weights)))
        for W in model.weights:
            f.write(struct.pack("<II", *W.shape))
        for W in model.weights:
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
        for b in model.biases:
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ParseError(f"{path}: bad checkpoint magic {magic!r} at byte 0")
        header = f.read(8)
        if len(header) != 8:
            raise ParseError(f"{path}: truncated checkpoint header")
        version, n_layers = struct.unpack("<II", header)
        if version != _CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        shapes = []
        for _ in range(n_layers):
            raw = f.read(8)
            if len(raw) != 8:
                raise ParseError(f"{path}: truncated layer shape table")
            shapes.append(struct.unpack("<II", raw))
        weights, biases = [], []
        for fan_in, fan_out in shapes:
            count = fan_in * fan_out
            raw = f.read(8 * count)
            if len(raw) != 8 * count:
                raise ParseError(f"{path}: truncated weight data")
            weights.append(np.frombuffer(raw, dtype="<f8").reshape(fan_in, fan_out).copy())
        for _, fan_out in shapes:
            raw = f.read(8 * fan_out)
            if len(raw) != 8 * fan_out:
                raise ParseError(f"{path}: truncated bias data")
            biases.append(np.frombuffer(raw, dtype="<f8").copy())
    return MlpModel(weights, biases)
