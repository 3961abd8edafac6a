"""Learning-curve diagnostics for the loss families.

The learning curve of a loss is the mean output error at the labelled class,
delta_k, as a function of its pre-activation z_k while the other c-1
pre-activations are drawn N(0, 1) to mimic a freshly initialised network.
Where this curve overlaps the initial distribution of z_k (N(0, 1), or
N(eps, 1) once an output bias is added) the network receives usable gradient;
``overlap_metric`` makes that notion quantitative as E|delta_k| with
z_k ~ N(eps, 1).

The curve tooling keeps the loss spec's own epsilon at zero: the grid (or the
histogram shift) already parameterizes z_k, and letting the spec shift it
again would double-count the bias.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .losses import LossSpec, evaluate_batch, format_loss_key
from .numerics import RngStream

_CHUNK = 100_000


@dataclass(frozen=True)
class CurveTable:
    """Sampled learning curve: mean delta_k (and its standard error) per grid point."""

    z_grid: np.ndarray
    mean_delta_k: np.ndarray
    stderr: np.ndarray
    loss_key: str
    n_classes: int
    n_samples: int


@dataclass(frozen=True)
class Histogram:
    """Binned draws of the initial correct-class pre-activation, shifted by ``shift``."""

    bin_edges: np.ndarray
    counts: np.ndarray
    shift: float


def default_z_grid(lo: float = -10.0, hi: float = 10.0, points: int = 201) -> np.ndarray:
    return np.linspace(lo, hi, points)


def _check_curve_spec(spec: LossSpec):
    if spec.epsilon != 0.0:
        raise ConfigError(
            "loss spec must have epsilon = 0 here; the bias is represented by the "
            "histogram shift, not by re-biasing the sampled pre-activations"
        )


def learning_curve(
    spec: LossSpec, n_classes: int, z_grid, n_samples: int, rng: RngStream
) -> CurveTable:
    """Mean delta_k over fresh N(0,1) draws of the other classes, per grid point.

    Each grid point uses an independent child stream of ``rng``, so the table
    is reproducible regardless of evaluation order.
    """
    _check_curve_spec(spec)
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    z_grid = np.asarray(z_grid, dtype=np.float64)
    if z_grid.size == 0:
        raise ConfigError("empty z grid")
    if z_grid.ndim != 1 or not np.all(np.diff(z_grid) > 0):
        raise ConfigError("z grid must be a strictly increasing vector")
    means = np.empty(z_grid.size)
    errs = np.empty(z_grid.size)
    labels = np.zeros(n_samples, dtype=np.int64)
    for j, zk in enumerate(z_grid):
        Z = np.empty((n_samples, n_classes))
        Z[:, 0] = zk
        Z[:, 1:] = rng.child(j).generator.standard_normal((n_samples, n_classes - 1))
        _, deltas = evaluate_batch(spec, Z, labels)
        dk = deltas[:, 0]
        means[j] = dk.mean()
        errs[j] = dk.std(ddof=1) / np.sqrt(n_samples) if n_samples > 1 else 0.0
    return CurveTable(z_grid, means, errs, format_loss_key(spec), n_classes, n_samples)


def initial_histogram(
    n_classes: int, epsilon: float, n_samples: int, bin_edges, rng: RngStream
) -> Histogram:
    """Histogram of n_samples draws from N(epsilon, 1) over the given edges.

    Draws are clipped into the edge range so the counts always sum to
    n_samples; pick edges wide enough that the clip is immaterial.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    bin_edges = np.asarray(bin_edges, dtype=np.float64)
    if bin_edges.size < 2 or not np.all(np.diff(bin_edges) > 0):
        raise ConfigError("bin edges must be a strictly increasing vector of length >= 2")
    draws = epsilon + rng.generator.standard_normal(n_samples)
    draws = np.clip(draws, bin_edges[0], bin_edges[-1])
    counts, _ = np.histogram(draws, bins=bin_edges)
    return Histogram(bin_edges, counts, epsilon)


def overlap_metric(
    spec: LossSpec, n_classes: int, epsilon: float, n_samples: int, rng: RngStream
) -> float:
    """E|delta_k| with z_k ~ N(epsilon, 1) and the other classes N(0, 1).

    Measures how much gradient a freshly initialised network actually
    receives: near zero when the learning curve and the initial z_k
    distribution fail to overlap.
    """
    _check_curve_spec(spec)
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        Z = rng.generator.standard_normal((m, n_classes))
        Z[:, 0] += epsilon
        _, deltas = evaluate_batch(spec, Z, np.zeros(m, dtype=np.int64))
        total += np.abs(deltas[:, 0]).sum()
        done += m
    return total / n_samples


def write_curve_csv(table: CurveTable, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["z_k", "mean_delta_k", "stderr"])
        for zk, mean, err in zip(table.z_grid, table.mean_delta_k, table.stderr):
            writer.writerow([repr(float(zk)), repr(float(mean)), repr(float(err))])


def write_histogram_csv(hist: Histogram, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(count)])
