"""Dataset container, ingestion (IDX, CSV, synthetic blobs), standardization,
and symmetric label-noise injection with clean-label bookkeeping.

Datasets are immutable: every operation returns a new value, so they are safe
to share across concurrently running training jobs.  Noise injection keeps
the original labels in ``clean_labels`` and flags resampled rows in
``noise_mask``, which is what the false-label accuracy metric scores against.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .numerics import RngStream

IDX_IMAGE_MAGIC = 0x00000803  # unsigned byte tensor, 3 dims
IDX_LABEL_MAGIC = 0x00000801  # unsigned byte vector

_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus (possibly noisy) labels and their clean originals."""

    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    noise_mask: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "clean_labels", np.asarray(self.clean_labels, dtype=np.int64))
        object.__setattr__(self, "noise_mask", np.asarray(self.noise_mask, dtype=bool))
        if self.features.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        n = self.features.shape[0]
        for name in ("labels", "clean_labels", "noise_mask"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        for name in ("labels", "clean_labels"):
            arr = getattr(self, name)
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_classes):
                raise ValueError(f"{name} out of range for {self.n_classes} classes")

    @classmethod
    def from_labeled(cls, features, labels, n_classes: int | None = None) -> "Dataset":
        """Dataset with no noise bookkeeping yet: clean labels, empty mask."""
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(
            features=features,
            labels=labels,
            clean_labels=labels.copy(),
            noise_mask=np.zeros(labels.shape[0], dtype=bool),
            n_classes=n_classes,
        )

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _read_exact(f, count: int, path, what: str) -> bytes:
    offset = f.tell()
    data = f.read(count)
    if len(data) != count:
        raise ParseError(
            f"{path}: truncated {what} at byte {offset}: wanted {count} bytes, got {len(data)}"
        )
    return data


def _read_idx_header(f, path, expected_magic: int, n_dims: int, what: str) -> tuple[int, ...]:
    header = _read_exact(f, 4 * (1 + n_dims), path, f"{what} header")
    magic, *dims = struct.unpack(f">{1 + n_dims}I", header)
    if magic != expected_magic:
        raise ParseError(
            f"{path}: bad magic at byte 0: expected 0x{expected_magic:08x} for {what}, "
            f"got 0x{magic:08x}"
        )
    return tuple(dims)


def load_idx(image_path, label_path) -> Dataset:
    """Load a big-endian IDX image/label file pair (the Fashion-MNIST format).

    Pixel bytes are flattened per image and scaled into [0, 1].  The two
    files must agree on the number of items.
    """
    with open(image_path, "rb") as f:
        count, rows, cols = _read_idx_header(f, image_path, IDX_IMAGE_MAGIC, 3, "u8 images")
        pixels = _read_exact(f, count * rows * cols, image_path, "pixel data")
    with open(label_path, "rb") as f:
        (label_count,) = _read_idx_header(f, label_path, IDX_LABEL_MAGIC, 1, "u8 labels")
        label_bytes = _read_exact(f, label_count, label_path, "label data")
    if label_count != count:
        raise ParseError(
            f"{label_path}: item count {label_count} does not match {count} images in {image_path}"
        )
    features = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    return Dataset.from_labeled(features, labels)


def save_idx(ds: Dataset, image_path, label_path, shape: tuple[int, int] | None = None) -> None:
    """Write a dataset as an IDX image/label pair (features quantized to u8).

    Features must lie in [0, 1]; values are rounded to the nearest 1/255, so
    the write/read round trip is the identity exactly when the features came
    from u8 data.  ``shape`` gives the per-image (rows, cols); the default is
    a single row of n_features columns.
    """
    if ds.features.size and (ds.features.min() < 0.0 or ds.features.max() > 1.0):
        raise ValueError("features must lie in [0, 1] to be stored as bytes")
    if ds.n_classes > 256:
        raise ValueError("IDX labels are single bytes; need n_classes <= 256")
    rows, cols = shape if shape is not None else (ds.n_features, 1)
    if rows * cols != ds.n_features:
        raise ValueError(f"shape {rows}x{cols} does not cover {ds.n_features} features")
    pixels = np.rint(ds.features * 255.0).astype(np.uint8)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGE_MAGIC, ds.n_examples, rows, cols))
        f.write(pixels.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABEL_MAGIC, ds.n_examples))
        f.write(ds.labels.astype(np.uint8).tobytes())


def load_csv(path, label_column: str) -> Dataset:
    """Load a headered CSV; every non-label column is parsed as a real feature."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected a header row")
        if label_column not in header:
            raise ConfigError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                labels.append(int(row[label_idx]))
            except ValueError:
                raise ParseError(
                    f"{path}:{lineno}: label {row[label_idx]!r} is not an integer"
                ) from None
            if labels[-1] < 0:
                raise ParseError(f"{path}:{lineno}: label {labels[-1]} is negative")
            try:
                rows.append([float(row[i]) for i in range(len(row)) if i != label_idx])
            except ValueError:
                bad = next(v for i, v in enumerate(row) if i != label_idx and not _is_float(v))
                raise ParseError(f"{path}:{lineno}: non-numeric value {bad!r}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows after the header")
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return Dataset.from_labeled(features, np.array(labels, dtype=np.int64))


def _is_float(value: str) -> bool:
    try:
        float(value)
        return True
    except ValueError:
        return False


def synth_blobs(
    n_classes: int, n_per_class: int, dim: int, separation: float, rng: RngStream
) -> Dataset:
    """Isotropic Gaussian blobs around class means drawn uniformly on a sphere.

    Means sit on the sphere of radius ``separation``; features are
    mean + N(0, I).  At separation 0 the classes are indistinguishable and
    any classifier is stuck at chance.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if dim < 2:
        raise ConfigError(f"need dim >= 2, got {dim}")
    if n_per_class < 1:
        raise ConfigError(f"need n_per_class >= 1, got {n_per_class}")
    g = rng.generator
    means = g.standard_normal((n_classes, dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = separation * means / np.maximum(norms, 1e-12)
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    features = means[labels] + g.standard_normal((labels.size, dim))
    return Dataset.from_labeled(features, labels, n_classes)


def split_per_class(ds: Dataset, n_train_per_class: int) -> tuple[Dataset, Dataset]:
    """Split into (train, test) taking the first n rows of each class for train."""
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == cls)
        if idx.size <= n_train_per_class:
            raise ConfigError(
                f"class {cls} has {idx.size} rows, need more than {n_train_per_class} to split"
            )
        train_idx.append(idx[:n_train_per_class])
        test_idx.append(idx[n_train_per_class:])
    return _take(ds, np.concatenate(train_idx)), _take(ds, np.concatenate(test_idx))


def _take(ds: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset(
        features=ds.features[idx],
        labels=ds.labels[idx],
        clean_labels=ds.clean_labels[idx],
        noise_mask=ds.noise_mask[idx],
        n_classes=ds.n_classes,
    )


def standardize(train: Dataset, others: list[Dataset] = ()) -> tuple[Dataset, list[Dataset]]:
    """Per-feature zero-mean unit-variance transform, fit on train only.

    The same train statistics are applied to every dataset in ``others``;
    standard deviations are floored at 1e-8 so constant columns map to zero
    instead of blowing up.
    """
    if train.n_examples == 0:
        raise ValueError("cannot standardize an empty training set")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    degenerate = std < _STD_FLOOR  # constant columns map to exactly zero
    scale = np.where(degenerate, 1.0, np.maximum(std, _STD_FLOOR))

    def transform(ds: Dataset) -> Dataset:
        centered = np.where(degenerate, 0.0, ds.features - mean)
        return replace(ds, features=centered / scale)

    return transform(train), [transform(ds) for ds in others]


def inject_symmetric_noise(ds: Dataset, eta: float, rng: RngStream) -> Dataset:
    """Resample the labels of exactly round(eta * N) rows uniformly over all classes.

    Rows are chosen without replacement; the redraw may land on the original
    class, so the expected wrong-label fraction is eta * (c-1)/c.  Chosen rows
    are flagged in the noise mask even when the label is unchanged, and
    ``clean_labels`` is left untouched.
    """
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"noise fraction must lie in [0, 1], got {eta}")
    n_noisy = int(round(eta * ds.n_examples))
    idx = rng.generator.choice(ds.n_examples, size=n_noisy, replace=False)
    labels = ds.labels.copy()
    labels[idx] = rng.generator.integers(0, ds.n_classes, size=n_noisy)
    mask = ds.noise_mask.copy()
    mask[idx] = True
    return replace(ds, labels=labels, noise_mask=mask)


def save_dataset(ds: Dataset, directory, manifest_extra: dict | None = None) -> None:
    """Persist a dataset as .npy arrays plus a JSON manifest in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / "features.npy", ds.features)
    np.save(directory / "labels.npy", ds.labels)
    np.save(directory / "clean_labels.npy", ds.clean_labels)
    np.save(directory / "noise_mask.npy", ds.noise_mask)
    manifest = {
        "n_examples": ds.n_examples,
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "masked_count": int(ds.noise_mask.sum()),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"{directory}: not a saved dataset (missing manifest.json)")
    with open(manifest_path) as f:
        manifest = json.load(f)
    return Dataset(
        features=np.load(directory / "features.npy"),
        labels=np.load(directory / "labels.npy"),
        clean_labels=np.load(directory / "clean_labels.npy"),
        noise_mask=np.load(directory / "noise_mask.npy"),
        n_classes=int(manifest["n_classes"]),
    )
