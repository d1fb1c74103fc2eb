"""Dataset synthesis, CSV ingestion, splitting, and label corruption.

Corruption is class-conditional: each row is redrawn with the probability
attached to its clean class, and the redraw is uniform over all classes
(including the original), so the effective flip rate is rate * (K-1)/K.
Clean labels are always retained alongside the observed ones so clean
accuracy can be reported after training on corrupted data.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .rng import SeededRng

__all__ = [
    "SPLITS",
    "NoisyDataset",
    "CorruptionSpec",
    "DatasetFormatError",
    "preset_spec",
    "corrupt_labels",
    "effective_noise_rate",
    "synth_clusters",
    "load_and_split",
    "write_dataset",
    "read_dataset",
]

SPLITS = ("train", "valid", "test")

_PRESET_RATES = {
    "default": (0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
    "reduced": (0.0, 0.0, 0.0, 0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30),
    "increased": (0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65),
}


class DatasetFormatError(ValueError):
    """A dataset file failed to parse; the message names row and column."""


@dataclass
class NoisyDataset:
    """Features plus observed (possibly corrupted) and retained clean labels."""

    features: np.ndarray        # (N, D) float64
    observed_labels: np.ndarray  # (N,) int64 in [0, K)
    clean_labels: np.ndarray     # (N,) int64 in [0, K)
    split: np.ndarray            # (N,) unicode, one of SPLITS
    num_classes: int
    redrawn: np.ndarray | None = None  # (N,) bool where corruption redrew

    def __post_init__(self):
        n = self.features.shape[0]
        for name in ("observed_labels", "clean_labels", "split"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length != number of rows")
        for labels in (self.observed_labels, self.clean_labels):
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError("labels out of range for num_classes")

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def subset(self, split: str) -> "NoisyDataset":
        idx = self.indices(split)
        return NoisyDataset(
            features=self.features[idx],
            observed_labels=self.observed_labels[idx],
            clean_labels=self.clean_labels[idx],
            split=self.split[idx],
            num_classes=self.num_classes,
            redrawn=None if self.redrawn is None else self.redrawn[idx],
        )


@dataclass
class CorruptionSpec:
    """Per-class redraw probabilities and the redraw convention."""

    per_class_rate: tuple
    exclude_original: bool = False

    def __post_init__(self):
        rates = tuple(float(r) for r in self.per_class_rate)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("corruption rates must lie in [0, 1]")
        self.per_class_rate = rates

    @property
    def num_classes(self) -> int:
        return len(self.per_class_rate)


def preset_spec(name: str, num_classes: int = 10) -> CorruptionSpec:
    """Named corruption presets.

    default    -> [0,0,0,0,.1,.2,.3,.4,.5,.6]
    reduced    -> the default rates halved
    increased  -> 20% to 65% in 5% steps across all classes
    uniform20  -> flat 20% everywhere (homoscedastic noise)
    none       -> all zeros

    The patterned presets are defined for 10 classes; `none` and
    `uniform20` generalise to any class count.
    """
    if name in _PRESET_RATES:
        if num_classes != 10:
            raise ValueError(f"preset {name!r} is defined for 10 classes")
        return CorruptionSpec(per_class_rate=_PRESET_RATES[name])
    if name == "uniform20":
        return CorruptionSpec(per_class_rate=(0.2,) * num_classes)
    if name == "none":
        return CorruptionSpec(per_class_rate=(0.0,) * num_classes)
    raise ValueError(f"unknown corruption preset {name!r}")


def effective_noise_rate(spec: CorruptionSpec) -> float:
    """Mean probability that a label actually changes under the spec."""
    k = spec.num_classes
    mean_rate = float(np.mean(spec.per_class_rate))
    if spec.exclude_original:
        return mean_rate
    return mean_rate * (k - 1) / k


def corrupt_labels(ds: NoisyDataset, spec: CorruptionSpec,
                   rng: SeededRng) -> NoisyDataset:
    """Redraw each observed label with its clean class's probability.

    Pure in (ds, spec, seed): clean labels are untouched and the input
    dataset is not modified. The returned dataset records which rows were
    redrawn (a redraw may land on the original label).
    """
    if spec.num_classes != ds.num_classes:
        raise ValueError(
            f"rate vector length {spec.num_classes} != num_classes {ds.num_classes}"
        )
    n = ds.n_examples
    k = ds.num_classes
    rates = np.asarray(spec.per_class_rate)
    hit = rng.uniform(n) < rates[ds.clean_labels]
    observed = ds.clean_labels.copy()
    n_hit = int(hit.sum())
    if n_hit:
        if spec.exclude_original:
            new = rng.integers(n_hit, k - 1)
            orig = ds.clean_labels[hit]
            new = new + (new >= orig)
        else:
            new = rng.integers(n_hit, k)
        observed[hit] = new
    return replace(ds, observed_labels=observed,
                   clean_labels=ds.clean_labels.copy(), redrawn=hit)


def _assign_splits(n: int, fractions, rng: SeededRng) -> np.ndarray:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ValueError("split fractions must be (train, valid, test)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round((fractions[0] + fractions[1]) * n)) - n_train
    split = np.empty(n, dtype="<U5")
    split[perm[:n_train]] = "train"
    split[perm[n_train:n_train + n_valid]] = "valid"
    split[perm[n_train + n_valid:]] = "test"
    return split


def synth_clusters(num_classes: int, dims: int, per_class: int,
                   separation: float, rng: SeededRng,
                   fractions=(0.70, 0.15, 0.15)) -> NoisyDataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Class centres sit on a circle of the given radius in the first two
    feature dimensions (evenly spaced on a segment when dims == 1); the
    remaining dimensions are pure noise. Clean labels are the generating
    classes and splits follow a shuffled 70/15/15 by default.
    """
    if num_classes < 1 or dims < 1 or per_class < 1:
        raise ValueError("num_classes, dims and per_class must be positive")
    centers = np.zeros((num_classes, dims))
    if dims == 1:
        centers[:, 0] = np.linspace(-separation, separation, num_classes)
    else:
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        centers[:, 0] = separation * np.cos(angles)
        centers[:, 1] = separation * np.sin(angles)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    noise = rng.gaussian(n * dims).reshape(n, dims)
    features = centers[labels] + noise
    split = _assign_splits(n, fractions, rng.child("split"))
    return NoisyDataset(
        features=features,
        observed_labels=labels.copy(),
        clean_labels=labels.copy(),
        split=split,
        num_classes=num_classes,
    )


def _parse_float(value: str, row: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise DatasetFormatError(
            f"row {row}: column {column!r} is not numeric: {value!r}"
        ) from None


def _parse_label(value: str, row: int, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetFormatError(
            f"row {row}: label column {column!r} is not an integer: {value!r}"
        ) from None


def load_and_split(path, label_column: str, fractions, rng: SeededRng,
                   scale_features: bool = True) -> NoisyDataset:
    """Read a headered CSV, split rows, and min-max scale features to [0, 1].

    Clean labels are initialised equal to the observed column; corruption,
    if any, is applied afterwards by the caller. Scaling can be turned off
    for data already in a sensible range.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetFormatError(
                f"{path}: header has no column named {label_column!r}"
            )
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]
        rows, labels = [], []
        for r, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DatasetFormatError(
                    f"row {r}: expected {len(header)} fields, got {len(record)}"
                )
            rows.append([_parse_float(record[i], r, name) for i, name in feature_cols])
            labels.append(_parse_label(record[label_idx], r, label_column))
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0:
        raise DatasetFormatError("labels must be non-negative integers")
    if scale_features:
        lo = features.min(axis=0)
        span = features.max(axis=0) - lo
        span[span == 0] = 1.0
        features = (features - lo) / span
    split = _assign_splits(features.shape[0], fractions, rng)
    return NoisyDataset(
        features=features,
        observed_labels=labels.copy(),
        clean_labels=labels.copy(),
        split=split,
        num_classes=int(labels.max()) + 1,
    )


def write_dataset(ds: NoisyDataset, path, metadata: dict | None = None) -> None:
    """Write a dataset as CSV plus a JSON sidecar describing its provenance.

    Floats are written with repr so read_dataset restores identical tensors.
    """
    feature_names = [f"x{i}" for i in range(ds.n_features)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_names + ["label", "clean_label", "split"])
        for i in range(ds.n_examples):
            writer.writerow(
                [repr(v) for v in ds.features[i]]
                + [int(ds.observed_labels[i]), int(ds.clean_labels[i]), ds.split[i]]
            )
    sidecar = {
        "feature_columns": feature_names,
        "label_column": "label",
        "num_classes": ds.num_classes,
        "n_examples": ds.n_examples,
        "scaled": False,
    }
    if metadata:
        sidecar.update(metadata)
    with open(_sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def read_dataset(path) -> NoisyDataset:
    """Exact inverse of write_dataset; requires the JSON sidecar."""
    sidecar_path = _sidecar_path(path)
    if not os.path.exists(sidecar_path):
        raise DatasetFormatError(f"missing dataset sidecar {sidecar_path}")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = meta["feature_columns"] + [meta["label_column"], "clean_label", "split"]
        if header != expected:
            raise DatasetFormatError(f"{path}: header does not match sidecar")
        d = len(meta["feature_columns"])
        rows, observed, clean, split = [], [], [], []
        for r, record in enumerate(reader, start=1):
            rows.append([_parse_float(record[i], r, header[i]) for i in range(d)])
            observed.append(_parse_label(record[d], r, "label"))
            clean.append(_parse_label(record[d + 1], r, "clean_label"))
            if record[d + 2] not in SPLITS:
                raise DatasetFormatError(f"row {r}: bad split tag {record[d + 2]!r}")
            split.append(record[d + 2])
    return NoisyDataset(
        features=np.asarray(rows, dtype=np.float64),
        observed_labels=np.asarray(observed, dtype=np.int64),
        clean_labels=np.asarray(clean, dtype=np.int64),
        split=np.asarray(split, dtype="<U5"),
        num_classes=int(meta["num_classes"]),
    )
