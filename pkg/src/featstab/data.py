"""Datasets, CSV ingestion, synthetic generators and train/valid/test splits."""

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import stream
from .errors import DataError


class Task(str, enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class Provenance(str, enum.Enum):
    INFORMATIVE = "Informative"
    REDUNDANT = "Redundant"
    NOISE = "Noise"

    @property
    def prefix(self):
        return self.value[0] + "_"


@dataclass(frozen=True)
class LabeledDataset:
    """An ``n x m`` feature matrix with its target vector.

    Arrays are copied to read-only float64 on construction so downstream code
    can rely on the data never changing under it.
    """

    features: np.ndarray
    feature_names: tuple
    target: np.ndarray
    task: Task

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        target = np.array(self.target, dtype=np.float64).ravel()
        names = tuple(str(name) for name in self.feature_names)
        task = Task(self.task)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[0] != target.shape[0]:
            raise DataError(
                f"feature rows ({features.shape[0]}) and target length ({target.shape[0]}) differ"
            )
        if len(names) != features.shape[1]:
            raise DataError(f"{len(names)} feature names for {features.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(features)):
            raise DataError("feature values must be finite")
        if not np.all(np.isfinite(target)):
            raise DataError("target values must be finite")
        if task is Task.CLASSIFICATION and not np.all((target == 0) | (target == 1)):
            raise DataError("classification targets must be 0 or 1")
        features.flags.writeable = False
        target.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "task", task)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def column_indices(self, names):
        lookup = {name: j for j, name in enumerate(self.feature_names)}
        try:
            return [lookup[name] for name in names]
        except KeyError as exc:
            raise DataError(f"unknown feature {exc.args[0]!r}") from None

    def subset(self, rows=None, columns=None):
        """Restrict to a row index set and/or a list of feature names."""
        features = self.features
        target = self.target
        names = self.feature_names
        if rows is not None:
            rows = np.asarray(rows, dtype=np.intp)
            features = features[rows]
            target = target[rows]
        if columns is not None:
            idx = self.column_indices(columns)
            features = features[:, idx]
            names = tuple(names[j] for j in idx)
        return LabeledDataset(features, names, target, self.task)

    def to_csv(self, path, label_column="label"):
        write_csv(path, self.feature_names, self.features, label_column, self.target)


@dataclass(frozen=True)
class FeatureProvenance:
    tags: tuple

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(Provenance(tag) for tag in self.tags))

    def __len__(self):
        return len(self.tags)

    def names_with(self, tag, feature_names):
        tag = Provenance(tag)
        return [name for name, t in zip(feature_names, self.tags) if t is tag]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def sizes(self):
        return len(self.train), len(self.valid), len(self.test)


def format_float(value):
    # repr round-trips float64 exactly, which keeps CSV snapshots reproducible
    value = float(value)
    if value == 0.0:
        return "0.0"
    return repr(value)


def write_csv(path, feature_names, features, label_column=None, target=None):
    header = list(feature_names)
    if label_column is not None:
        header.append(label_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, row in enumerate(np.asarray(features)):
            cells = [format_float(v) for v in row]
            if label_column is not None:
                cells.append(format_float(target[i]))
            writer.writerow(cells)


def _parse_cell(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}, column {column!r}: non-finite value {text!r}")
    return value


def read_table(path):
    """Read a headed CSV of numbers into ``(header, list_of_rows_of_str)``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row]
    if not rows:
        raise DataError(f"{path}: empty file (header row required)")
    header = [cell.strip() for cell in rows[0]]
    body = rows[1:]
    for offset, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(
                f"{path}: line {offset + 2} has {len(row)} cells, header has {len(header)}"
            )
    return header, body


def load_csv(path, label_column, task):
    """Load a comma-separated file with a header row into a dataset.

    Every non-label cell must parse as a finite real. Parse failures report
    the 1-based line number and the column name.
    """
    task = Task(task)
    header, body = read_table(path)
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header")
    label_at = header.index(label_column)
    names = [name for j, name in enumerate(header) if j != label_at]
    features = np.empty((len(body), len(names)))
    target = np.empty(len(body))
    for i, row in enumerate(body):
        line = i + 2
        values = [_parse_cell(cell, line, header[j]) for j, cell in enumerate(row)]
        target[i] = values[label_at]
        features[i] = values[:label_at] + values[label_at + 1:]
    if task is Task.CLASSIFICATION:
        bad = np.flatnonzero((target != 0) & (target != 1))
        if bad.size:
            raise DataError(
                f"{path}: line {bad[0] + 2}: classification label {target[bad[0]]!r} is not 0 or 1"
            )
    return LabeledDataset(features, names, target, task)


def _check_counts(n, n_informative, n_redundant, n_noise):
    if min(n, n_informative, n_redundant, n_noise) < 0:
        raise DataError("counts must be non-negative")
    if n_informative < 1:
        raise DataError("need at least one informative feature")
    if n < 2:
        raise DataError("need at least two samples")


def _assemble(informative, seed, n_redundant, n_noise):
    n, n_informative = informative.shape
    coef = stream(seed, "synth", "redundant").uniform(-1.0, 1.0, size=(n_informative, n_redundant))
    redundant = informative @ coef
    noise = stream(seed, "synth", "noise").standard_normal((n, n_noise))
    features = np.hstack([informative, redundant, noise])
    names = (
        [f"I_{j}" for j in range(n_informative)]
        + [f"R_{j}" for j in range(n_redundant)]
        + [f"N_{j}" for j in range(n_noise)]
    )
    tags = (
        [Provenance.INFORMATIVE] * n_informative
        + [Provenance.REDUNDANT] * n_redundant
        + [Provenance.NOISE] * n_noise
    )
    return features, names, FeatureProvenance(tags)


def synth_classification(n=1000, n_informative=10, n_redundant=10, n_noise=20, seed=0, class_sep=0.3):
    """Two Gaussian classes at opposite vertices of the informative hypercube.

    A random vertex ``v`` in ``{-1, +1}^n_informative`` is drawn; class 1 is
    centred at ``class_sep * v`` and class 0 at ``-class_sep * v``, both with
    identity covariance. The default separation puts a 100-tree forest at
    roughly 0.8 test accuracy on 1000 rows. Redundant columns are fixed random linear
    combinations of the informative ones and noise columns are standard
    normal. Labels are balanced to within one sample.

    Returns
    -------
    (LabeledDataset, FeatureProvenance)
    """
    _check_counts(n, n_informative, n_redundant, n_noise)
    rng = stream(seed, "synth", "informative")
    vertex = rng.choice([-1.0, 1.0], size=n_informative)
    labels = np.zeros(n)
    labels[: n - n // 2] = 1.0
    labels = rng.permutation(labels)
    centres = np.where(labels[:, None] == 1.0, class_sep, -class_sep) * vertex
    informative = centres + rng.standard_normal((n, n_informative))
    features, names, provenance = _assemble(informative, seed, n_redundant, n_noise)
    return LabeledDataset(features, names, labels, Task.CLASSIFICATION), provenance


def synth_regression(n=1000, n_informative=10, n_redundant=10, n_noise=20, noise_sd=10.0, seed=0):
    """Linear target over standard-normal informative columns.

    ``y = X_informative @ w + eps`` with ``w ~ Uniform[0, 100]`` per column and
    ``eps ~ N(0, noise_sd**2)``.
    """
    _check_counts(n, n_informative, n_redundant, n_noise)
    if noise_sd < 0:
        raise DataError("noise_sd must be non-negative")
    rng = stream(seed, "synth", "informative")
    informative = rng.standard_normal((n, n_informative))
    weights = rng.uniform(0.0, 100.0, size=n_informative)
    eps = stream(seed, "synth", "target-noise").standard_normal(n) * noise_sd
    target = informative @ weights + eps
    features, names, provenance = _assemble(informative, seed, n_redundant, n_noise)
    return LabeledDataset(features, names, target, Task.REGRESSION), provenance


def split_sizes(n):
    n_train = int(math.floor(0.6 * n))
    n_valid = int(math.floor(0.2 * n))
    return n_train, n_valid, n - n_train - n_valid


def split(dataset, seed):
    """Seeded 0.6/0.2/0.2 shuffle split; the test set takes the rounding remainder."""
    n = dataset.n_samples if hasattr(dataset, "n_samples") else int(dataset)
    if n < 5:
        raise DataError(f"dataset too small to split ({n} rows, need at least 5)")
    order = stream(seed, "split").permutation(n)
    n_train, n_valid, _ = split_sizes(n)
    return SplitIndices(
        train=np.sort(order[:n_train]),
        valid=np.sort(order[n_train:n_train + n_valid]),
        test=np.sort(order[n_train + n_valid:]),
    )


def time_split(timestamps, boundary, valid_fraction=0.0):
    """Chronological split: rows at or after ``boundary`` are the test set.

    The last ``floor(valid_fraction * n_before)`` pre-boundary rows form the
    validation set; nothing is shuffled.
    """
    ts = np.asarray(timestamps, dtype="datetime64[ns]")
    if ts.size and np.any(ts[1:] < ts[:-1]):
        raise DataError("timestamps must be non-decreasing")
    if not 0.0 <= valid_fraction < 1.0:
        raise DataError("valid_fraction must be in [0, 1)")
    boundary = np.datetime64(boundary, "ns")
    n_before = int(np.searchsorted(ts, boundary, side="left"))
    if n_before == 0:
        raise DataError(f"boundary {boundary} precedes every row: train set would be empty")
    if n_before == ts.size:
        raise DataError(f"boundary {boundary} follows every row: test set would be empty")
    n_valid = int(math.floor(valid_fraction * n_before))
    if n_before - n_valid < 1:
        raise DataError("valid_fraction leaves no training rows")
    idx = np.arange(ts.size)
    return SplitIndices(
        train=idx[: n_before - n_valid],
        valid=idx[n_before - n_valid: n_before],
        test=idx[n_before:],
    )
