"""Random forest classifier/regressor grown from scratch with CART trees."""

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels
from ._rng import stream
from .data import LabeledDataset, Task
from .errors import DataError

FORMAT_NAME = "featstab-forest"
FORMAT_VERSION = 1


class MaxFeatures(str, enum.Enum):
    SQRT = "sqrt"
    THIRD = "third"
    ALL = "all"

    def resolve(self, n_features):
        if self is MaxFeatures.SQRT:
            return max(1, int(math.sqrt(n_features)))
        if self is MaxFeatures.THIRD:
            return max(1, n_features // 3)
        return n_features


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: str | None = None  # None: sqrt for classification, third for regression
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_features is not None:
            MaxFeatures(self.max_features)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def feature_rule(self, task):
        if self.max_features is not None:
            return MaxFeatures(self.max_features)
        return MaxFeatures.SQRT if Task(task) is Task.CLASSIFICATION else MaxFeatures.THIRD


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree. ``left[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def leaf(cls, value):
        return cls(
            np.array([-1], dtype=np.int32), np.zeros(1), np.array([-1], dtype=np.int32),
            np.array([-1], dtype=np.int32), np.array([float(value)]),
        )

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, rows):
        rows = np.asarray(rows, dtype=np.float64)
        out = np.empty(len(rows), dtype=np.int64)
        for i, row in enumerate(rows):
            node = 0
            while self.left[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = node
        return out

    def predict(self, rows):
        return self.value[self.apply(rows)]


class ForestModel:
    """An immutable trained forest.

    Trees are also packed into flat arrays (absolute child indices) for the
    compiled prediction kernels.
    """

    def __init__(self, trees, task, n_features, config=None):
        self.trees = tuple(trees)
        self.task = Task(task)
        self.n_features = int(n_features)
        self.config = config if config is not None else ForestConfig()
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        for tree in self.trees:
            internal = tree.left >= 0
            if np.any(tree.feature[internal] >= self.n_features) or np.any(tree.feature[internal] < 0):
                raise ValueError("split feature index out of range")
            if not np.all(np.isfinite(tree.threshold[internal])):
                raise ValueError("split thresholds must be finite")
            if self.task is Task.CLASSIFICATION:
                leaves = tree.value[~internal]
                if np.any(leaves < 0) or np.any(leaves > 1):
                    raise ValueError("classification leaf probabilities must lie in [0, 1]")
        self._pack()

    def _pack(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
        self.roots = offsets[:-1].astype(np.int64)
        self.feature = np.concatenate([t.feature for t in self.trees]).astype(np.int64)
        self.threshold = np.concatenate([t.threshold for t in self.trees]).astype(np.float64)
        left, right = [], []
        for off, t in zip(offsets[:-1], self.trees):
            left.append(np.where(t.left >= 0, t.left + off, -1))
            right.append(np.where(t.right >= 0, t.right + off, -1))
        self.left = np.concatenate(left).astype(np.int64)
        self.right = np.concatenate(right).astype(np.int64)
        self.value = np.concatenate([t.value for t in self.trees]).astype(np.float64)
        self.max_nodes = int(max(t.n_nodes for t in self.trees))
        for arr in (self.roots, self.feature, self.threshold, self.left, self.right, self.value):
            arr.flags.writeable = False

    @property
    def n_trees(self):
        return len(self.trees)

    def used_features(self):
        used = set()
        for tree in self.trees:
            used.update(int(f) for f in tree.feature[tree.left >= 0])
        return used

    def _check_rows(self, rows):
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1)
        if rows.ndim != 2 or rows.shape[1] != self.n_features:
            raise DataError(
                f"model expects {self.n_features} columns, got array of shape {rows.shape}"
            )
        return rows

    def mean_output(self, rows):
        """Across-tree mean of leaf values: class-1 probability or regression value."""
        rows = self._check_rows(rows)
        return _kernels.forest_mean(rows, self.roots, self.feature, self.threshold,
                                    self.left, self.right, self.value)

    def output(self, rows):
        """Continuous model signal used by the explainers."""
        return self.mean_output(rows)

    def predict_proba(self, rows):
        if self.task is not Task.CLASSIFICATION:
            raise TypeError("predict_proba is only defined for classification forests")
        p1 = self.mean_output(rows)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, rows):
        out = self.mean_output(rows)
        if self.task is Task.CLASSIFICATION:
            # ties at 0.5 go to class 0
            return (out > 0.5).astype(np.float64)
        return out

    def __call__(self, rows):
        return self.output(rows)

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "task": self.task.value,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != FORMAT_NAME:
            raise DataError(f"not a forest document (format={doc.get('format')!r})")
        if doc.get("version") != FORMAT_VERSION:
            raise DataError(f"unsupported forest document version {doc.get('version')!r}")
        trees = [
            Tree(
                np.asarray(t["feature"], dtype=np.int32),
                np.asarray(t["threshold"], dtype=np.float64),
                np.asarray(t["left"], dtype=np.int32),
                np.asarray(t["right"], dtype=np.int32),
                np.asarray(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
        return cls(trees, doc["task"], doc["n_features"], ForestConfig(**doc["config"]))

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _tree_inputs(n_rows, seed, index, bootstrap):
    rng = stream(seed, "tree", index)
    key = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
    if bootstrap:
        sample = np.sort(rng.integers(0, n_rows, size=n_rows)).astype(np.int64)
    else:
        sample = np.arange(n_rows, dtype=np.int64)
    return sample, key


def bootstrap_sample(n_rows, seed, index, bootstrap=True):
    """Row indices (with repeats) that tree ``index`` of a forest is grown on."""
    return _tree_inputs(n_rows, seed, index, bootstrap)[0]


def fit(dataset, config=None, workers=1):
    """Grow a forest on every row of ``dataset``.

    Classification uses the Gini criterion and regression uses variance
    reduction. Tree ``t`` draws its bootstrap sample and its per-node feature
    subsets from streams keyed by ``(config.seed, t)``, so ``workers`` only
    changes wall time.
    """
    if not isinstance(dataset, LabeledDataset):
        raise TypeError("fit expects a LabeledDataset")
    config = config if config is not None else ForestConfig()
    X = np.ascontiguousarray(dataset.features)
    y = np.ascontiguousarray(dataset.target)
    n, m = X.shape
    if n == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    if n < 2:
        raise DataError("need at least two rows to fit a forest")
    is_classifier = dataset.task is Task.CLASSIFICATION
    if is_classifier and len(np.unique(y)) < 2:
        raise DataError("classification training data contains a single class")
    max_features = config.feature_rule(dataset.task).resolve(m)
    max_depth = -1 if config.max_depth is None else int(config.max_depth)

    def grow(index):
        sample, key = _tree_inputs(n, config.seed, index, config.bootstrap)
        feature, threshold, left, right, value, n_nodes = _kernels.grow_tree(
            X, y, sample, is_classifier, max_features, config.min_samples_leaf, max_depth, key
        )
        return Tree(feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
                    right[:n_nodes].copy(), value[:n_nodes].copy())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, range(config.n_trees)))
    else:
        trees = [grow(t) for t in range(config.n_trees)]
    return ForestModel(trees, dataset.task, m, config)


def predict(model, rows):
    return model.predict(rows)


def predict_proba(model, rows):
    return model.predict_proba(rows)
