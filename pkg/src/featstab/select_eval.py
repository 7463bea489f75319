"""Mean-threshold feature selection, retraining, and test-set metrics."""

from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed
from .data import Task
from .errors import DataError, NumericError
from .forest import ForestConfig, fit

CLASSIFICATION_METRICS = ("f1", "auc", "accuracy")
REGRESSION_METRICS = ("mae", "mse", "r2")


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple
    threshold: float
    importance: np.ndarray
    fallback: bool


@dataclass(frozen=True)
class MetricsReport:
    task: Task
    values: dict
    features: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        v = self.values
        if self.task is Task.CLASSIFICATION:
            for key in CLASSIFICATION_METRICS:
                if not 0.0 <= v[key] <= 1.0:
                    raise NumericError(f"{key}={v[key]} outside [0, 1]")
        else:
            if v["mae"] < 0 or v["mse"] < 0 or v["r2"] > 1:
                raise NumericError(f"regression metrics out of range: {v}")

    @property
    def metric_names(self):
        return CLASSIFICATION_METRICS if self.task is Task.CLASSIFICATION else REGRESSION_METRICS


def _pair(y_true, y_other):
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_other = np.asarray(y_other, dtype=np.float64).ravel()
    if y_true.shape != y_other.shape:
        raise DataError(f"length mismatch: {y_true.size} vs {y_other.size}")
    if y_true.size == 0:
        raise DataError("metrics need at least one value")
    return y_true, y_other


def accuracy(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


def f1(y_true, y_pred):
    """F1 of the positive class 1; 0.0 when precision + recall is 0."""
    y_true, y_pred = _pair(y_true, y_pred)
    tp = float(np.sum((y_true == 1) & (y_pred == 1)))
    fp = float(np.sum((y_true != 1) & (y_pred == 1)))
    fn = float(np.sum((y_true == 1) & (y_pred != 1)))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def auc(y_true, scores):
    """ROC AUC via the Mann-Whitney U statistic (ties count one half)."""
    y_true, scores = _pair(y_true, scores)
    pos = y_true == 1
    n_pos = int(pos.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes in y_true")
    # average ranks handle ties with half credit
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mae(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean(np.abs(y_true - y_pred)))


def mse(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean((y_true - y_pred) ** 2))


def r2(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    if sst == 0.0:
        raise NumericError("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / sst


def select_features(report):
    """Features whose normalized importance is strictly above the mean (1/m).

    Falls back to the single best-ranked feature when nothing clears the
    threshold. Selected names come back in importance order.
    """
    importance = np.asarray(report.normalized_importance, dtype=np.float64)
    threshold = float(importance.mean())
    chosen = {name for name, value in zip(report.feature_names, importance) if value > threshold}
    fallback = not chosen
    if fallback:
        chosen = {report.importance_order[0]}
    selected = tuple(name for name in report.importance_order if name in chosen)
    return SelectionResult(selected, threshold, importance, fallback)


def score_model(model, rows, target):
    if model.task is Task.CLASSIFICATION:
        pred = model.predict(rows)
        return {
            "f1": f1(target, pred),
            "auc": auc(target, model.predict_proba(rows)[:, 1]),
            "accuracy": accuracy(target, pred),
        }
    pred = model.predict(rows)
    return {"mae": mae(target, pred), "mse": mse(target, pred), "r2": r2(target, pred)}


def evaluate_selection(dataset, splits, features, forest=None, label="", workers=1):
    """Retrain a fresh forest on the train rows restricted to ``features``; score on test rows."""
    features = tuple(features)
    if not features:
        raise DataError("no features selected")
    forest = forest if forest is not None else ForestConfig()
    train = dataset.subset(splits.train, features)
    test = dataset.subset(splits.test, features)
    model = fit(train, forest, workers=workers)
    return MetricsReport(dataset.task, score_model(model, test.features, test.target), features, label)


def sweep_k(dataset, splits, order, forest=None, label="", workers=1):
    """Metrics for every top-k prefix of ``order``, k = 1..m."""
    order = tuple(order)
    return [
        evaluate_selection(dataset, splits, order[:k], forest, label, workers)
        for k in range(1, len(order) + 1)
    ]


def eval_forest_config(base, seed):
    """Forest config for a retrain, seeded independently of the explainer forest."""
    base = base if base is not None else ForestConfig()
    return base.with_seed(derive_seed(seed, "retrain"))
