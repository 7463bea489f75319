"""Importance-score matrices from permutation importance, LIME and SHAP.

Each explainer returns an :class:`ImportanceMatrix` whose row ``i`` is one
full randomized pass over the features. Row ``i`` only depends on
``(seed, i)``, so the first ``g`` rows of an ``n_repeat=G`` run equal an
``n_repeat=g`` run with the same seed.
"""

import csv
import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import stream
from .data import Task, format_float
from .errors import DataError, NumericError
from .forest import ForestModel


class Algorithm(str, enum.Enum):
    MDA = "MDA"
    LIME = "LIME"
    SHAP = "SHAP"


# Effective n_repeat of each algorithm's stock implementation.
DEFAULT_N_REPEAT = {Algorithm.MDA: 5, Algorithm.LIME: 1, Algorithm.SHAP: 1}


@dataclass(frozen=True)
class ImportanceMatrix:
    scores: np.ndarray
    feature_names: tuple
    algorithm: Algorithm
    seed: int = 0

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] < 1:
            raise ValueError(f"scores must be a non-empty 2-D array, got shape {scores.shape}")
        if scores.shape[1] != len(self.feature_names):
            raise ValueError("column count must equal the number of feature names")
        if not np.all(np.isfinite(scores)):
            raise NumericError("importance scores must be finite")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))

    @property
    def n_iterations(self):
        return self.scores.shape[0]

    def head(self, n):
        return ImportanceMatrix(self.scores[:n], self.feature_names, self.algorithm, self.seed)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.feature_names)
            for row in self.scores:
                writer.writerow([format_float(v) for v in row])

    @classmethod
    def from_csv(cls, path, algorithm, seed=0):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array(rows[1:], dtype=np.float64), rows[0], algorithm, seed)


@dataclass(frozen=True)
class LimeConfig:
    perturbations: int = 100
    kernel_width: float | None = None  # None: 0.75 * sqrt(m)
    ridge_lambda: float = 1.0

    def width(self, n_features):
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)


@dataclass(frozen=True)
class ShapConfig:
    background_size: int = 20
    exact: bool = False


@dataclass(frozen=True)
class ExplainerConfig:
    algorithm: Algorithm = Algorithm.MDA
    n_repeat: int = 1
    lime: LimeConfig = field(default_factory=LimeConfig)
    shap: ShapConfig = field(default_factory=ShapConfig)
    seed: int = 0
    subsample: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.n_repeat < 1:
            raise ValueError("n_repeat must be >= 1")
        if self.shap.background_size < 1:
            raise ValueError("background_size must be >= 1")


def output_function(model):
    """Continuous signal of a model: class-1 probability, regression value, or a callable's output."""
    if isinstance(model, ForestModel):
        return model.output
    if callable(model):
        return lambda rows: np.asarray(model(np.asarray(rows, dtype=np.float64)), dtype=np.float64).ravel()
    raise TypeError("model must be a ForestModel or a callable")


def _names(model, m, feature_names):
    if feature_names is not None:
        if len(feature_names) != m:
            raise DataError("feature_names length does not match the columns")
        return tuple(feature_names)
    return tuple(f"x{j}" for j in range(m))


def _score(task, y_true, y_pred):
    if task is Task.CLASSIFICATION:
        return float(np.mean(y_true == y_pred))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    if sst == 0.0:
        raise NumericError("R^2 baseline undefined: validation targets are constant")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / sst


def mda_importance(model, rows, target, n_repeat=5, seed=0, feature_names=None, task=None):
    """Permutation importance on held-out rows.

    ``s[i, j]`` is the baseline score minus the score after column ``j`` is
    shuffled with the stream ``(seed, i, j)``. The score is accuracy for
    classification and R^2 for regression. ``rows`` is never modified.
    """
    rows = np.asarray(rows, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("validation set is empty")
    if rows.shape[0] < 2:
        raise DataError("need at least two validation rows")
    if n_repeat < 1:
        raise ValueError("n_repeat must be >= 1")
    n, m = rows.shape
    if task is None:
        task = model.task if isinstance(model, ForestModel) else Task.CLASSIFICATION
    task = Task(task)
    predict = model.predict if isinstance(model, ForestModel) else output_function(model)
    baseline = _score(task, target, predict(rows))
    scores = np.empty((n_repeat, m))
    block = np.empty((m * n, m))
    for i in range(n_repeat):
        for j in range(m):
            part = block[j * n:(j + 1) * n]
            part[:] = rows
            part[:, j] = rows[stream(seed, "mda", i, j).permutation(n), j]
        preds = predict(block)
        for j in range(m):
            scores[i, j] = baseline - _score(task, target, preds[j * n:(j + 1) * n])
    return ImportanceMatrix(scores, _names(model, m, feature_names), Algorithm.MDA, seed)


def mda_drop(model, rows, target, column, permutation, task=None):
    """Score drop when ``column`` of ``rows`` is reordered by ``permutation``.

    One cell of the MDA matrix for an explicit permutation; :func:`mda_importance`
    draws the permutations from seeded streams.
    """
    rows = np.asarray(rows, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if task is None:
        task = model.task if isinstance(model, ForestModel) else Task.CLASSIFICATION
    task = Task(task)
    predict = model.predict if isinstance(model, ForestModel) else output_function(model)
    shuffled = rows.copy()
    shuffled[:, column] = rows[np.asarray(permutation, dtype=np.intp), column]
    return _score(task, target, predict(rows)) - _score(task, target, predict(shuffled))


def lime_coefficients(model, rows, train_sd, config=None, seed=0, iteration=0):
    """Local surrogate coefficients for every row in one LIME pass.

    Each row ``x`` gets ``P`` perturbations ``z = x + sd * e`` with
    ``e ~ N(0, I)``. A weighted ridge regression of the model output on the
    standardized offsets ``e`` (intercept unpenalized) is fitted with kernel
    weights ``exp(-|e|^2 / width^2)``. Coefficients are therefore per training
    standard deviation.

    Returns an ``(n_rows, m)`` array of signed coefficients.
    """
    config = config if config is not None else LimeConfig()
    rows = np.asarray(rows, dtype=np.float64)
    n, m = rows.shape
    sd = np.asarray(train_sd, dtype=np.float64).copy()
    if sd.shape != (m,):
        raise DataError("train_sd must have one entry per column")
    sd[~(sd > 0)] = 1.0
    P = config.perturbations
    if P < m + 2:
        raise ValueError(f"need at least m + 2 = {m + 2} perturbations per sample, got {P}")
    f = output_function(model)
    eps = stream(seed, "lime", iteration).standard_normal((n, P, m))
    z = rows[:, None, :] + eps * sd
    out = f(z.reshape(n * P, m)).reshape(n, P)
    width = config.width(m)
    w = np.exp(-np.einsum("spj,spj->sp", eps, eps) / width**2)
    # shift by the first output so a flat model yields exactly zero after centering
    out = out - out[:, :1]
    wsum = w.sum(axis=1, keepdims=True)
    e_mean = np.einsum("sp,spj->sj", w, eps) / wsum
    y_mean = np.einsum("sp,sp->s", w, out)[:, None] / wsum
    ec = eps - e_mean[:, None, :]
    yc = out - y_mean
    gram = np.einsum("spi,sp,spj->sij", ec, w, ec) + config.ridge_lambda * np.eye(m)
    rhs = np.einsum("spi,sp,sp->si", ec, w, yc)
    try:
        coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"weighted ridge system is singular: {exc}") from None
    return coef


def lime_importance(model, rows, train_sd, config=None, n_repeat=1, seed=0, feature_names=None):
    """``s[i, j]`` = mean over rows of ``|coefficient_j|`` in LIME pass ``i``."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("validation set is empty")
    if n_repeat < 1:
        raise ValueError("n_repeat must be >= 1")
    m = rows.shape[1]
    scores = np.empty((n_repeat, m))
    for i in range(n_repeat):
        scores[i] = np.abs(lime_coefficients(model, rows, train_sd, config, seed, i)).mean(axis=0)
    return ImportanceMatrix(scores, _names(model, m, feature_names), Algorithm.LIME, seed)


def masked_values(model, x, background, masks):
    """Mean model output over background rows with masked-in columns set to ``x``.

    ``masks`` is a ``(K, m)`` boolean array; returns a length-``K`` vector.
    """
    f = output_function(model)
    masks = np.asarray(masks, dtype=bool)
    background = np.asarray(background, dtype=np.float64)
    hybrid = np.where(masks[:, None, :], np.asarray(x, dtype=np.float64)[None, None, :], background[None, :, :])
    k, b, m = hybrid.shape
    return f(hybrid.reshape(k * b, m)).reshape(k, b).mean(axis=1)


def walk_masks(order):
    """Masks visited by the forward walk then the reverse walk of ``order``.

    Returns ``(forward, reverse)``, each ``(m + 1, m)``, starting from the
    empty mask and ending at the full mask.
    """
    m = len(order)
    forward = np.zeros((m + 1, m), dtype=bool)
    reverse = np.zeros((m + 1, m), dtype=bool)
    for t in range(1, m + 1):
        forward[t] = forward[t - 1]
        forward[t, order[t - 1]] = True
        reverse[t] = reverse[t - 1]
        reverse[t, order[m - t]] = True
    return forward, reverse


def _walk_deltas_generic(model, x, background, order):
    m = len(order)
    forward, reverse = walk_masks(order)
    values = masked_values(model, x, background, np.vstack([forward, reverse]))
    vf, vr = values[: m + 1], values[m + 1:]
    fwd = np.empty(m)
    rev = np.empty(m)
    for t in range(1, m + 1):
        fwd[order[t - 1]] = vf[t] - vf[t - 1]
        rev[order[m - t]] = vr[t] - vr[t - 1]
    return fwd, rev


def shap_permutations(seed, iteration, n_rows, n_features):
    return np.stack([stream(seed, "shap", iteration, s).permutation(n_features) for s in range(n_rows)])


def shap_walks(model, rows, background, orders, use_kernel=True):
    """Forward and reverse marginal deltas for each row under its feature order.

    For a :class:`ForestModel` the compiled tree walk is used (it visits only
    the split features along each path); any other callable, or
    ``use_kernel=False``, evaluates every mask on the walk explicitly.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    background = np.ascontiguousarray(background, dtype=np.float64)
    orders = np.ascontiguousarray(orders, dtype=np.int64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise DataError("background set is empty")
    if use_kernel and isinstance(model, ForestModel):
        model._check_rows(rows)
        return _kernels.shap_walks_forest(rows, background, orders, model.roots, model.feature,
                                          model.threshold, model.left, model.right, model.value,
                                          model.max_nodes)
    fwd = np.empty(rows.shape)
    rev = np.empty(rows.shape)
    for s, x in enumerate(rows):
        fwd[s], rev[s] = _walk_deltas_generic(model, x, background, orders[s])
    return fwd, rev


def shap_values(model, rows, background, seed=0, iteration=0):
    """Antithetic permutation Shapley estimates for one pass: mean of forward and reverse walks."""
    rows = np.asarray(rows, dtype=np.float64)
    orders = shap_permutations(seed, iteration, rows.shape[0], rows.shape[1])
    fwd, rev = shap_walks(model, rows, background, orders)
    return 0.5 * (fwd + rev)


def exact_shap_values(model, rows, background):
    """Shapley values averaged over all ``m!`` feature orders (``m <= 6``)."""
    rows = np.asarray(rows, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise DataError("background set is empty")
    m = rows.shape[1]
    if m > 6:
        raise ValueError(f"exact enumeration needs m <= 6, got {m}")
    codes = np.arange(2**m)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    perms = list(itertools.permutations(range(m)))
    out = np.zeros(rows.shape)
    for s, x in enumerate(rows):
        value = masked_values(model, x, background, masks)
        for order in perms:
            code = 0
            for j in order:
                nxt = code | (1 << j)
                out[s, j] += value[nxt] - value[code]
                code = nxt
        out[s] /= len(perms)
    return out


def shap_importance(model, rows, background, n_repeat=1, seed=0, exact=False, feature_names=None):
    """``s[i, j]`` = mean over rows of ``|phi_j|`` in SHAP pass ``i``.

    Pass ``i`` draws a fresh feature order for each row from the stream
    ``(seed, i, row)``. In exact mode every pass averages over all orders, so
    all rows of the matrix are identical.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("validation set is empty")
    if n_repeat < 1:
        raise ValueError("n_repeat must be >= 1")
    m = rows.shape[1]
    if exact:
        row = np.abs(exact_shap_values(model, rows, background)).mean(axis=0)
        scores = np.tile(row, (n_repeat, 1))
    else:
        scores = np.empty((n_repeat, m))
        for i in range(n_repeat):
            scores[i] = np.abs(shap_values(model, rows, background, seed, i)).mean(axis=0)
    return ImportanceMatrix(scores, _names(model, m, feature_names), Algorithm.SHAP, seed)


def sample_background(train_rows, size, seed):
    """Fixed SHAP background: ``size`` training rows drawn without replacement."""
    train_rows = np.asarray(train_rows, dtype=np.float64)
    size = min(int(size), train_rows.shape[0])
    if size < 1:
        raise DataError("background set is empty")
    idx = np.sort(stream(seed, "shap-background").choice(train_rows.shape[0], size=size, replace=False))
    return train_rows[idx]


def subsample_rows(n_rows, count, seed):
    """Seeded subset of validation rows for LIME/SHAP desk runs (sorted indices)."""
    if count is None or count >= n_rows:
        return np.arange(n_rows)
    return np.sort(stream(seed, "subsample").choice(n_rows, size=int(count), replace=False))
