"""Rank matrices, reciprocal-rank importance and the instability index."""

import json
import math
from dataclasses import dataclass

import numpy as np

from .explain import ImportanceMatrix
from .errors import NumericError

# n_repeat grid spanning 1..1000
DEFAULT_GRID = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)
PLATEAU_THRESHOLD = 0.01


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        ranks = np.array(self.ranks, dtype=np.int64)
        if ranks.ndim != 2 or ranks.shape[0] < 1:
            raise ValueError("rank matrix must be 2-D with at least one row")
        m = ranks.shape[1]
        if not np.array_equal(np.sort(ranks, axis=1), np.broadcast_to(np.arange(1, m + 1), ranks.shape)):
            raise ValueError("every row of a rank matrix must be a permutation of 1..m")
        if len(self.feature_names) != m:
            raise ValueError("feature name count must equal the column count")
        ranks.flags.writeable = False
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def shape(self):
        return self.ranks.shape


@dataclass(frozen=True)
class StabilityReport:
    feature_names: tuple
    average_ranks: np.ndarray
    normalized_importance: np.ndarray
    variances: np.ndarray
    index_by_k: np.ndarray
    importance_order: tuple
    top_rank_counts: np.ndarray
    algorithm: str = ""

    def __post_init__(self):
        total = float(np.sum(self.normalized_importance))
        if abs(total - 1.0) > 1e-12:
            raise NumericError(f"normalized importances sum to {total!r}, not 1")
        if np.any(self.variances < 0):
            raise NumericError("rank variances must be non-negative")
        if sorted(self.importance_order) != sorted(self.feature_names):
            raise ValueError("importance order must be a permutation of the feature names")

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "features": [
                {
                    "name": name,
                    "average_rank": float(self.average_ranks[j]),
                    "normalized_importance": float(self.normalized_importance[j]),
                    "variance": float(self.variances[j]),
                    "top_rank_count": int(self.top_rank_counts[j]),
                }
                for j, name in enumerate(self.feature_names)
            ],
            "importance_order": list(self.importance_order),
            "index_by_k": [float(v) for v in self.index_by_k],
        }


@dataclass(frozen=True)
class InstabilityCurve:
    grid: tuple
    index: np.ndarray
    algorithm: str
    n_experiments: int
    k: int

    def __post_init__(self):
        grid = tuple(int(g) for g in self.grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        index = np.asarray(self.index, dtype=np.float64)
        if np.any(index < 0):
            raise ValueError("instability values must be non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "index", index)

    def rows(self):
        return [(g, float(v), self.algorithm) for g, v in zip(self.grid, self.index)]


def _scores(S):
    return S.scores if isinstance(S, ImportanceMatrix) else np.asarray(S, dtype=np.float64)


def rank_scores(S, feature_names=None):
    """Rank each row of a score matrix: 1 = highest score, ties to the lower column index."""
    scores = _scores(S)
    if scores.ndim != 2 or scores.size == 0:
        raise ValueError("score matrix must be non-empty and 2-D")
    if not np.all(np.isfinite(scores)):
        raise NumericError("cannot rank non-finite scores")
    n, m = scores.shape
    # stable sort on the negated scores keeps equal scores in column order
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.empty((n, m), dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(1, m + 1)[None, :].repeat(n, axis=0), axis=1)
    if feature_names is None:
        feature_names = S.feature_names if isinstance(S, ImportanceMatrix) else [f"x{j}" for j in range(m)]
    return RankMatrix(ranks, feature_names)


def _ranks(R):
    return R.ranks if isinstance(R, RankMatrix) else np.asarray(R)


def average_ranks(R):
    return _ranks(R).mean(axis=0)


def normalized_importance(r):
    """Reciprocal average ranks scaled to sum to one."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 1):
        raise ValueError("average ranks must be >= 1")
    inv = 1.0 / r
    return inv / inv.sum()


def feature_variances(R):
    """Population variance (divide by n) of each column's ranks."""
    return _ranks(R).astype(np.float64).var(axis=0)


def importance_order(r):
    """Column indices sorted by average rank, ties to the lower index."""
    return np.argsort(np.asarray(r, dtype=np.float64), kind="stable")


def instability_index(R, k):
    """Root mean of the rank variances of the ``k`` best-ranked features."""
    ranks = _ranks(R)
    m = ranks.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k must be in 1..{m}, got {k}")
    var = feature_variances(ranks)[importance_order(average_ranks(ranks))]
    return math.sqrt(var[:k].mean())


def instability_by_k(R):
    ranks = _ranks(R)
    var = feature_variances(ranks)[importance_order(average_ranks(ranks))]
    return np.sqrt(np.cumsum(var) / np.arange(1, len(var) + 1))


def top_rank_histogram(R):
    """How many iterations ranked each feature first."""
    ranks = _ranks(R)
    return (ranks == 1).sum(axis=0)


def stability_report(S):
    R = rank_scores(S)
    r = average_ranks(R)
    order = importance_order(r)
    return StabilityReport(
        feature_names=R.feature_names,
        average_ranks=r,
        normalized_importance=normalized_importance(r),
        variances=feature_variances(R),
        index_by_k=instability_by_k(R),
        importance_order=tuple(R.feature_names[j] for j in order),
        top_rank_counts=top_rank_histogram(R),
        algorithm=S.algorithm.value if isinstance(S, ImportanceMatrix) else "",
    )


def final_ranking(S):
    """One ranking per run: the rank of each feature's average rank."""
    r = average_ranks(rank_scores(S))
    return rank_scores(-r[None, :]).ranks[0]


def curve_from_runs(runs, grid, k=None, algorithm=""):
    """Instability curve from ``E`` runs of ``max(grid)`` iterations each.

    Grid value ``g`` uses the first ``g`` rows of every run, which is exactly
    what a fresh ``n_repeat=g`` run with the same seed would produce.
    """
    grid = tuple(int(g) for g in grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    if len(runs) < 2:
        raise ValueError("need at least two experiments")
    m = _scores(runs[0]).shape[1]
    k = m if k is None else int(k)
    values = []
    for g in grid:
        stacked = np.stack([final_ranking(_scores(run)[:g]) for run in runs])
        values.append(instability_index(stacked, k))
    return InstabilityCurve(grid, np.array(values), str(algorithm), len(runs), k)


def convergence_study(context, algorithm, grid=DEFAULT_GRID, n_experiments=10, k=None, seed=0):
    """Instability of final rankings across experiments, as ``n_repeat`` grows.

    ``context`` is a prepared :class:`featstab.pipeline.Experiment` (or a
    dataset, which is prepared with ``seed``). Experiments share the trained
    model and differ only in the explainer seed.
    """
    from .pipeline import Experiment, prepare

    grid = tuple(int(g) for g in grid)
    if not grid or min(grid) < 1:
        raise ValueError("grid must be a non-empty list of positive n_repeat values")
    if n_experiments < 2:
        raise ValueError("need at least two experiments")
    if not isinstance(context, Experiment):
        context = prepare(context, seed=seed)
    runs = [
        context.explain(algorithm, n_repeat=max(grid), seed=context.experiment_seed(seed, e))
        for e in range(n_experiments)
    ]
    return curve_from_runs(runs, grid, k, getattr(algorithm, "value", algorithm))


def plateau_point(curve, threshold=PLATEAU_THRESHOLD):
    """First grid value whose forward slope per unit n_repeat is below ``threshold``.

    Returns ``(n_repeat, converged)``; when no slope qualifies the last grid
    value is returned with ``converged=False``.
    """
    grid = curve.grid if isinstance(curve, InstabilityCurve) else tuple(g for g, _ in curve)
    index = curve.index if isinstance(curve, InstabilityCurve) else np.array([v for _, v in curve])
    if len(grid) < 2:
        raise ValueError("need at least two curve points")
    for a in range(len(grid) - 1):
        slope = abs(index[a + 1] - index[a]) / (grid[a + 1] - grid[a])
        if slope < threshold:
            return grid[a], True
    return grid[-1], False


def curve_to_json(curves, plateaus=None):
    doc = []
    for curve in curves:
        item = {
            "algorithm": curve.algorithm,
            "k": curve.k,
            "n_experiments": curve.n_experiments,
            "grid": list(curve.grid),
            "index": [float(v) for v in curve.index],
        }
        if plateaus and curve.algorithm in plateaus:
            point, converged = plateaus[curve.algorithm]
            item["plateau"] = {"n_repeat": point, "converged": converged}
        doc.append(item)
    return json.dumps(doc, indent=2)
