"""Meta-label backtests: veto trades a classifier predicts will lose."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed, stream
from .data import LabeledDataset, Task, _parse_cell, format_float, read_table
from .errors import DataError, NumericError
from .forest import ForestConfig, fit


@dataclass(frozen=True)
class TradeSeries:
    timestamps: np.ndarray
    returns: np.ndarray
    features: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[ns]")
        returns = np.asarray(self.returns, dtype=np.float64)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != returns.shape[0] or ts.shape[0] != returns.shape[0]:
            raise DataError("timestamps, returns and feature rows must have the same length")
        if features.shape[1] != len(self.feature_names):
            raise DataError("feature name count does not match feature columns")
        if ts.size > 1 and np.any(ts[1:] < ts[:-1]):
            raise DataError("trade timestamps must be non-decreasing")
        if not np.all(np.isfinite(returns)):
            raise DataError("trade returns must be finite")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return self.returns.shape[0]

    @property
    def labels(self):
        """1 for a profitable trade (return strictly above zero), else 0."""
        return (self.returns > 0).astype(np.float64)

    def to_dataset(self):
        return LabeledDataset(self.features, self.feature_names, self.labels, Task.CLASSIFICATION)

    def subset(self, rows=None, columns=None):
        rows = np.arange(len(self)) if rows is None else np.asarray(rows, dtype=np.intp)
        names = self.feature_names
        features = self.features[rows]
        if columns is not None:
            lookup = {name: j for j, name in enumerate(self.feature_names)}
            missing = [c for c in columns if c not in lookup]
            if missing:
                raise DataError(f"unknown trade features: {missing}")
            idx = [lookup[c] for c in columns]
            features = features[:, idx]
            names = tuple(columns)
        return TradeSeries(self.timestamps[rows], self.returns[rows], features, names)


@dataclass(frozen=True)
class BacktestReport:
    returns: np.ndarray
    sharpe: float | None
    cumulative_return: float
    n_taken: int
    n_vetoed: int
    seed: int | None = None

    @property
    def curve(self):
        return cumulative_curve(self.returns)


@dataclass(frozen=True)
class EnsembleReport:
    reports: tuple
    mean_sharpe: float
    sd_sharpe: float
    mean_cumulative_return: float
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    @property
    def sharpes(self):
        return [r.sharpe for r in self.reports]

    def mean_curve(self):
        return np.mean([r.curve for r in self.reports], axis=0)


def load_trades(path, timestamp_column="timestamp", return_column="return"):
    """Read a trades CSV: ISO-8601 timestamps, fractional returns, feature columns."""
    header, body = read_table(path)
    for column in (timestamp_column, return_column):
        if column not in header:
            raise DataError(f"{path}: column {column!r} not in header")
    if not body:
        raise DataError(f"{path}: no trades")
    t_at = header.index(timestamp_column)
    r_at = header.index(return_column)
    feature_at = [j for j in range(len(header)) if j not in (t_at, r_at)]
    timestamps = []
    returns = np.empty(len(body))
    features = np.empty((len(body), len(feature_at)))
    for i, row in enumerate(body):
        line = i + 2
        try:
            timestamps.append(np.datetime64(row[t_at].strip(), "ns"))
        except ValueError:
            raise DataError(f"{path}: line {line}: bad timestamp {row[t_at]!r}") from None
        returns[i] = _parse_cell(row[r_at], line, return_column)
        features[i] = [_parse_cell(row[j], line, header[j]) for j in feature_at]
    ts = np.array(timestamps, dtype="datetime64[ns]")
    if np.any(ts[1:] < ts[:-1]):
        bad = int(np.flatnonzero(ts[1:] < ts[:-1])[0]) + 3
        raise DataError(f"{path}: line {bad}: timestamps are not in chronological order")
    return TradeSeries(ts, returns, features, [header[j] for j in feature_at])


def write_trades(trades, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "return", *trades.feature_names])
        for t, r, row in zip(trades.timestamps, trades.returns, trades.features):
            writer.writerow([str(np.datetime64(t, "D")), format_float(r), *(format_float(v) for v in row)])


def synth_trades(n=500, n_features=20, signal_strength=3.0, seed=0, n_informative=5,
                 scale=0.01, start="2013-01-01"):
    """Monthly trades whose profitability depends on a few features.

    ``return = scale * (signal_strength * x_informative @ w + eps)`` with unit
    norm ``w`` and ``eps ~ N(0, 1)``. The first ``n_informative`` columns carry
    the signal; features are i.i.d. standard normal.
    """
    if n < 10:
        raise DataError("need at least 10 trades")
    n_informative = min(n_informative, n_features)
    rng = stream(seed, "trades")
    features = rng.standard_normal((n, n_features))
    w = rng.standard_normal(n_informative)
    w /= np.linalg.norm(w)
    eps = stream(seed, "trades", "noise").standard_normal(n)
    returns = scale * (signal_strength * features[:, :n_informative] @ w + eps)
    timestamps = np.datetime64(start, "M") + np.arange(n)
    names = [f"f_{j}" for j in range(n_features)]
    return TradeSeries(timestamps.astype("datetime64[ns]"), returns, features, names)


def sharpe(returns, annualization=1.0):
    """Mean over population standard deviation, times ``annualization``."""
    returns = np.asarray(returns, dtype=np.float64)
    if returns.size < 2:
        raise NumericError("Sharpe ratio needs at least two returns")
    sd = float(returns.std())
    if sd == 0.0:
        raise NumericError("Sharpe ratio undefined: returns have zero variance")
    return float(returns.mean()) / sd * annualization


def cumulative_curve(returns):
    returns = np.asarray(returns, dtype=np.float64)
    if np.any(returns <= -1):
        raise NumericError("compounding needs every return above -1")
    return np.cumprod(1.0 + returns) - 1.0


def cumulative_return(returns):
    """Compounded total return ``prod(1 + r) - 1``."""
    returns = np.asarray(returns, dtype=np.float64)
    if returns.size == 0:
        return 0.0
    return float(cumulative_curve(returns)[-1])


def apply_veto(returns, take):
    """Vetoed trades (``take`` false) earn zero; taken trades keep their return."""
    returns = np.asarray(returns, dtype=np.float64)
    return np.where(np.asarray(take, dtype=bool), returns, 0.0)


def veto_backtest(model, trades, annualization=1.0, seed=None):
    """Backtest the strategy with entries vetoed where the model predicts a loss.

    Raises :class:`NumericError` when the filtered returns have zero variance,
    e.g. when every trade is vetoed.
    """
    if callable(model) and not hasattr(model, "predict"):
        take = np.asarray(model(trades.features)).ravel() == 1
    else:
        if trades.features.shape[1] != model.n_features:
            raise DataError(
                f"model trained on {model.n_features} features, trades carry {trades.features.shape[1]}"
            )
        take = model.predict(trades.features) == 1
    filtered = apply_veto(trades.returns, take)
    return BacktestReport(
        returns=filtered,
        sharpe=sharpe(filtered, annualization),
        cumulative_return=cumulative_return(filtered),
        n_taken=int(take.sum()),
        n_vetoed=int((~take).sum()),
        seed=seed,
    )


def ensemble_backtest(trades, splits, features=None, n_models=100, seed=0, forest=None,
                      annualization=1.0, bins=20, workers=1):
    """Backtest ``n_models`` forests that differ only in their seed.

    Each forest trains on every pre-test row (train and validation) using
    ``features`` and is backtested on the test rows. A model whose filtered
    returns have zero variance gets ``sharpe=None`` and is left out of the
    Sharpe statistics.
    """
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    forest = forest if forest is not None else ForestConfig()
    features = tuple(features) if features is not None else trades.feature_names
    fit_rows = np.concatenate([splits.train, splits.valid])
    train = trades.subset(fit_rows, features).to_dataset()
    test = trades.subset(splits.test, features)
    reports = []
    for i in range(n_models):
        model_seed = derive_seed(seed, "ensemble", i)
        model = fit(train, forest.with_seed(model_seed), workers=workers)
        take = model.predict(test.features) == 1
        filtered = apply_veto(test.returns, take)
        try:
            value = sharpe(filtered, annualization)
        except NumericError:
            value = None
        reports.append(BacktestReport(filtered, value, cumulative_return(filtered),
                                      int(take.sum()), int((~take).sum()), model_seed))
    valid = np.array([r.sharpe for r in reports if r.sharpe is not None])
    if valid.size:
        counts, edges = np.histogram(valid, bins=bins)
        mean, sd = float(valid.mean()), float(valid.std())
    else:
        counts, edges = np.zeros(bins, dtype=np.int64), np.linspace(0.0, 1.0, bins + 1)
        mean = sd = math.nan
    return EnsembleReport(
        reports=tuple(reports),
        mean_sharpe=mean,
        sd_sharpe=sd,
        mean_cumulative_return=float(np.mean([r.cumulative_return for r in reports])),
        histogram_counts=counts,
        histogram_edges=edges,
    )
