import numpy as np
import pytest

from featstab.data import time_split
from featstab.errors import DataError, NumericError
from featstab.forest import ForestConfig, fit
from featstab.metalabel import (
    TradeSeries,
    apply_veto,
    cumulative_return,
    ensemble_backtest,
    load_trades,
    sharpe,
    synth_trades,
    veto_backtest,
    write_trades,
)

TEN = np.array([0.03, -0.02, 0.01, -0.04, 0.05, 0.02, -0.01, 0.04, -0.03, 0.02])


def ten_trades():
    ts = (np.datetime64("2018-01", "M") + np.arange(10)).astype("datetime64[ns]")
    return TradeSeries(ts, TEN, TEN[:, None], ["signal"])


def test_sharpe_hand_values():
    assert sharpe([0.01, -0.01]) == 0.0
    assert sharpe([0.03, 0.01]) == pytest.approx(2.0)
    assert sharpe([0.03, 0.01], annualization=np.sqrt(12)) == pytest.approx(2.0 * np.sqrt(12))
    with pytest.raises(NumericError):
        sharpe([0.02, 0.02])


def test_cumulative_return():
    assert cumulative_return([0.1, 0.1]) == pytest.approx(0.21, abs=1e-15)
    assert cumulative_return([0.0, 0.0, 0.0]) == 0.0


def test_veto_zeroes_returns():
    np.testing.assert_array_equal(apply_veto([0.1, -0.2, 0.3], [1, 0, 1]), [0.1, 0.0, 0.3])


def test_always_take_matches_original():
    trades = ten_trades()
    report = veto_backtest(lambda X: np.ones(len(X)), trades)
    assert report.sharpe == sharpe(TEN)
    assert report.cumulative_return == cumulative_return(TEN)
    assert report.n_vetoed == 0


def test_perfect_oracle_improves_both_metrics():
    trades = ten_trades()
    report = veto_backtest(lambda X: (X[:, 0] > 0).astype(float), trades)
    assert report.sharpe > sharpe(TEN)
    assert report.cumulative_return > cumulative_return(TEN)
    assert report.n_vetoed == 4


def test_always_veto_is_undefined():
    with pytest.raises(NumericError):
        veto_backtest(lambda X: np.zeros(len(X)), ten_trades())


def test_zero_return_is_a_loss_label():
    trades = ten_trades()
    ts = trades.timestamps
    zero = TradeSeries(ts[:2], [0.0, 0.01], [[1.0], [2.0]], ["a"])
    np.testing.assert_array_equal(zero.labels, [0.0, 1.0])


def test_trades_csv_roundtrip(tmp_path):
    trades = synth_trades(n=30, n_features=3, seed=1)
    path = tmp_path / "trades.csv"
    write_trades(trades, path)
    back = load_trades(path)
    np.testing.assert_array_equal(back.returns, trades.returns)
    np.testing.assert_array_equal(back.features, trades.features)
    np.testing.assert_array_equal(back.timestamps, trades.timestamps)


def test_load_trades_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("timestamp,return,f\n")
    with pytest.raises(DataError):
        load_trades(empty)
    unordered = tmp_path / "unordered.csv"
    unordered.write_text("timestamp,return,f\n2018-02-01,0.1,1\n2018-01-01,0.2,1\n")
    with pytest.raises(DataError, match="line 3"):
        load_trades(unordered)


def test_synth_trades_deterministic():
    a, b = synth_trades(seed=3), synth_trades(seed=3)
    np.testing.assert_array_equal(a.returns, b.returns)
    np.testing.assert_array_equal(a.features, b.features)
    assert len(a) == 500


def forest_accuracy(trades):
    sp = time_split(trades.timestamps, trades.timestamps[int(0.8 * len(trades))])
    model = fit(trades.subset(sp.train).to_dataset(), ForestConfig(seed=0))
    test = trades.subset(sp.test)
    return np.mean(model.predict(test.features) == test.labels)


def test_strong_signal_is_learnable():
    assert forest_accuracy(synth_trades(signal_strength=5.0, seed=0)) > 0.8


def test_no_signal_is_a_coin_flip():
    accs = [forest_accuracy(synth_trades(signal_strength=0.0, seed=s)) for s in range(3)]
    assert abs(np.mean(accs) - 0.5) < 0.1


def test_ensemble_single_model_and_determinism():
    trades = synth_trades(n=120, n_features=5, seed=2)
    sp = time_split(trades.timestamps, trades.timestamps[96], valid_fraction=0.25)
    config = ForestConfig(n_trees=10)
    one = ensemble_backtest(trades, sp, n_models=1, seed=4, forest=config)
    assert one.mean_sharpe == one.reports[0].sharpe
    again = ensemble_backtest(trades, sp, n_models=3, seed=4, forest=config)
    twice = ensemble_backtest(trades, sp, n_models=3, seed=4, forest=config)
    assert again.sharpes == twice.sharpes
    assert again.histogram_counts.sum() == sum(s is not None for s in again.sharpes)
