"""
Meta-labeling backtest
======================

A forest vetoes trades it expects to lose; vetoed trades earn zero.
"""

# %%
import numpy as np

from featstab.data import time_split
from featstab.metalabel import cumulative_return, ensemble_backtest, sharpe, synth_trades

trades = synth_trades(n=500, signal_strength=3.0, seed=0)
sp = time_split(trades.timestamps, trades.timestamps[400], valid_fraction=0.25)
test = trades.returns[sp.test]
print("original strategy: Sharpe", round(sharpe(test), 3), "cumulative", round(cumulative_return(test), 4))

# %%
ens = ensemble_backtest(trades, sp, n_models=10, seed=0)
print("meta-labeled: mean Sharpe", round(ens.mean_sharpe, 3), "+/-", round(ens.sd_sharpe, 3),
      "mean cumulative", round(ens.mean_cumulative_return, 4))
print("histogram:", ens.histogram_counts)

# %% restricting to the informative columns
subset = ensemble_backtest(trades, sp, features=trades.feature_names[:5], n_models=10, seed=0)
print("with selection: mean Sharpe", round(subset.mean_sharpe, 3))
