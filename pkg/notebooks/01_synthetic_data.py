"""
Synthetic datasets
==================

Informative, redundant and noise columns, and the 60/20/20 split.
"""

# %%
import numpy as np

from featstab import synth_classification, synth_regression
from featstab.data import Provenance, split

dataset, provenance = synth_classification(n=1000, seed=0)
print(dataset.features.shape, "positives:", int(dataset.target.sum()))
print(dataset.feature_names[:3], dataset.feature_names[-3:])

# %% redundant columns are exact linear combinations of the informative ones
informative = dataset.features[:, :10]
redundant = dataset.features[:, 10:20]
coef, *_ = np.linalg.lstsq(informative, redundant, rcond=None)
print("max reconstruction error:", np.abs(informative @ coef - redundant).max())

# %% regression target is linear in the informative block
reg, reg_prov = synth_regression(noise_sd=10.0, seed=0)
noise = reg.features[:, [t is Provenance.NOISE for t in reg_prov.tags]]
print("largest |corr(y, noise column)|:",
      max(abs(np.corrcoef(reg.target, col)[0, 1]) for col in noise.T))

# %%
sp = split(dataset, seed=0)
print("train/valid/test sizes:", sp.sizes())
