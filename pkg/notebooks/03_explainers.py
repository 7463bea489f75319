"""
Explainers
==========

MDA, LIME and SHAP importance matrices on one prepared experiment.
"""

# %%
import numpy as np

from featstab import prepare, synth_classification
from featstab.explain import exact_shap_values, shap_values

dataset, _ = synth_classification(seed=0)
exp = prepare(dataset, seed=0, subsample=50)

mda = exp.explain("MDA", n_repeat=5)
lime = exp.explain("LIME", n_repeat=5)
shap = exp.explain("SHAP", n_repeat=5)
for S in (mda, lime, shap):
    top = np.argsort(-S.scores.mean(axis=0))[:5]
    print(S.algorithm.value, S.scores.shape, [S.feature_names[j] for j in top])

# %% SHAP attributions add up to the prediction gap
rows = exp.valid.features[exp.explain_rows]
phi = shap_values(exp.model, rows, exp.background, seed=0, iteration=0)
gap = exp.model.output(rows) - exp.model.output(exp.background).mean()
print("local accuracy error:", np.abs(phi.sum(axis=1) - gap).max())

# %% exact enumeration for a small model
f = lambda z: z[:, 0] * z[:, 1] + z[:, 2]
x = np.array([[1.0, 2.0, 3.0]])
print(exact_shap_values(f, x, np.zeros((1, 3))))
