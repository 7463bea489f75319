"""
Ranking stability
=================

From score matrices to ranks, reciprocal-rank importance and the
instability index I(k).
"""

# %%
import numpy as np

from featstab import prepare, stability_report, synth_classification
from featstab.stability import instability_index, rank_scores

R = np.array([[1, 2], [2, 1]])
print("I(1), I(2) =", instability_index(R, 1), instability_index(R, 2))

# %%
dataset, _ = synth_classification(seed=0)
exp = prepare(dataset, seed=0, subsample=50)
reports = {algo: stability_report(exp.explain(algo, n_repeat=30)) for algo in ("MDA", "LIME", "SHAP")}
for algo, rep in reports.items():
    print(f"{algo:5s} I(5)={rep.index_by_k[4]:.2f} I(20)={rep.index_by_k[19]:.2f} I(40)={rep.index_by_k[39]:.2f}",
          rep.importance_order[:4])

# %% how often each feature came first
rep = reports["MDA"]
counts = {n: int(c) for n, c in zip(rep.feature_names, rep.top_rank_counts) if c}
print(counts)

# %%
from featstab.plotting import line_plot

k = np.arange(1, 41)
line_plot("/tmp/instability_by_k.svg", {a: (k, r.index_by_k) for a, r in reports.items()}, "k", "I(k)")
