"""
Convergence in n_repeat
=======================

Repeat each explainer in several experiments and watch the instability of
the final rankings fall as more passes are averaged.
"""

# %%
from featstab import prepare, synth_classification
from featstab.stability import InstabilityCurve, convergence_study, plateau_point

dataset, _ = synth_classification(seed=0)
exp = prepare(dataset, seed=0, subsample=30)
for algo in ("MDA", "LIME", "SHAP"):
    curve = convergence_study(exp, algo, grid=(1, 5, 10, 25), n_experiments=4, seed=0)
    print(algo, [round(float(v), 3) for v in curve.index], "plateau:", plateau_point(curve))

# %% plateau on a hand-made curve: slopes per unit n_repeat
worked = InstabilityCurve((1, 10, 100, 1000), [0.9, 0.5, 0.45, 0.44], "example", 5, 40)
print(plateau_point(worked))
