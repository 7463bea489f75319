"""
Feature selection
=================

Keep features whose reciprocal-rank importance beats the mean, retrain,
and compare against all features.
"""

# %%
from featstab import prepare, stability_report, synth_classification
from featstab.select_eval import eval_forest_config, evaluate_selection, select_features, sweep_k

dataset, _ = synth_classification(seed=0)
exp = prepare(dataset, seed=0, subsample=50)
retrain = eval_forest_config(None, seed=0)

baseline = evaluate_selection(dataset, exp.splits, dataset.feature_names, retrain, "All")
print("All ", baseline.values)
for algo in ("MDA", "LIME", "SHAP"):
    sel = select_features(stability_report(exp.explain(algo, n_repeat=20)))
    metrics = evaluate_selection(dataset, exp.splits, sel.selected, retrain, algo)
    print(f"{algo:4s}", len(sel.selected), "features", {k: round(v, 3) for k, v in metrics.values.items()})

# %% test AUC against the number of top-ranked features kept
order = stability_report(exp.explain("SHAP", n_repeat=20)).importance_order
curve = sweep_k(dataset, exp.splits, order[:12], retrain, "SHAP")
print([round(m.values["auc"], 3) for m in curve])
