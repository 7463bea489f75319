"""
Random forest
=============

The black-box model: bootstrap CART trees with Gini or variance splits.
"""

# %%
import numpy as np

from featstab import ForestConfig, fit, synth_classification
from featstab.data import split
from featstab.select_eval import accuracy, auc

dataset, _ = synth_classification(seed=0)
sp = split(dataset, seed=0)
train, test = dataset.subset(sp.train), dataset.subset(sp.test)

model = fit(train, ForestConfig(n_trees=100, seed=1))
proba = model.predict_proba(test.features)
print("test accuracy:", accuracy(test.target, model.predict(test.features)))
print("test AUC:", auc(test.target, proba[:, 1]))

# %% the same seed grows the same trees, whatever the worker count
again = fit(train, ForestConfig(n_trees=100, seed=1), workers=4)
print("identical:", np.array_equal(again.predict_proba(test.features), proba))

# %% models serialize to JSON
model.to_json("/tmp/forest.json")
print(len(model.trees), "trees,", sum(t.n_nodes for t in model.trees), "nodes")
