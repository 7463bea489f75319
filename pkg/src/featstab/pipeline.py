"""Shared experiment setup: split, train the black-box forest, run explainers."""

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .data import LabeledDataset, SplitIndices, split
from .explain import (
    Algorithm,
    LimeConfig,
    ShapConfig,
    lime_importance,
    mda_importance,
    sample_background,
    shap_importance,
    subsample_rows,
)
from .forest import ForestConfig, ForestModel, fit


@dataclass
class Experiment:
    """A dataset with its split, trained forest and explainer inputs.

    MDA uses every validation row; LIME and SHAP use ``explain_rows``, which is
    the whole validation set unless a subsample size was requested.
    """

    dataset: LabeledDataset
    splits: SplitIndices
    model: ForestModel
    seed: int
    train_sd: np.ndarray
    background: np.ndarray
    explain_rows: np.ndarray
    lime: LimeConfig = field(default_factory=LimeConfig)
    shap: ShapConfig = field(default_factory=ShapConfig)

    @property
    def valid(self):
        return self.dataset.subset(self.splits.valid)

    @staticmethod
    def experiment_seed(seed, e):
        return derive_seed(seed, "experiment", e)

    def explain(self, algorithm, n_repeat, seed=None):
        algorithm = Algorithm(algorithm)
        seed = self.seed if seed is None else seed
        valid = self.valid
        names = self.dataset.feature_names
        if algorithm is Algorithm.MDA:
            return mda_importance(self.model, valid.features, valid.target, n_repeat, seed, names)
        rows = valid.features[self.explain_rows]
        if algorithm is Algorithm.LIME:
            return lime_importance(self.model, rows, self.train_sd, self.lime, n_repeat, seed, names)
        return shap_importance(self.model, rows, self.background, n_repeat, seed, self.shap.exact, names)


def prepare(dataset, seed=0, forest=None, splits=None, subsample=None, lime=None, shap=None, workers=1):
    """Split ``dataset`` (unless ``splits`` is given) and train the forest on the train rows."""
    splits = splits if splits is not None else split(dataset, seed)
    forest = forest if forest is not None else ForestConfig()
    forest = forest.with_seed(derive_seed(seed, "forest"))
    lime = lime if lime is not None else LimeConfig()
    shap = shap if shap is not None else ShapConfig()
    train = dataset.subset(splits.train)
    model = fit(train, forest, workers=workers)
    return Experiment(
        dataset=dataset,
        splits=splits,
        model=model,
        seed=seed,
        train_sd=train.features.std(axis=0),
        background=sample_background(train.features, shap.background_size, seed),
        explain_rows=subsample_rows(len(splits.valid), subsample, seed),
        lime=lime,
        shap=shap,
    )
