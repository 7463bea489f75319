import csv

import numpy as np
import pytest

import featstab.stability as stability_module
from featstab.data import synth_classification, synth_regression, split
from featstab.forest import ForestConfig, fit

ACCEPTANCE = []
REPORTS = []
RANKS = []


def pytest_configure(config):
    cls = stability_module.StabilityReport
    original = cls.__post_init__

    def recording(self):
        REPORTS.append(self)
        original(self)

    cls.__post_init__ = recording
    rank_cls = stability_module.RankMatrix
    rank_original = rank_cls.__post_init__

    def recording_ranks(self):
        rank_original(self)
        RANKS.append(self.ranks)

    rank_cls.__post_init__ = recording_ranks


def check_recorded_reports():
    """Normalization and rank-row invariants over every report and rank matrix built so far."""
    bad = 0
    for report in REPORTS:
        if abs(float(np.sum(report.normalized_importance)) - 1.0) > 1e-12:
            bad += 1
    for ranks in RANKS:
        m = ranks.shape[1]
        if not np.array_equal(np.sort(ranks, axis=1), np.broadcast_to(np.arange(1, m + 1), ranks.shape)):
            bad += 1
    return len(REPORTS), len(RANKS), bad


def pytest_sessionfinish(session, exitstatus):
    n, n_ranks, bad = check_recorded_reports()
    if n:
        detail = f"{n} stability reports and {n_ranks} rank matrices built during the session, {bad} violations"
        ACCEPTANCE.append(("2 (whole suite)", not bad, detail))
        if bad:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"criterion {name}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture
def criterion():
    def record(name, ok, detail=""):
        ACCEPTANCE.append((name, bool(ok), detail))
        return ok

    return record


@pytest.fixture(scope="session")
def synth_clf():
    return synth_classification(seed=0)[0]


@pytest.fixture(scope="session")
def synth_reg():
    return synth_regression(noise_sd=10.0, seed=0)[0]


@pytest.fixture(scope="session")
def small_forest(synth_clf):
    sp = split(synth_clf, 0)
    return fit(synth_clf.subset(sp.train), ForestConfig(n_trees=20, seed=1)), sp


@pytest.fixture(scope="session")
def breast_cancer_csv(tmp_path_factory):
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    bunch = sklearn_datasets.load_breast_cancer()
    path = tmp_path_factory.mktemp("data") / "breast_cancer.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(bunch.feature_names) + ["label"])
        for row, label in zip(bunch.data, bunch.target):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    return path
