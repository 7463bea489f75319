"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture; the lines
are printed in the terminal summary.
"""

import csv
import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from featstab.cli import main, resolve_config, run
from featstab.data import LabeledDataset, Task, synth_classification, split
from featstab.explain import exact_shap_values, mda_drop, mda_importance, shap_values
from featstab.forest import ForestConfig, ForestModel, Tree, fit
from featstab.metalabel import TradeSeries, cumulative_return, ensemble_backtest, sharpe, synth_trades, veto_backtest
from featstab.data import time_split
from featstab.pipeline import prepare
from featstab.stability import (
    InstabilityCurve,
    average_ranks,
    feature_variances,
    instability_index,
    normalized_importance,
    plateau_point,
    rank_scores,
    stability_report,
)
from featstab.explain import Algorithm, ImportanceMatrix

from .conftest import check_recorded_reports
from .test_explain import FOUR_LABELS, FOUR_ROWS, additive, brute_force_shapley, interaction, label_stump, three_way

SEEDS = range(5)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_criterion_1_stability_math(criterion):
    start = time.perf_counter()
    R = np.array([[1, 2], [2, 1]])
    checks = [
        np.array_equal(average_ranks(R), [1.5, 1.5]),
        np.array_equal(feature_variances(R), [0.25, 0.25]),
        instability_index(R, 1) == 0.5,
        instability_index(R, 2) == 0.5,
        np.max(np.abs(normalized_importance([1, 2, 3]) - np.array([6, 3, 2]) / 11)) <= 1e-12,
    ]
    elapsed = time.perf_counter() - start
    ok = all(checks) and elapsed < 1.0
    criterion("1", ok, f"hand matrix and reciprocal-rank checks {checks}, {elapsed:.4f} s")
    assert ok


def test_criterion_3_shap_local_accuracy(criterion):
    start = time.perf_counter()
    dataset, _ = synth_classification(seed=0)
    exp = prepare(dataset, seed=0, subsample=50)
    rows = exp.valid.features[exp.explain_rows]
    assert rows.shape == (50, 40) and exp.background.shape == (20, 40)
    target = exp.model.output(rows) - exp.model.output(exp.background).mean()
    worst = 0.0
    for iteration in range(10):
        phi = shap_values(exp.model, rows, exp.background, seed=0, iteration=iteration)
        worst = max(worst, float(np.max(np.abs(phi.sum(axis=1) - target))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 120
    criterion("3", ok, f"max |sum(phi) - (f(x) - E f(bg))| = {worst:.2e} over 50 rows x 10 passes, {elapsed:.1f} s")
    assert ok


def test_criterion_4_shap_oracles(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    background = rng.standard_normal((10, 3))
    rows = rng.standard_normal((5, 3))
    exact_err = sampled_err = 0.0
    for f in (additive, interaction, three_way):
        exact = exact_shap_values(f, rows, background)
        oracle = np.array([brute_force_shapley(f, x, background) for x in rows])
        exact_err = max(exact_err, float(np.max(np.abs(exact - oracle))))
        sampled = np.mean([shap_values(f, rows, background, seed=1, iteration=i) for i in range(200)], axis=0)
        sampled_err = max(sampled_err, float(np.max(np.abs(sampled - oracle))))
    elapsed = time.perf_counter() - start
    ok = exact_err <= 1e-9 and sampled_err <= 0.05 and elapsed < 30
    criterion("4", ok, f"exact error {exact_err:.2e}, sampled (n_repeat=200) error {sampled_err:.4f}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_mda_null_feature(criterion):
    dataset, _ = synth_classification(n=400, seed=1)
    X = np.column_stack([dataset.features, np.full(dataset.n_samples, 2.5)])
    ds = LabeledDataset(X, dataset.feature_names + ("const",), dataset.target, Task.CLASSIFICATION)
    sp = split(ds, 1)
    model = fit(ds.subset(sp.train), ForestConfig(n_trees=50, seed=1))
    valid = ds.subset(sp.valid)
    # shuffle the constant column's neighbours too: any unused column must score exactly zero
    unused = sorted(set(range(ds.n_features)) - model.used_features())
    S = mda_importance(model, valid.features, valid.target, n_repeat=20, seed=3)
    null_ok = 40 in unused and all(np.all(S.scores[:, j] == 0.0) for j in unused)
    drops = [mda_drop(label_stump(), FOUR_ROWS, FOUR_LABELS, 0, p) for p in itertools.permutations(range(4))]
    oracle = np.mean([1.0 - np.mean(FOUR_LABELS[list(p)] == FOUR_LABELS) for p in itertools.permutations(range(4))])
    gap = abs(float(np.mean(drops)) - oracle)
    ok = null_ok and gap <= 1e-12
    criterion("5", ok, f"{len(unused)} unused columns exactly 0: {null_ok}; 24-permutation mean "
                       f"{np.mean(drops)} vs brute force {oracle} (gap {gap:.1e})")
    assert ok


def by_k_curves(path):
    curves = {}
    for row in read_rows(path):
        curves.setdefault((int(row["seed"]), row["algorithm"]), []).append(float(row["index"]))
    return {key: np.array(v) for key, v in curves.items()}


@pytest.mark.slow
def test_criterion_6_instability_ordering(criterion, tmp_path):
    start = time.perf_counter()
    summary = {}
    for kind in ("classification", "regression"):
        out = tmp_path / kind
        cfg = resolve_config(["stability", "--synth", kind, "--seeds", "5", "--n-repeat", "100",
                              "--subsample", "50", "--out", str(out)])
        run(cfg)
        curves = by_k_curves(out / "instability_by_k.csv")
        fractions = []
        for seed in SEEDS:
            mda, lime, shap = (curves[(seed, a)] for a in ("MDA", "LIME", "SHAP"))
            fractions.append(float(np.mean((mda > lime) & (mda > shap))))
        summary[kind] = fractions
    elapsed = time.perf_counter() - start
    passing = {kind: sum(f >= 0.8 for f in fr) >= 4 for kind, fr in summary.items()}
    ok = all(passing.values()) and elapsed < 600
    detail = "; ".join(f"{kind}: share of k with MDA above LIME and SHAP per seed "
                       f"{[round(f, 3) for f in fr]} ({'ok' if passing[kind] else 'below 4 of 5'})"
                       for kind, fr in summary.items())
    criterion("6", ok, f"{detail}; {elapsed:.0f} s")
    assert ok, detail


def table1(path):
    return {row["algorithm"]: row for row in read_rows(path)}


@pytest.mark.slow
def test_criterion_7_selection_benefit(criterion, tmp_path, breast_cancer_csv):
    details, ok = [], True
    sources = {
        "synth classification": ["--synth", "classification"],
        "breast cancer": ["--csv", str(breast_cancer_csv), "--label", "label"],
    }
    tables = {}
    for name, flags in sources.items():
        out = tmp_path / name.replace(" ", "_")
        run(resolve_config(["select-evaluate", *flags, "--seeds", "5", "--n-repeat", "100", "--subsample", "50",
                            "--no-sweep", "--out", str(out)]))
        tables[name] = table = table1(out / "table1.csv")
        base = float(table["All"]["auc_mean"])
        for algo in ("MDA", "LIME", "SHAP"):
            value = float(table[algo]["auc_mean"])
            ok &= value >= base - 0.02
            details.append(f"{name} {algo} AUC {value:.3f} vs All {base:.3f}")
    acc = float(tables["breast cancer"]["All"]["accuracy_mean"])
    ok &= abs(acc - 0.939) <= 0.05
    details.append(f"breast cancer All accuracy {acc:.3f} (target 0.939 +/- 0.05)")
    criterion("7", ok, "; ".join(details))
    assert ok


@pytest.mark.slow
def test_criterion_8_convergence(criterion, tmp_path):
    start = time.perf_counter()
    run(resolve_config(["convergence", "--synth", "classification", "--grid", "1,5,10,50,100",
                        "--experiments", "5", "--subsample", "50", "--seeds", "1", "--table-iters", "default",
                        "--out", str(tmp_path)]))
    elapsed = time.perf_counter() - start
    curves = {}
    for row in read_rows(tmp_path / "instability_curve.csv"):
        curves.setdefault(row["algorithm"], []).append(float(row["index"]))
    rises = {a: float(np.max(np.diff(v))) for a, v in curves.items()}
    monotone = all(r <= 0.05 for r in rises.values())
    positive = any(v[-1] > 0 for v in curves.values())
    worked = InstabilityCurve((1, 10, 100, 1000), np.array([0.9, 0.5, 0.45, 0.44]), "MDA", 5, 40)
    plateau = plateau_point(worked)[0]
    ok = monotone and positive and plateau == 10 and elapsed < 900
    shown = {a: [round(x, 3) for x in v] for a, v in curves.items()}
    criterion("8", ok, f"curves {shown}, largest rise {max(rises.values()):.3f}, worked plateau {plateau}, "
                       f"{elapsed:.0f} s")
    assert ok


def test_criterion_9_meta_labeling(criterion):
    trades = synth_trades(n=500, signal_strength=3.0, seed=0)
    sp = time_split(trades.timestamps, trades.timestamps[400], valid_fraction=0.25)
    ens = ensemble_backtest(trades, sp, n_models=20, seed=0)
    original = sharpe(trades.returns[sp.test])
    returns = np.array([0.03, -0.02, 0.01, -0.04, 0.05, 0.02, -0.01, 0.04, -0.03, 0.02])
    ts = (np.datetime64("2018-01", "M") + np.arange(10)).astype("datetime64[ns]")
    ten = TradeSeries(ts, returns, returns[:, None], ["signal"])
    oracle = veto_backtest(lambda X: (X[:, 0] > 0).astype(float), ten)
    ok = (ens.mean_sharpe > original and oracle.sharpe > sharpe(returns)
          and oracle.cumulative_return > cumulative_return(returns))
    criterion("9", ok, f"ensemble mean Sharpe {ens.mean_sharpe:.3f} vs no veto {original:.3f}; oracle veto Sharpe "
                       f"{oracle.sharpe:.3f} vs {sharpe(returns):.3f}, cumulative {oracle.cumulative_return:.4f} "
                       f"vs {cumulative_return(returns):.4f}")
    assert ok


DETERMINISM_RUNS = {
    "synth": ["--synth", "regression", "--n-samples", "300"],
    "stability": ["--n-samples", "300", "--n-repeat", "5", "--subsample", "20", "--seeds", "2", "--n-trees", "30"],
    "select-evaluate": ["--n-samples", "300", "--n-repeat", "3", "--subsample", "15", "--seeds", "1",
                        "--n-trees", "20"],
    "convergence": ["--n-samples", "300", "--grid", "1,3,6", "--experiments", "3", "--subsample", "15",
                    "--seeds", "1", "--n-trees", "20", "--table-iters", "default,3"],
    "backtest": ["--n-trades", "150", "--n-models", "5", "--n-repeat", "2", "--subsample", "10", "--seeds", "1",
                 "--n-trees", "20"],
}


def snapshot(out):
    files = {}
    for path in sorted(Path(out).iterdir()):
        if path.name == "manifest.json":
            doc = json.loads(path.read_text())
            doc.pop("runtime")
            files[path.name] = json.dumps(doc, sort_keys=True).encode()
        elif path.suffix in (".csv", ".json"):
            files[path.name] = path.read_bytes()
    return files


@pytest.mark.slow
def test_criterion_10_determinism(criterion, tmp_path):
    mismatched = []
    for command, flags in DETERMINISM_RUNS.items():
        snaps = []
        for workers in (1, 1, 8, 8):
            out = tmp_path / f"{command}_{workers}_{len(snaps)}"
            assert main([command, *flags, "--workers", str(workers), "--out", str(out)]) == 0
            snaps.append(snapshot(out))
        if any(s != snaps[0] for s in snaps[1:]):
            mismatched.append(command)
    ok = not mismatched
    criterion("10", ok, f"5 commands x 2 runs x workers (1, 8): byte-identical CSV/JSON "
                        f"{'for all' if ok else 'except ' + ', '.join(mismatched)}")
    assert ok


def test_criterion_2_normalization_invariant(criterion):
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, m = rng.integers(1, 30), rng.integers(1, 50)
        scores = np.round(rng.standard_normal((n, m)), int(rng.integers(0, 3)))
        stability_report(ImportanceMatrix(scores, tuple(f"f{j}" for j in range(m)), Algorithm.MDA, 0))
    n_reports, n_ranks, bad = check_recorded_reports()
    ok = bad == 0 and n_reports >= 200
    criterion("2", ok, f"{n_reports} stability reports and {n_ranks} rank matrices checked so far, {bad} violations")
    assert ok
