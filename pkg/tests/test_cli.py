import csv
import json

import numpy as np
import pytest

from featstab.cli import RunConfig, main, resolve_config, run
from featstab.errors import ConfigError
from featstab.stability import DEFAULT_GRID, PLATEAU_THRESHOLD

FAST = ["--n-trees", "10", "--n-samples", "200", "--seeds", "1", "--n-repeat", "3", "--subsample", "10"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_writes_dataset_and_provenance(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert main(["synth", "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
    data = (tmp_path / "a" / "dataset.csv").read_bytes()
    assert data == (tmp_path / "b" / "dataset.csv").read_bytes()
    lines = data.decode().splitlines()
    assert len(lines) == 1001 and len(lines[0].split(",")) == 41
    prov = read_rows(tmp_path / "a" / "provenance.csv")
    assert [r["provenance"] for r in prov].count("N") == 20 and len(prov) == 40


def test_synth_trades(tmp_path):
    assert main(["synth", "--synth", "trades", "--n-trades", "40", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "trades.csv").read_text().splitlines()) == 41


def test_stability_single_algorithm(tmp_path):
    assert main(["stability", "--algos", "SHAP", *FAST, "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "instability_by_k_summary.csv")
    assert {r["algorithm"] for r in rows} == {"SHAP"} and len(rows) == 40
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "stability"
    assert {f["name"] for f in manifest["files"]} >= {"stability.json", "scores_SHAP_seed0.csv"}


def test_select_evaluate_breast_cancer_table(tmp_path, breast_cancer_csv):
    code = main(["select-evaluate", "--csv", str(breast_cancer_csv), "--label", "label", *FAST,
                 "--out", str(tmp_path)])
    assert code == 0
    table = read_rows(tmp_path / "table1.csv")
    assert [r["algorithm"] for r in table] == ["MDA", "LIME", "SHAP", "All"]
    assert {"f1_mean", "auc_mean", "accuracy_mean"} <= set(table[0])
    sweep = read_rows(tmp_path / "sweep_k.csv")
    for algo in ("MDA", "LIME", "SHAP"):
        assert sum(r["algorithm"] == algo for r in sweep) == 30


def test_select_evaluate_regression_columns(tmp_path):
    code = main(["select-evaluate", "--synth", "regression", "--algos", "MDA", "--no-sweep", *FAST,
                 "--out", str(tmp_path)])
    assert code == 0
    header = (tmp_path / "table1.csv").read_text().splitlines()[0].split(",")
    assert header == ["algorithm", "n_features", "mae_mean", "mae_sd", "mse_mean", "mse_sd", "r2_mean", "r2_sd"]


def test_convergence_outputs(tmp_path):
    code = main(["convergence", "--algos", "LIME", "--grid", "1,2,4", "--experiments", "3",
                 "--table-iters", "default,2", *FAST, "--out", str(tmp_path)])
    assert code == 0
    curve = read_rows(tmp_path / "instability_curve.csv")
    assert [int(r["n_repeat"]) for r in curve] == [1, 2, 4]
    plateau = json.loads((tmp_path / "plateau.json").read_text())
    assert plateau["LIME"]["threshold"] == PLATEAU_THRESHOLD
    assert [int(r["n_repeat"]) for r in read_rows(tmp_path / "table2.csv")] == [1, 2]


def test_convergence_defaults():
    cfg = RunConfig()
    assert cfg.grid == list(DEFAULT_GRID) and cfg.plateau == 0.01


def test_backtest_outputs(tmp_path):
    code = main(["backtest", "--n-trades", "120", "--n-models", "4", "--algos", "LIME", "--backtest-algo", "LIME",
                 *FAST, "--out", str(tmp_path)])
    assert code == 0
    table4 = read_rows(tmp_path / "table4.csv")
    assert [r["scenario"] for r in table4] == ["original", "without_selection", "with_selection"]
    for name in ("without_selection", "with_selection"):
        counts = [int(r["count"]) for r in read_rows(tmp_path / f"sharpe_hist_{name}.csv")]
        missing = int([r for r in table4 if r["scenario"] == name][0]["sharpe_missing"])
        assert sum(counts) + missing == 4
    splits = {r["split"] for r in read_rows(tmp_path / "table3.csv")}
    assert splits == {"valid", "test"}


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"n_repeat": 7, "seeds": 2}))
    cfg = resolve_config(["stability", "--config", str(path), "--seeds", "3"])
    assert (cfg.n_repeat, cfg.seeds) == (7, 3)
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        resolve_config(["stability", "--config", str(path)])


def test_error_exit_codes(tmp_path, capsys):
    assert main(["stability", "--algos", "XYZ"]) == 2
    assert main(["stability", "--csv", str(tmp_path / "nope.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\n1,5\n2,0\n")
    assert main(["stability", "--csv", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert "featstab: error" in capsys.readouterr().err


def test_plots_are_written(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["stability", "--algos", "MDA", *FAST, "--plot", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "instability_by_k.svg").read_text().startswith("<?xml")
