"""Command-line driver: ``featstab {synth,stability,select-evaluate,convergence,backtest}``.

Settings come from defaults, then an optional JSON ``--config`` file, then
flags; later sources win. Every command writes CSV/JSON artifacts plus a
``manifest.json`` into ``--out``.
"""

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stability as stab
from .data import Task, load_csv, synth_classification, synth_regression, time_split
from .errors import ConfigError, FeatstabError
from .explain import DEFAULT_N_REPEAT, Algorithm, LimeConfig, ShapConfig
from .forest import ForestConfig, fit
from .metalabel import cumulative_curve, ensemble_backtest, load_trades, sharpe, synth_trades, write_trades
from .pipeline import prepare
from .reports import Bundle
from .select_eval import (
    eval_forest_config,
    evaluate_selection,
    score_model,
    select_features,
    sweep_k,
)

COMMANDS = ("synth", "stability", "select-evaluate", "convergence", "backtest")


@dataclass
class RunConfig:
    command: str = "stability"
    # data source
    synth: str | None = "classification"
    n_samples: int = 1000
    n_informative: int = 10
    n_redundant: int = 10
    n_noise: int = 20
    noise_sd: float = 10.0
    class_sep: float = 0.3
    csv: str | None = None
    label: str = "label"
    task: str = "classification"
    trades: str | None = None
    n_trades: int = 500
    n_trade_features: int = 20
    signal: float = 3.0
    boundary: str | None = None
    valid_fraction: float = 0.25
    # explainers
    algos: list = field(default_factory=lambda: ["MDA", "LIME", "SHAP"])
    n_repeat: int = 100
    subsample: int | None = None
    lime_perturbations: int = 100
    lime_kernel_width: float | None = None
    ridge_lambda: float = 1.0
    background: int = 20
    # convergence
    grid: list = field(default_factory=lambda: list(stab.DEFAULT_GRID))
    experiments: int = 10
    k: int | None = None
    plateau: float = stab.PLATEAU_THRESHOLD
    table_iters: list = field(default_factory=lambda: ["default", 100, 1000])
    # forest
    n_trees: int = 100
    max_features: str | None = None
    min_samples_leaf: int = 1
    max_depth: int | None = None
    # selection / backtest
    sweep: bool = True
    n_models: int = 100
    backtest_algo: str = "LIME"
    annualization: float = 1.0
    bins: int = 20
    # run
    seed: int = 0
    seeds: int = 5
    out: str = "featstab-out"
    plot: bool = False
    workers: int = 1

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        try:
            self.algos = [Algorithm(a.upper()).value for a in self.algos]
            self.backtest_algo = Algorithm(self.backtest_algo.upper()).value
            Task(self.task)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for attr in ("csv", "trades"):
            path = getattr(self, attr)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"--{attr} path does not exist: {path}")
        if self.synth not in (None, "classification", "regression", "trades"):
            raise ConfigError(f"unknown synthetic dataset kind {self.synth!r}")
        if not self.grid or any(b <= a for a, b in zip(self.grid, self.grid[1:])) or min(self.grid) < 1:
            raise ConfigError("--grid must be strictly increasing positive integers")
        if self.experiments < 2:
            raise ConfigError("--experiments must be >= 2")
        if self.n_repeat < 1:
            raise ConfigError("--n-repeat must be >= 1")
        return self

    def seed_list(self):
        return [self.seed + i for i in range(self.seeds)]

    def forest(self):
        return ForestConfig(self.n_trees, self.max_features, self.min_samples_leaf, self.max_depth)

    def lime(self):
        return LimeConfig(self.lime_perturbations, self.lime_kernel_width, self.ridge_lambda)

    def shap(self):
        return ShapConfig(self.background)

    def echo(self):
        # everything needed to rerun; worker count and output location do not change results
        doc = dataclasses.asdict(self)
        doc.pop("workers")
        doc.pop("out")
        return doc


def _list(text, cast=str):
    return [cast(item.strip()) for item in text.split(",") if item.strip()]


def _iter_item(text):
    return text if text == "default" else int(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    add = common.add_argument
    add("--config", help="JSON file of settings (keys as in RunConfig)")
    add("--seed", type=int, help="master seed")
    add("--seeds", type=int, help="number of seeds (master, master+1, ...)")
    add("--algos", type=lambda s: _list(s), help="comma list from MDA,LIME,SHAP")
    add("--n-repeat", type=int, dest="n_repeat")
    add("--grid", type=lambda s: _list(s, int), help="comma list of n_repeat values")
    add("--experiments", type=int, help="experiments per grid value (convergence)")
    add("--k", type=int, help="top-k used by the convergence index (default: all)")
    add("--table-iters", dest="table_iters", type=lambda s: _list(s, _iter_item))
    add("--out", help="output directory")
    add("--plot", action="store_true", default=None, help="also write SVG plots")
    add("--workers", type=int)
    add("--subsample", type=int, help="validation rows explained by LIME/SHAP")
    add("--synth", choices=["classification", "regression", "trades"])
    add("--n-samples", type=int, dest="n_samples")
    add("--noise-sd", type=float, dest="noise_sd")
    add("--class-sep", type=float, dest="class_sep")
    add("--csv", help="dataset CSV with a header row")
    add("--label", help="label column of --csv")
    add("--task", choices=[t.value for t in Task])
    add("--trades", help="trades CSV (timestamp, return, features...)")
    add("--n-trades", type=int, dest="n_trades")
    add("--signal", type=float)
    add("--boundary", help="first test timestamp (ISO-8601) for backtests")
    add("--n-trees", type=int, dest="n_trees")
    add("--n-models", type=int, dest="n_models")
    add("--backtest-algo", dest="backtest_algo")
    add("--annualization", type=float)
    add("--no-sweep", dest="sweep", action="store_false", default=None)

    parser = argparse.ArgumentParser(prog="featstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(argv):
    args = vars(build_parser().parse_args(argv))
    values = {}
    if args.get("config"):
        try:
            with open(args["config"], encoding="utf-8") as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args['config']}: {exc}") from None
    for key, value in args.items():
        if key != "config" and value is not None:
            values[key] = value
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if values.get("csv"):
        values.setdefault("synth", None)
    return RunConfig(**values).validate()


def load_dataset(cfg, seed):
    if cfg.csv:
        return load_csv(cfg.csv, cfg.label, cfg.task)
    if cfg.synth == "regression":
        return synth_regression(cfg.n_samples, cfg.n_informative, cfg.n_redundant, cfg.n_noise,
                                cfg.noise_sd, seed)[0]
    if cfg.synth == "classification":
        return synth_classification(cfg.n_samples, cfg.n_informative, cfg.n_redundant, cfg.n_noise,
                                    seed, cfg.class_sep)[0]
    raise ConfigError("this command needs --csv or --synth classification|regression")


def _prepare(cfg, dataset, seed, splits=None):
    return prepare(dataset, seed, cfg.forest(), splits, cfg.subsample, cfg.lime(), cfg.shap(), cfg.workers)


def _set_threads(workers):
    import numba

    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))


def cmd_synth(cfg, bundle):
    if cfg.synth == "trades":
        trades = synth_trades(cfg.n_trades, cfg.n_trade_features, cfg.signal, cfg.seed)
        write_trades(trades, bundle.path("trades.csv"))
        return
    maker = {"classification": synth_classification, "regression": synth_regression}.get(cfg.synth)
    if maker is None:
        raise ConfigError("synth needs --synth classification|regression|trades")
    if maker is synth_regression:
        dataset, prov = maker(cfg.n_samples, cfg.n_informative, cfg.n_redundant, cfg.n_noise, cfg.noise_sd, cfg.seed)
    else:
        dataset, prov = maker(cfg.n_samples, cfg.n_informative, cfg.n_redundant, cfg.n_noise, cfg.seed, cfg.class_sep)
    dataset.to_csv(bundle.path("dataset.csv"), cfg.label)
    bundle.csv("provenance.csv", ["feature", "provenance", "kind"],
               [(name, tag.value[0], tag.value) for name, tag in zip(dataset.feature_names, prov.tags)])


def cmd_stability(cfg, bundle):
    by_k, hist, reports = [], [], []
    curves = {}
    for seed in cfg.seed_list():
        exp = _prepare(cfg, load_dataset(cfg, seed), seed)
        for algo in cfg.algos:
            S = exp.explain(algo, cfg.n_repeat)
            S.to_csv(bundle.path(f"scores_{algo}_seed{seed}.csv"))
            rep = stab.stability_report(S)
            reports.append({"seed": seed, **rep.to_dict()})
            curves.setdefault(algo, []).append(rep.index_by_k)
            by_k += [(seed, algo, k + 1, v) for k, v in enumerate(rep.index_by_k)]
            hist += [(seed, algo, name, c) for name, c in zip(rep.feature_names, rep.top_rank_counts) if c]
    bundle.csv("instability_by_k.csv", ["seed", "algorithm", "k", "index"], by_k)
    summary = []
    for algo, rows in curves.items():
        arr = np.array(rows)
        summary += [(algo, k + 1, m, s) for k, (m, s) in enumerate(zip(arr.mean(0), arr.std(0)))]
    bundle.csv("instability_by_k_summary.csv", ["algorithm", "k", "mean", "sd"], summary)
    bundle.csv("top_rank_histogram.csv", ["seed", "algorithm", "feature", "count"], hist)
    bundle.json("stability.json", reports)
    if cfg.plot:
        from .plotting import line_plot

        series = {a: (np.arange(1, len(r[0]) + 1), np.mean(r, axis=0)) for a, r in curves.items()}
        line_plot(bundle.path("instability_by_k.svg"), series, "k", "instability index")


def _metric_rows(label, reports):
    names = reports[0].metric_names
    arr = np.array([[r.values[n] for n in names] for r in reports])
    row = [label, float(np.mean([len(r.features) for r in reports]))]
    for j in range(len(names)):
        row += [arr[:, j].mean(), arr[:, j].std()]
    return names, row


def _table_header(names):
    header = ["algorithm", "n_features"]
    for n in names:
        header += [f"{n}_mean", f"{n}_sd"]
    return header


def cmd_select_evaluate(cfg, bundle):
    per_algo = {a: [] for a in cfg.algos + ["All"]}
    by_seed, sweep_rows, selections = [], [], []
    for seed in cfg.seed_list():
        dataset = load_dataset(cfg, seed)
        exp = _prepare(cfg, dataset, seed)
        retrain = eval_forest_config(cfg.forest(), seed)
        baseline = evaluate_selection(dataset, exp.splits, dataset.feature_names, retrain, "All", cfg.workers)
        per_algo["All"].append(baseline)
        for algo in cfg.algos:
            rep = stab.stability_report(exp.explain(algo, cfg.n_repeat))
            sel = select_features(rep)
            selections.append({"seed": seed, "algorithm": algo, "selected": list(sel.selected),
                               "threshold": sel.threshold, "fallback": sel.fallback})
            per_algo[algo].append(evaluate_selection(dataset, exp.splits, sel.selected, retrain, algo, cfg.workers))
            if cfg.sweep:
                for k, m in enumerate(sweep_k(dataset, exp.splits, rep.importance_order, retrain, algo, cfg.workers), 1):
                    sweep_rows.append((seed, algo, k, *(m.values[n] for n in m.metric_names)))
        for label in cfg.algos + ["All"]:
            r = per_algo[label][-1]
            by_seed.append((seed, label, len(r.features), *(r.values[n] for n in r.metric_names)))
    names = per_algo["All"][0].metric_names
    bundle.csv("table1.csv", _table_header(names),
               [_metric_rows(label, reps)[1] for label, reps in per_algo.items()])
    bundle.csv("metrics_by_seed.csv", ["seed", "algorithm", "n_features", *names], by_seed)
    bundle.json("selection.json", selections)
    if cfg.sweep:
        bundle.csv("sweep_k.csv", ["seed", "algorithm", "k", *names], sweep_rows)
        if cfg.plot:
            from .plotting import line_plot

            metric = names[1]
            series = {}
            for algo in cfg.algos:
                rows = np.array([r[4] for r in sweep_rows if r[1] == algo]).reshape(cfg.seeds, -1)
                series[algo] = (np.arange(1, rows.shape[1] + 1), rows.mean(axis=0))
            line_plot(bundle.path("sweep_k.svg"), series, "k", metric)


def cmd_convergence(cfg, bundle):
    dataset = load_dataset(cfg, cfg.seed)
    exp = _prepare(cfg, dataset, cfg.seed)
    curves, plateaus = [], {}
    for algo in cfg.algos:
        curve = stab.convergence_study(exp, algo, cfg.grid, cfg.experiments, cfg.k, cfg.seed)
        curves.append(curve)
        plateaus[algo] = stab.plateau_point(curve, cfg.plateau) if len(curve.grid) > 1 else (curve.grid[0], False)
    bundle.csv("instability_curve.csv", ["n_repeat", "index", "algorithm"],
               [row for c in curves for row in c.rows()])
    bundle.json("plateau.json", {a: {"n_repeat": p, "converged": ok, "threshold": cfg.plateau}
                                 for a, (p, ok) in plateaus.items()})
    table = []
    for seed in cfg.seed_list():
        d = load_dataset(cfg, seed)
        e = exp if seed == cfg.seed else _prepare(cfg, d, seed)
        retrain = eval_forest_config(cfg.forest(), seed)
        for algo in cfg.algos:
            iters = sorted({DEFAULT_N_REPEAT[Algorithm(algo)] if it == "default" else int(it)
                            for it in cfg.table_iters})
            full = e.explain(algo, max(iters))
            for it in iters:
                sel = select_features(stab.stability_report(full.head(it)))
                m = evaluate_selection(d, e.splits, sel.selected, retrain, algo, cfg.workers)
                table.append((seed, algo, it, len(sel.selected), *(m.values[n] for n in m.metric_names)))
    names = ("f1", "auc", "accuracy") if dataset.task is Task.CLASSIFICATION else ("mae", "mse", "r2")
    bundle.csv("table2.csv", ["seed", "algorithm", "n_repeat", "n_features", *names], table)
    if cfg.plot:
        from .plotting import line_plot

        line_plot(bundle.path("instability_curve.svg"),
                  {c.algorithm: (c.grid, c.index) for c in curves}, "n_repeat", "instability index",
                  xscale="log")


def cmd_backtest(cfg, bundle):
    if cfg.trades:
        trades = load_trades(cfg.trades)
    else:
        trades = synth_trades(cfg.n_trades, cfg.n_trade_features, cfg.signal, cfg.seed)
    boundary = cfg.boundary if cfg.boundary else trades.timestamps[int(0.8 * len(trades))]
    splits = time_split(trades.timestamps, boundary, cfg.valid_fraction)
    dataset = trades.to_dataset()
    table3 = []
    selected = {}
    for seed in cfg.seed_list():
        exp = _prepare(cfg, dataset, seed, splits)
        retrain = eval_forest_config(cfg.forest(), seed)
        train = dataset.subset(splits.train)
        for algo in cfg.algos + ["All"]:
            if algo == "All":
                features = dataset.feature_names
            else:
                features = select_features(stab.stability_report(exp.explain(algo, cfg.n_repeat))).selected
            if seed == cfg.seed:
                selected[algo] = list(features)
            model = fit(train.subset(columns=features), retrain)
            for part, rows in (("valid", splits.valid), ("test", splits.test)):
                sub = dataset.subset(rows, features)
                vals = score_model(model, sub.features, sub.target)
                table3.append((seed, part, algo, len(features), vals["f1"], vals["auc"], vals["accuracy"]))
    bundle.csv("table3.csv", ["seed", "split", "algorithm", "n_features", "f1", "auc", "accuracy"], table3)
    bundle.json("selection.json", selected)

    test = trades.subset(splits.test)
    scenarios = {
        "without_selection": ensemble_backtest(trades, splits, None, cfg.n_models, cfg.seed, cfg.forest(),
                                               cfg.annualization, cfg.bins, cfg.workers),
        "with_selection": ensemble_backtest(trades, splits, selected[cfg.backtest_algo], cfg.n_models,
                                            cfg.seed, cfg.forest(), cfg.annualization, cfg.bins, cfg.workers),
    }
    original_sharpe = sharpe(test.returns, cfg.annualization)
    original_curve = cumulative_curve(test.returns)
    rows = [("original", original_sharpe, 0.0, float(original_curve[-1]), 0)]
    for name, ens in scenarios.items():
        missing = sum(r.sharpe is None for r in ens.reports)
        rows.append((name, ens.mean_sharpe, ens.sd_sharpe, ens.mean_cumulative_return, missing))
        bundle.csv(f"sharpe_hist_{name}.csv", ["bin_left", "bin_right", "count"],
                   zip(ens.histogram_edges[:-1], ens.histogram_edges[1:], ens.histogram_counts))
        bundle.csv(f"sharpe_by_model_{name}.csv", ["model", "seed", "sharpe", "cumulative_return", "taken", "vetoed"],
                   [(i, r.seed, r.sharpe, r.cumulative_return, r.n_taken, r.n_vetoed)
                    for i, r in enumerate(ens.reports)])
        if cfg.plot:
            from .plotting import histogram_plot

            histogram_plot(bundle.path(f"sharpe_hist_{name}.svg"), ens.histogram_counts,
                           ens.histogram_edges, ens.mean_sharpe, name)
    bundle.csv("table4.csv", ["scenario", "sharpe_mean", "sharpe_sd", "cumulative_return_mean", "sharpe_missing"], rows)
    curves = [original_curve] + [ens.mean_curve() for ens in scenarios.values()]
    bundle.csv("cumulative_returns.csv", ["timestamp", "original", *scenarios],
               [(str(np.datetime64(t, "D")), *(c[i] for c in curves)) for i, t in enumerate(test.timestamps)])
    bundle.json("backtest.json", {
        "boundary": str(np.datetime64(boundary, "D")),
        "n_train": len(splits.train), "n_valid": len(splits.valid), "n_test": len(splits.test),
        "selection_algorithm": cfg.backtest_algo,
        "selected_features": selected[cfg.backtest_algo],
        "scenarios": {r[0]: {"sharpe_mean": r[1], "sharpe_sd": r[2], "cumulative_return_mean": r[3]} for r in rows},
    })
    if cfg.plot:
        from .plotting import line_plot

        x = np.arange(1, len(test) + 1)
        line_plot(bundle.path("cumulative_returns.svg"),
                  {name: (x, c) for name, c in zip(["original", *scenarios], curves)}, "trade", "cumulative return")


HANDLERS = {
    "synth": cmd_synth,
    "stability": cmd_stability,
    "select-evaluate": cmd_select_evaluate,
    "convergence": cmd_convergence,
    "backtest": cmd_backtest,
}


def run(cfg):
    """Run one command and return the written manifest."""
    _set_threads(cfg.workers)
    bundle = Bundle(cfg.out, cfg.command, cfg.echo())
    HANDLERS[cfg.command](cfg, bundle)
    return bundle.finish({"workers": cfg.workers})


def main(argv=None):
    try:
        cfg = resolve_config(argv if argv is not None else sys.argv[1:])
        manifest = run(cfg)
    except FeatstabError as exc:
        print(f"featstab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {len(manifest['files'])} files to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
