"""Command-line front end.

    yieldbench <synth|train|tune|evaluate|explain|select|plot>
               --config <path> [--seed N] [--out DIR]

Exit codes: 0 success, 1 usage or configuration problem, 2 data problem.
Every run is reproducible from (config, seed); nothing written depends
on time, host, or path layout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .. import dataio, metrics
from ..explain import (Attribution, force_plot_data, global_importance,
                       kernel_shap, top_fraction)
from ..models import (fit_model, model_fn, model_from_dict, model_to_dict,
                      predict_model, make_fit_predict)
from ..tuning import make_folds, search, write_trial_log
from .config import DataError, ModelSpec, RunConfig, UsageError, load_config
from .report import dumps_stable, read_json, render_rows, write_json, write_report
from .svg import PlotSpec, emit_svg

COMMANDS = ("synth", "train", "tune", "evaluate", "explain", "select", "plot")
_SEED_REQUIRED = ("train", "tune", "explain")

USAGE = ("usage: yieldbench <" + "|".join(COMMANDS) + "> --config <path> "
         "[--seed N] [--out DIR]")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits with code 2
        raise UsageError(message)


def _parse_args(argv) -> argparse.Namespace:
    parser = _Parser(prog="yieldbench", usage=USAGE)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse_args(sys.argv[1:] if argv is None else argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if cfg.seed < 0:
            if args.command in _SEED_REQUIRED:
                raise UsageError(f"{args.command} requires --seed or seed in config")
            cfg.seed = 0
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        _DISPATCH[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# Data plumbing
# ---------------------------------------------------------------------------

def _synth_spec(cfg: RunConfig) -> dataio.SynthSpec:
    s = cfg.synth
    years = s.get("years")
    if years is None and "year_start" in s:
        years = range(int(s["year_start"]), int(s["year_end"]) + 1)
    return dataio.default_synth_spec(
        n_regions=int(s.get("n_regions", 60)),
        years=years,
        weeks=int(s.get("weeks", dataio.DEFAULT_WEEKS)),
        seed=int(s.get("seed", cfg.seed)),
        noise_sigma=float(s.get("noise_sigma", 0.3)))


def _load_table(cfg: RunConfig) -> dataio.FeatureTable:
    if cfg.data_csv is not None:
        path = Path(cfg.data_csv)
        if not path.is_file():
            raise DataError(f"data file not found: {path}")
        weeks = int(cfg.synth.get("weeks", dataio.DEFAULT_WEEKS))
        try:
            return dataio.load_table(path, dataio.default_descriptors(weeks))
        except (dataio.SchemaError, dataio.ParseError,
                dataio.DuplicateKeyError, ValueError) as exc:
            raise DataError(str(exc)) from None
    return dataio.generate_synthetic(_synth_spec(cfg))


def _train_pool(table: dataio.FeatureTable, cfg: RunConfig) -> dataio.FeatureTable:
    first_test = min(cfg.test_years)
    for year in cfg.test_years:
        if not np.any(table.year == year):
            raise DataError(f"test year {year} not present in data")
    rows = np.where(table.year < first_test)[0]
    if rows.shape[0] == 0:
        raise DataError(f"no training rows before test year {first_test}")
    return dataio.take_rows(table, rows)


def _split(table: dataio.FeatureTable, year: int):
    try:
        return dataio.temporal_split(table, year)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _fit(spec: ModelSpec, table: dataio.FeatureTable, seed: int):
    try:
        return fit_model(spec.family, table, spec.options, seed)
    except ValueError as exc:
        raise UsageError(f"model {spec.name!r}: {exc}") from None


def _model_path(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / f"model_{name}.json"


def _write_svg(cfg: RunConfig, name: str, spec: PlotSpec) -> None:
    (Path(cfg.out_dir) / name).write_text(emit_svg(spec), encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(cfg: RunConfig) -> None:
    table = dataio.generate_synthetic(_synth_spec(cfg))
    out = Path(cfg.out_dir) / "synthetic.csv"
    dataio.write_table_csv(table, out)
    print(f"wrote {out} ({table.n} rows, {table.d} features)")


def _cmd_train(cfg: RunConfig) -> None:
    table = _load_table(cfg)
    pool = _train_pool(table, cfg)
    for spec in cfg.models:
        art = _fit(spec, pool, cfg.seed)
        path = _model_path(cfg, spec.name)
        write_json(model_to_dict(art), path)
        print(f"trained {spec.name} ({spec.family}) on {pool.n} rows -> {path}")


def _cmd_tune(cfg: RunConfig) -> None:
    table = _load_table(cfg)
    pool = _train_pool(table, cfg)
    k = int(cfg.tune.get("k", 3))
    budget = int(cfg.tune.get("budget", 50))
    folds = make_folds(pool.n, k, cfg.seed)
    best_configs = {}
    for spec in cfg.models:
        if not spec.search:
            continue
        fit_predict = make_fit_predict(spec.family, pool.descriptors, spec.options)
        result = search(fit_predict, spec.search, pool.X, pool.y, folds,
                        seed=cfg.seed, budget=budget,
                        row_years=pool.year, forbidden_years=cfg.test_years)
        log = Path(cfg.out_dir) / f"trials_{spec.name}.jsonl"
        write_trial_log(result.trials, log)
        best_configs[spec.name] = {"config": result.best.config,
                                   "mean_rmse": result.best.mean_rmse,
                                   "trial": result.best.index}
        print(f"tuned {spec.name}: best mean CV RMSE {result.best.mean_rmse:.4f} "
              f"(trial {result.best.index}, {len(result.trials)} trials) -> {log}")
    if not best_configs:
        raise UsageError("no model in config has a [models.search] table")
    write_json({"schema": 1, "best": best_configs}, Path(cfg.out_dir) / "tuned.json")


_METRIC_KEYS = ("rmse", "mae", "paper_r", "pearson_r")


def _cmd_evaluate(cfg: RunConfig) -> None:
    table = _load_table(cfg)
    _train_pool(table, cfg)  # validates test years and training presence
    rows = []
    plots: dict = {}
    region_rows = []
    pooled: dict[str, list[np.ndarray]] = {}
    for year in sorted(cfg.test_years):
        train, test = _split(table, year)
        for spec in cfg.models:
            art = _fit(spec, train, cfg.seed)
            pred_tr = predict_model(art, train)
            pred_te = predict_model(art, test)
            ms_tr = metrics.evaluate(pred_tr, train.y)
            ms_te = metrics.evaluate(pred_te, test.y)
            for key in _METRIC_KEYS:
                rows.append({"split": str(year), "model": spec.name, "metric": key,
                             "train": getattr(ms_tr, key), "test": getattr(ms_te, key)})
            for region, err in metrics.regional_percentage_error(
                    test.region_id, test.y, pred_te):
                region_rows.append((spec.name, year, region, err))
            pooled.setdefault(spec.name, []).append(
                np.column_stack([pred_te, test.y]))
    for name, chunks in pooled.items():
        both = np.vstack(chunks)
        pred, truth = both[:, 0], both[:, 1]
        bins = metrics.hexbin(pred, truth, hex_size=0.25)
        counts, edges = np.histogram(truth - pred, bins=20)
        plots[name] = {
            "hexbin": {"hex_size": 0.25,
                       "bins": [{"center_x": b.center_x, "center_y": b.center_y,
                                 "count": b.count} for b in bins]},
            "residual_hist": {"edges": edges.tolist(),
                              "counts": counts.tolist()}}
    report = {"command": "evaluate", "seed": cfg.seed,
              "test_years": sorted(cfg.test_years), "rows": rows, "plots": plots}
    path = write_report(report, cfg.out_dir)
    with open(Path(cfg.out_dir) / "per_region_error.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "test_year", "region_id", "pct_error"])
        for name, year, region, err in sorted(region_rows):
            writer.writerow([name, year, region, f"{err:.6f}"])
    print(f"evaluated {len(cfg.models)} models over {sorted(cfg.test_years)} -> {path}")


def _explain_settings(cfg: RunConfig) -> dict:
    e = cfg.explain
    return {"model": e.get("model", cfg.models[0].name),
            "year": int(e.get("year", max(cfg.test_years))),
            "instances": int(e.get("instances", 5)),
            "background": int(e.get("background", 100)),
            "budget": int(e.get("budget", 1000)),
            "regularizer": float(e.get("regularizer", 0.0)),
            "top_k": int(e.get("top_k", 15))}


def _run_explain(cfg: RunConfig) -> tuple[list[Attribution], np.ndarray, list[str], dict]:
    settings = _explain_settings(cfg)
    table = _load_table(cfg)
    spec = cfg.model(settings["model"])
    train, test = _split(table, settings["year"])
    art = _fit(spec, train, cfg.seed)
    f = model_fn(art)

    rng = np.random.default_rng([max(cfg.seed, 0), 11])
    n_bg = min(settings["background"], train.n)
    background = train.X[rng.choice(train.n, size=n_bg, replace=False)]
    n_inst = min(settings["instances"], test.n)
    inst_rows = np.sort(rng.choice(test.n, size=n_inst, replace=False))

    attributions = []
    for i, row in enumerate(inst_rows):
        shap_seed = int(np.random.default_rng([max(cfg.seed, 0), 13, i]).integers(2 ** 31 - 1))
        ref = f"{test.region_id[row]}:{int(test.year[row])}"
        attributions.append(kernel_shap(
            f, test.X[row], background, settings["budget"],
            seed=shap_seed, regularizer=settings["regularizer"], instance_ref=ref))
    values = test.X[inst_rows]
    return attributions, values, test.feature_names, settings


def _cmd_explain(cfg: RunConfig) -> None:
    attributions, values, names, settings = _run_explain(cfg)
    out = Path(cfg.out_dir)
    with open(out / "attributions.jsonl", "w", encoding="utf-8") as fh:
        for a, row in zip(attributions, values):
            record = a.to_dict()
            record["feature_names"] = names
            record["values"] = row.tolist()
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    ranking = global_importance(attributions, values, names)
    write_json({"schema": 1, "model": settings["model"], "year": settings["year"],
                "entries": ranking.to_list()}, out / "ranking.json")
    _render_explain_svgs(cfg, ranking.to_list(), attributions, values, names,
                         settings["top_k"])
    print(f"explained {len(attributions)} instances of {settings['model']} "
          f"in {settings['year']} -> {out / 'ranking.json'}")


def _render_explain_svgs(cfg, entries, attributions, values, names, top_k) -> None:
    bar = PlotSpec("importance_bar", {"entries": entries[:top_k]},
                   title=f"Mean |phi|, top {min(top_k, len(entries))} features")
    _write_svg(cfg, "importance_bar.svg", bar)
    for i, (a, row) in enumerate(zip(attributions, values)):
        data = force_plot_data(a, names, row)
        data["contributions"] = _condense(data["contributions"], limit=11)
        _write_svg(cfg, f"force_{i}.svg",
                   PlotSpec("force", data, title=f"Instance {a.instance_ref}"))


def _condense(contributions: list[dict], limit: int) -> list[dict]:
    if len(contributions) <= limit:
        return contributions
    head = contributions[:limit]
    rest = sum(c["phi"] for c in contributions[limit:])
    head.append({"feature": f"other ({len(contributions) - limit})", "value": 0.0,
                 "phi": rest, "positive": rest > 0})
    return head


def _cmd_select(cfg: RunConfig) -> None:
    s = cfg.select
    fractions = [float(p) for p in s.get("fractions", (1.0, 0.75, 0.5))]
    groups = list(s.get("groups", ("weather",)))
    model_name = s.get("model", cfg.models[0].name)
    spec = cfg.model(model_name)

    ranking_path = Path(cfg.out_dir) / "ranking.json"
    if ranking_path.is_file():
        entries = read_json(ranking_path)["entries"]
        ranked_names = [e["feature"] for e in entries]
    else:
        attributions, values, names, _ = _run_explain(cfg)
        ranked_names = global_importance(attributions, values, names).feature_names

    table = _load_table(cfg)
    subsets: list[tuple[str, list[str]]] = []
    d = len(ranked_names)
    for p in fractions:
        if not 0.0 < p <= 1.0:
            raise UsageError(f"selection fraction {p} outside (0, 1]")
        subsets.append((f"top_{int(p * 100)}", ranked_names[:math.ceil(p * d)]))
    for group in groups:
        names = [f.name for f in table.descriptors if f.group == group]
        if not names:
            raise UsageError(f"no features in group {group!r}")
        subsets.append((group, names))

    rows = []
    for subset_name, names in subsets:
        reduced = dataio.take_features(table, names)
        for year in sorted(cfg.test_years):
            train, test = _split(reduced, year)
            art = _fit(spec, train, cfg.seed)
            ms = metrics.evaluate(predict_model(art, test), test.y)
            rows.append({"split": str(year), "subset": subset_name,
                         "n_features": len(names), "rmse": ms.rmse,
                         "mae": ms.mae, "paper_r": ms.paper_r})
    payload = {"schema": 1, "command": "select", "model": model_name,
               "seed": cfg.seed, "rows": rows}
    write_json(payload, Path(cfg.out_dir) / "selection.json")
    (Path(cfg.out_dir) / "selection.txt").write_text(render_rows(rows),
                                                     encoding="utf-8")
    print(f"retrained {model_name} on {len(subsets)} feature subsets -> "
          f"{Path(cfg.out_dir) / 'selection.json'}")


def _cmd_plot(cfg: RunConfig) -> None:
    out = Path(cfg.out_dir)
    rendered = []
    report_path = out / "report.json"
    if report_path.is_file():
        report = read_json(report_path)
        for name, payload in sorted(report.get("plots", {}).items()):
            _write_svg(cfg, f"hexbin_{name}.svg",
                       PlotSpec("hexbin", payload["hexbin"],
                                title=f"{name}: predicted vs observed"))
            _write_svg(cfg, f"residual_{name}.svg",
                       PlotSpec("residual_hist", payload["residual_hist"],
                                title=f"{name}: test residuals"))
            rendered += [f"hexbin_{name}.svg", f"residual_{name}.svg"]
    ranking_path = out / "ranking.json"
    if ranking_path.is_file():
        entries = read_json(ranking_path)["entries"]
        top_k = _explain_settings(cfg)["top_k"]
        _write_svg(cfg, "importance_bar.svg",
                   PlotSpec("importance_bar", {"entries": entries[:top_k]},
                            title=f"Mean |phi|, top {min(top_k, len(entries))} features"))
        rendered.append("importance_bar.svg")
    attr_path = out / "attributions.jsonl"
    if attr_path.is_file():
        with open(attr_path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        for i, rec in enumerate(records):
            a = Attribution(np.asarray(rec["phi"]), rec["base_value"],
                            rec["instance_ref"], rec["budget_used"], rec["exact"])
            data = force_plot_data(a, rec["feature_names"], np.asarray(rec["values"]))
            data["contributions"] = _condense(data["contributions"], limit=11)
            _write_svg(cfg, f"force_{i}.svg",
                       PlotSpec("force", data, title=f"Instance {a.instance_ref}"))
            rendered.append(f"force_{i}.svg")
    for spec in cfg.models:
        model_path = _model_path(cfg, spec.name)
        if model_path.is_file():
            payload = read_json(model_path)
            history = payload.get("history")
            if history and history.get("train_loss"):
                _write_svg(cfg, f"loss_{spec.name}.svg",
                           PlotSpec("loss_curve", {"train": history["train_loss"],
                                                   "val": history["val_loss"]},
                                    title=f"{spec.name}: training loss"))
                rendered.append(f"loss_{spec.name}.svg")
    if not rendered:
        raise UsageError(f"nothing to plot in {out}; run evaluate/explain/train first")
    print(f"rendered {len(rendered)} plots in {out}")


_DISPATCH = {"synth": _cmd_synth, "train": _cmd_train, "tune": _cmd_tune,
             "evaluate": _cmd_evaluate, "explain": _cmd_explain,
             "select": _cmd_select, "plot": _cmd_plot}


if __name__ == "__main__":
    sys.exit(main())
