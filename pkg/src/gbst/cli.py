"""``gbst`` command line: train, predict, evaluate.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .booster import BoosterModel, BoosterParams, fit
from .dataio import DataError, PreprocessPlan, apply_plan, bind_labels, build_plan, load_table
from .metrics import evaluate
from .survival import ObservationGrid, total_loss

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("gbst")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class AtomicOutputs:
    """Stage files next to their targets and move them into place together."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def write(self, path, text: str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self._pending.append((tmp, path))

    def commit(self) -> None:
        for tmp, path in self._pending:
            os.replace(tmp, path)
        self._pending.clear()

    def discard(self) -> None:
        for tmp, _ in self._pending:
            tmp.unlink(missing_ok=True)
        self._pending.clear()


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def _resolve(cfg: dict, p):
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() or "_base" not in cfg else Path(cfg["_base"]) / p


def grid_from_config(cfg: dict) -> ObservationGrid:
    g = cfg.get("grid", {})
    try:
        if "boundaries" in g:
            return ObservationGrid(tuple(g["boundaries"]))
        return ObservationGrid.regular(int(g.get("periods", 12)), float(g.get("step", 1.0)))
    except ValueError as exc:
        raise UsageError(f"bad grid: {exc}") from exc


_PARAM_FLAGS = {f.name: "--" + f.name.replace("_", "-") for f in fields(BoosterParams)
                if f.name != "seed"}


def booster_params(cfg: dict, args) -> BoosterParams:
    values = {k: v for k, v in cfg.get("booster", {}).items() if k in _PARAM_FLAGS}
    if "seed" in cfg:
        values["seed"] = cfg["seed"]
    for name in _PARAM_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    try:
        return BoosterParams(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad booster parameters: {exc}") from exc


def thread_count(cfg: dict, args) -> int:
    if args.threads is not None:
        n = args.threads
    elif "threads" in cfg:
        n = cfg["threads"]
    else:
        n = os.environ.get("GBST_THREADS", 1)
    try:
        n = int(n)
    except ValueError as exc:
        raise UsageError(f"bad thread count {n!r}") from exc
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data_cfg = cfg.get("data", {})
    train_path = _resolve(cfg, args.data) if args.data else _resolve(cfg, data_cfg.get("train"))
    if train_path is None:
        raise UsageError("no training data given (--data or [data].train)")
    out_dir = Path(args.out) if args.out else _resolve(cfg, cfg.get("out", "gbst_out"))
    grid = grid_from_config(cfg)
    params = booster_params(cfg, args)
    n_threads = thread_count(cfg, args)
    patience = int(cfg.get("booster", {}).get("patience", 0))

    table = load_table(train_path, cfg.get("schema"))
    plan = build_plan(table, float(data_cfg.get("missing_rate_threshold", 0.8)),
                      float(data_cfg.get("time_unit", 1.0)))
    train = bind_labels(table, grid, plan)
    valid = None
    if data_cfg.get("valid"):
        valid = bind_labels(load_table(_resolve(cfg, data_cfg["valid"]), plan.schema), grid, plan)

    valid_trace = []
    state = {"best": np.inf, "best_m": 0}

    def on_iteration(m, model):
        if valid is None:
            return False
        loss = total_loss(valid, model.predict_margins(valid.features))
        valid_trace.append(loss)
        if loss < state["best"]:
            state["best"], state["best_m"] = loss, m
        return patience > 0 and m - state["best_m"] >= patience

    log.info("training %d trees on %d records x %d features", params.num_trees,
             train.n_records, train.n_features)
    model = fit(train, params, n_threads=n_threads, callback=on_iteration)
    if valid is not None and patience > 0 and state["best_m"] < len(model.trees):
        keep = state["best_m"]
        model.trees = model.trees[:keep]
        model.loss_trace = model.loss_trace[:keep]
        valid_trace = valid_trace[:keep]

    trace = [model.initial_loss] + model.loss_trace
    header = ["iteration", "training_loss"]
    rows = [[m, repr(v)] for m, v in enumerate(trace)]
    if valid is not None:
        header.append("validation_loss")
        v0 = total_loss(valid, np.tile(model.base_margins, (valid.n_records, 1)))
        for row, v in zip(rows, [v0] + valid_trace):
            row.append(repr(v))

    out = AtomicOutputs()
    try:
        out.write(out_dir / "model.json", model.to_json())
        out.write(out_dir / "plan.json", plan.to_json())
        out.write(out_dir / "loss_trace.csv", _csv_text(header, rows))
        out.commit()
    finally:
        out.discard()
    print(f"wrote {out_dir / 'model.json'} ({len(model.trees)} trees)")
    return EXIT_OK


def _load_model_and_plan(args, cfg):
    out_dir = _resolve(cfg, cfg.get("out")) if cfg.get("out") else None
    model_path = Path(args.model) if args.model else (out_dir / "model.json" if out_dir else None)
    plan_path = Path(args.plan) if args.plan else (out_dir / "plan.json" if out_dir else None)
    if model_path is None or plan_path is None:
        raise UsageError("--model and --plan are required")
    try:
        model = BoosterModel.load(model_path)
        with open(plan_path, encoding="utf-8") as fh:
            plan = PreprocessPlan.from_json(fh.read())
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt model or plan file: {exc}") from exc
    if plan.feature_names != model.feature_names:
        raise DataError("plan and model feature lists disagree")
    return model, plan


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    model, plan = _load_model_and_plan(args, cfg)
    if not args.data or not args.out:
        raise UsageError("--data and --out are required")
    table = load_table(args.data, plan.schema, require_labels=False)
    X, _ = apply_plan(plan, table)
    h = model.predict_hazards(X)
    S = np.cumprod(1.0 - h, axis=1)
    J = model.n_periods
    header = (["record_id"] + [f"h_{j}" for j in range(1, J + 1)]
              + [f"S_{j}" for j in range(1, J + 1)])
    rows = ([i] + [repr(float(v)) for v in h[i]] + [repr(float(v)) for v in S[i]]
            for i in range(X.shape[0]))
    out = AtomicOutputs()
    try:
        out.write(args.out, _csv_text(header, rows))
        out.commit()
    finally:
        out.discard()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    model, plan = _load_model_and_plan(args, cfg)
    data = args.data or _resolve(cfg, cfg.get("data", {}).get("test"))
    if not data or not args.out:
        raise UsageError("--data and --out are required")
    metric_cfg = cfg.get("metrics", {})
    periods = metric_cfg.get("decile_periods")
    if args.periods:
        periods = [int(p) for p in args.periods.split(",")]
    if periods is not None and not all(1 <= int(p) <= model.n_periods for p in periods):
        raise UsageError("decile periods out of range")
    reduction = args.score or metric_cfg.get("score", "expected")

    dataset = bind_labels(load_table(data, plan.schema), model.grid, plan)
    try:
        report = evaluate(model.predict_hazards(dataset.features), dataset, reduction, periods)
    except ValueError as exc:
        if "reduction" in str(exc) or "horizon" in str(exc):
            raise UsageError(str(exc)) from exc
        raise

    out_dir = Path(args.out)
    out = AtomicOutputs()
    try:
        out.write(out_dir / "report.json", json.dumps(report.to_dict(), indent=1))
        out.write(out_dir / "period_metrics.csv", _csv_text(
            ["period", "at_risk", "cohort", "events", "auc", "ks"],
            [[p["period"], p["at_risk"], p["cohort"], p["events"], _fmt(p["auc"]), _fmt(p["ks"])]
             for p in report.periods]))
        for j, rates in report.deciles.items():
            out.write(out_dir / f"deciles_period_{j:02d}.csv", _csv_text(
                ["group", "default_rate"], [[g, _fmt(r)] for g, r in enumerate(rates, start=1)]))
        out.commit()
    finally:
        out.discard()
    print(f"c_index {report.c_index:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", help="TOML run configuration")
    common.add_argument("--model", help="model JSON")
    common.add_argument("--plan", help="preprocessing plan JSON")
    common.add_argument("--data", help="input CSV")
    common.add_argument("--out", help="output directory (train/evaluate) or file (predict)")
    common.add_argument("--threads", type=int, help="worker threads (env GBST_THREADS)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gbst", description="Gradient-boosted survival trees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    train = sub.add_parser("train", parents=[common], help="fit a model")
    types = {f.name: f.type for f in fields(BoosterParams)}
    for name, flag in _PARAM_FLAGS.items():
        kind = {"int": int, "float": float}.get(types[name], str)
        train.add_argument(flag, dest=name, type=kind)
    train.set_defaults(func=cmd_train)
    predict = sub.add_parser("predict", parents=[common], help="per-period hazards and survival")
    predict.set_defaults(func=cmd_predict)
    ev = sub.add_parser("evaluate", parents=[common], help="C-index, AUC/KS, decile analysis")
    ev.add_argument("--periods", help="comma-separated periods for the decile tables")
    ev.add_argument("--score", help="C-index score reduction: expected | horizon:<j>")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gbst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as exc:
        print(f"gbst: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"gbst: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
