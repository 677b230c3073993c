"""Command-line entry point: ``recourse-risk {run,sweep,verify} --config PATH``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .plotting import risk_table_figure, sweep_figure, verify_figure
from .recourse import InfeasibleRecourseError

METRICS = ("r_p_mean", "r_p_std", "r_p_stderr", "r_q_mean", "r_q_std", "r_q_stderr", "bold_r_p", "bold_r_q")


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_archive(archive: dict, path) -> None:
    text = json.dumps(archive, sort_keys=True, indent=1, default=_jsonable)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _write_rows(path, rows: list, columns: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in columns})


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True, default=_jsonable)
    return "" if v is None else v


def wide_table(table: list, methods: list) -> tuple:
    """Rows keyed by (dataset, classifier, response); per-method risk columns."""
    keyed = {}
    for row in table:
        key = (row["dataset"], row["classifier"], row["response"])
        out = keyed.setdefault(key, {"dataset": key[0], "classifier": key[1], "response": key[2], "n_replicates": row["n_replicates"]})
        for m in METRICS:
            out[f"{row['method']}:{m}"] = row[m]
    columns = ["dataset", "classifier", "response", "n_replicates"] + [f"{m}:{k}" for m in methods for k in METRICS]
    return list(keyed.values()), columns


def _load_config(args) -> ex.ExperimentConfig:
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ex.ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ex.ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and isinstance(doc.get("dataset"), dict) and "path" in doc["dataset"]:
        p = Path(doc["dataset"]["path"])
        if not p.is_absolute():
            doc["dataset"]["path"] = str(Path(args.config).parent / p)
    if args.seed is not None and isinstance(doc, dict):
        doc["seed"] = args.seed
    if getattr(args, "parameter", None) is not None and isinstance(doc, dict):
        grid = args.grid if args.grid is not None else (doc.get("sweep") or {}).get("grid")
        if grid is None:
            raise ex.ConfigError("--parameter needs --grid or a sweep.grid in the config")
        doc["sweep"] = {"parameter": args.parameter, "grid": grid}
    return ex.parse_config(doc)


def _out_dir(args, config) -> Path:
    out = Path(args.out or config.output or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    config = _load_config(args)
    archive = ex.run(config, jobs=args.jobs)
    out = _out_dir(args, config)
    rows, columns = wide_table(archive["table"], [m.name for m in config.methods])
    _write_rows(out / "results.csv", rows, columns)
    rep_cols = ["dataset", "classifier", "method", "response", "replicate", "r_p", "r_q", "stderr_p", "stderr_q", "stderr_diff", "n"]
    _write_rows(out / "replicates.csv", archive["rows"], rep_cols)
    write_archive(archive, out / "archive.json")
    risk_table_figure(archive["table"], out / "risks.svg")
    for row in archive["table"]:
        bp = "*" if row["bold_r_p"] else " "
        bq = "*" if row["bold_r_q"] else " "
        print(
            f"{row['dataset']:>10} {row['classifier']:>12} {row['method']:>20} {row['response']:>10}  "
            f"R_P {row['r_p_mean']:.4f}+-{row['r_p_std']:.4f}{bp}  R_Q {row['r_q_mean']:.4f}+-{row['r_q_std']:.4f}{bq}"
        )
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    archive = ex.sweep(config, jobs=args.jobs)
    out = _out_dir(args, config)
    _write_rows(
        out / "sweep.csv",
        archive["series"],
        ["dataset", "classifier", "method", "response", "parameter", "value", "diff_mean", "diff_std"],
    )
    if archive["fits"]:
        _write_rows(out / "sweep_fit.csv", archive["fits"], ["dataset", "classifier", "method", "response", "intercept", "slope", "r_squared"])
    write_archive(archive, out / "archive.json")
    sweep_figure(archive["series"], config.sweep["parameter"], out / "sweep.svg")
    for pt in archive["series"]:
        print(f"{pt['classifier']:>12} {pt['method']:>20} {pt['response']:>10} {pt['parameter']}={pt['value']:<8g} R_Q-R_P {pt['diff_mean']:+.4f}")
    for f in archive["fits"]:
        print(f"fit {f['classifier']} {f['method']} {f['response']}: intercept {f['intercept']:+.4f} slope {f['slope']:+.4f} R2 {f['r_squared']:.4f}")
    return 0


def cmd_verify(args) -> int:
    config = _load_config(args)
    archive = ex.verify(config)
    out = _out_dir(args, config)
    cols = ["suite", "theorem_id", "dataset", "classifier", "method", "response", "lhs", "rhs", "lower", "upper", "condition_holds", "tolerance", "verdict"]
    _write_rows(out / "verify.csv", archive["checks"], cols)
    write_archive(archive, out / "archive.json")
    verify_figure(archive["checks"], out / "verify.svg")
    for c in archive["checks"]:
        print(f"{c['verdict']:>12}  {c['theorem_id']:<22} {c.get('classifier', ''):>16} {c.get('method', ''):>22} {c['response']:>18}")
    for suite, counts in sorted(archive["summary"].items()):
        print(f"{suite}: {counts['holds']} hold, {counts['fails']} fail, {counts['inconclusive']} inconclusive")
    return 1 if any(c["verdict"] == "fails" for c in archive["checks"]) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recourse-risk", description="Measure how algorithmic recourse changes classification risk.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("run", cmd_run, "risk table with and without recourse"),
        ("sweep", cmd_sweep, "risk difference across an acceptance-parameter grid"),
        ("verify", cmd_verify, "theorem suites against Monte Carlo and exact oracles"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./results)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--jobs", type=int, default=1, help="replicates run in parallel up to this many processes")
        if name == "sweep":
            p.add_argument("--parameter", choices=("p", "sigma2"), default=None, help="overrides sweep.parameter")
            p.add_argument("--grid", type=float, nargs="+", default=None, help="overrides sweep.grid")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ex.ConfigError, InfeasibleRecourseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
