"""Command-line batch front-end.

    abc-post run       --config FILE [options]   one chain, sweep or eps rows
    abc-post replicate --config FILE [options]   R chains + aggregate tables
    abc-post adapt     --config FILE [options]   tuned runs + delta trajectories

Common options: --seed N --reps R --threads W --out DIR --resume-from K
--adapt-cov-always BOOL.  Outputs are CSV tables (floats at 17 significant
digits, round-trip exact) plus one metadata JSON per invocation.
"""

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .harness import (AGGREGATE_FIELDS, ROW_FIELDS, ResultRow, aggregate,
                      config_as_dict, load_config, make_truth_fn,
                      run_replicate, run_study, sweep_table)

ROWS_FILE = "rows.csv"
AGGREGATE_FILE = "aggregate.csv"
SWEEP_FILE = "sweep.csv"
DELTA_TRACE_FILE = "delta_trace.csv"
METADATA_FILE = "metadata.json"


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _append_rows(path, rows, write_header):
    mode = "w" if write_header else "a"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(ROW_FIELDS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row.astuple()])


def read_rows_csv(path):
    """Read result rows back; inverse of the rows.csv writer."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ResultRow(
                replicate=int(rec["replicate"]), seed=int(rec["seed"]),
                delta_final=float(rec["delta_final"]),
                epsilon=float(rec["epsilon"]), estimator=rec["estimator"],
                func=rec["func"], e=float(rec["e"]), s=float(rec["s"]),
                tau=float(rec["tau"]), ci_low=float(rec["ci_low"]),
                ci_high=float(rec["ci_high"]),
                support_count=int(rec["support_count"]),
                acceptance_rate=float(rec["acceptance_rate"])))
    return rows


def _write_metadata(outdir, config, wall_time, extra):
    meta = {
        "config": config_as_dict(config),
        "version": __version__,
        "wall_time_s": wall_time,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    meta.update(extra)
    with open(Path(outdir) / METADATA_FILE, "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")


def _write_aggregate(outdir, rows, config):
    truth_fn = make_truth_fn(config)
    tables = aggregate(rows, truth_fn)
    _write_csv(Path(outdir) / AGGREGATE_FILE, AGGREGATE_FIELDS,
               [tuple(t[k] for k in AGGREGATE_FIELDS) for t in tables])
    return tables


def _apply_overrides(config, args):
    if args.seed is not None:
        config.seed = args.seed
    if args.reps is not None:
        config.replications = args.reps
    if args.threads is not None:
        config.workers = args.threads
    if args.adapt_cov_always is not None:
        config.adapt_cov = args.adapt_cov_always
    return config


def cmd_run(config, outdir, args):
    config.replications = 1
    config.validate()
    t0 = time.monotonic()
    out = run_replicate(config, 0, keep_trace=True)
    if config.epsilons == "sweep":
        from .models import get_model
        model = get_model(config.model, **config.model_params)
        table = sweep_table(out.trace, model, config)
        header = ("func", "epsilon", "support_count", "e", "s", "tau",
                  "ci_low", "ci_high")
        _write_csv(Path(outdir) / SWEEP_FILE, header,
                   [tuple(rec[k] for k in header) for rec in table])
    else:
        _append_rows(Path(outdir) / ROWS_FILE, out.rows, write_header=True)
    _write_metadata(outdir, config, time.monotonic() - t0, {
        "command": "run",
        "delta_final": out.delta_final,
        "acceptance_rate": out.acceptance_rate,
        "n_flagged_rows": sum(1 for r in out.rows if not math.isfinite(r.e)),
    })
    return 0


def cmd_replicate(config, outdir, args, command="replicate"):
    if config.epsilons == "sweep":
        raise ValueError(f"{command} needs an explicit eps list "
                         "(sweep grids differ across replicates)")
    config.validate()
    resume_from = args.resume_from or 0
    rows_path = Path(outdir) / ROWS_FILE
    if resume_from > 0 and not rows_path.exists():
        raise ValueError(f"--resume-from {resume_from} but {rows_path} "
                         "does not exist")

    delta_rows = []
    first_flush = resume_from == 0

    def flush(out):
        nonlocal first_flush
        _append_rows(rows_path, out.rows, write_header=first_flush)
        first_flush = False
        if command == "adapt" and out.delta_trace is not None:
            for it, d in enumerate(out.delta_trace):
                delta_rows.append((out.index, it, float(d)))

    result = run_study(config, resume_from=resume_from, progress=flush)

    all_rows = read_rows_csv(rows_path)
    tables = _write_aggregate(outdir, all_rows, config)
    if command == "adapt":
        _write_csv(Path(outdir) / DELTA_TRACE_FILE,
                   ("replicate", "iteration", "delta"), delta_rows)
    n_excluded = sum(1 for r in all_rows if not math.isfinite(r.e))
    _write_metadata(outdir, config, result.wall_time, {
        "command": command,
        "n_replicates_run": len(result.outputs),
        "resume_from": resume_from,
        "n_flagged_rows": n_excluded,
        "excluded_by_cell": {
            f"{t['func']}@{t['epsilon']:g}/{t['estimator']}": t["n_excluded"]
            for t in tables if t["n_excluded"]
        },
    })
    return 0


def cmd_adapt(config, outdir, args):
    config.mode = "adaptive"
    return cmd_replicate(config, outdir, args, command="adapt")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="abc-post",
        description="Tolerance-inflated likelihood-free MCMC with "
                    "post-corrected estimates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("run", "single chain: tolerance sweep or eps-list estimates"),
            ("replicate", "replicated study with aggregate tables"),
            ("adapt", "tolerance-adaptive study with delta trajectories")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, help="override base seed")
        p.add_argument("--reps", type=int, help="override replication count")
        p.add_argument("--threads", type=int,
                       help="worker pool width (processes)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--resume-from", type=int, default=0,
                       help="first replicate index to (re)run")
        p.add_argument("--adapt-cov-always", type=_parse_bool, default=None,
                       metavar="BOOL",
                       help="keep adapting the proposal covariance during "
                            "estimation (default true)")
    return parser


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            return cmd_run(config, outdir, args)
        if args.command == "replicate":
            return cmd_replicate(config, outdir, args)
        return cmd_adapt(config, outdir, args)
    except (ValueError, OSError) as exc:
        print(f"abc-post: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
