"""``bench`` command line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import DPStoreError
from ..queries import AttributeQuery, PointQuery, RangeQuery
from .data import ingest_csv
from .experiment import SEED_ENV, load_config, run_experiment
from .workload import KINDS, gen_workload


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_experiment(cfg)
    if args.csv_out:
        with open(args.csv_out, "w") as fh:
            fh.write(report.to_csv())
    text = report.to_csv() if args.format == "csv" else report.to_json() + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.timing:
        print(f"runtime: {report.runtime:.3f}s", file=sys.stderr)
    return 0


def _cmd_ingest(args) -> int:
    attr_cols = [c for c in (args.attr_cols or "").split(",") if c]
    db = ingest_csv(args.csv, args.key_col, args.domain, args.binning, attr_cols, args.payload_bytes)
    summary = {"n": db.n, "domain": db.domain, "columns": db.columns}
    if args.key_col:
        summary["histogram"] = db.histogram().tolist()
    print(json.dumps(summary))
    return 0


def _format_query(q) -> str:
    if isinstance(q, RangeQuery):
        return f"range {q.lo} {q.hi}"
    if isinstance(q, PointQuery):
        return f"point {q.point}"
    assert isinstance(q, AttributeQuery)
    return f"attribute {q.column} {q.bit}"


def _cmd_workload(args) -> int:
    for q in gen_workload(args.kind, args.domain, args.selectivity, args.k):
        print(_format_query(q))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="DP outsourced-storage efficiency experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a key=value config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help=f"override the config seed (default from ${SEED_ENV})")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--csv-out", help="also write the per-selectivity CSV here")
    run.add_argument("--timing", action="store_true", help="print wall-clock runtime to stderr")
    run.set_defaults(func=_cmd_run)

    ing = sub.add_parser("ingest", help="load a CSV and print its discretized histogram")
    ing.add_argument("--csv", required=True)
    ing.add_argument("--key-col")
    ing.add_argument("--domain", type=int, required=True)
    ing.add_argument("--binning", choices=("identity", "equal-width", "quantile"), default="identity")
    ing.add_argument("--attr-cols", help="comma-separated 0/1 attribute columns")
    ing.add_argument("--payload-bytes", type=int, default=64)
    ing.set_defaults(func=_cmd_ingest)

    wl = sub.add_parser("workload", help="print a query workload, one query per line")
    wl.add_argument("--kind", choices=KINDS, required=True)
    wl.add_argument("--selectivity", type=float)
    wl.add_argument("--domain", type=int, default=1024)
    wl.add_argument("--k", type=int)
    wl.set_defaults(func=_cmd_workload)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DPStoreError, OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
