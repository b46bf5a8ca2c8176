"""Command line benchmark harness.

    kmeans-bench run --input data.csv --algorithm standard,cover --k 20 --seed 0
    kmeans-bench run --synth blobs:20000,5,50,1.0,7 --algorithm hybrid \
        --k-list 10,20,40 --seeds 0,1,2 --output runs.jsonl
    kmeans-bench report --input runs.jsonl

``run`` emits one JSONL (or CSV) record per (algorithm, seed, k); ``report``
condenses records into per-algorithm ratios against the standard runs.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (
    BenchOptions,
    parse_synth,
    records_to_csv,
    records_to_jsonl,
    report,
    run_sweep,
)
from .core import DatasetFormatError, load_dataset
from .kmeans import ALGORITHMS


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmeans-bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute clustering runs and emit metrics")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV dataset path")
    src.add_argument("--synth", help="synthetic dataset spec: blobs:N,d,k_true,spread,seed")
    p_run.add_argument("--delimiter", default=",")
    p_run.add_argument("--header", action="store_true", help="skip one header line")
    p_run.add_argument(
        "--algorithm",
        default="standard",
        help=f"comma separated subset of {{{','.join(ALGORITHMS)}}}",
    )
    kgrp = p_run.add_mutually_exclusive_group(required=True)
    kgrp.add_argument("--k", type=int)
    kgrp.add_argument("--k-list", type=_int_list)
    sgrp = p_run.add_mutually_exclusive_group()
    sgrp.add_argument("--seed", type=int)
    sgrp.add_argument("--seeds", type=_int_list)
    p_run.add_argument("--scale-factor", type=float, default=1.2)
    p_run.add_argument("--leaf-size", type=int, default=100)
    p_run.add_argument("--switch-iter", type=int, default=7)
    p_run.add_argument("--max-iter", type=int, default=1000)
    p_run.add_argument("--tol", type=float, default=0.0,
                       help="stop when no center moves more than this (0 = label-change rule)")
    p_run.add_argument("--output", help="write records here instead of stdout")
    p_run.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    p_rep = sub.add_parser("report", help="summarize a JSONL record stream")
    p_rep.add_argument("--input", required=True, help="JSONL file from `run`")
    p_rep.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    algorithms = [a.strip() for a in args.algorithm.split(",") if a.strip()]
    for a in algorithms:
        if a not in ALGORITHMS:
            print(f"error: unknown algorithm {a!r}", file=sys.stderr)
            return 2
    ks = args.k_list if args.k_list else [args.k]
    seeds = args.seeds if args.seeds else [args.seed if args.seed is not None else 0]
    try:
        if args.input:
            data = load_dataset(args.input, delimiter=args.delimiter, has_header=args.header)
        else:
            data = parse_synth(args.synth)
    except (DatasetFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    opts = BenchOptions(
        scale_factor=args.scale_factor,
        leaf_size=args.leaf_size,
        switch_iter=args.switch_iter,
        max_iter=args.max_iter,
        tol=args.tol,
    )
    metrics = run_sweep(data, algorithms, ks, seeds, opts)
    text = records_to_jsonl(metrics) if args.format == "jsonl" else records_to_csv(metrics)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        text, summary = report(records)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.format == "json":
        print(json.dumps(summary))
    else:
        print(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
