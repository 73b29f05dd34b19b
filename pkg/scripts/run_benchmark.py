#!/usr/bin/env python3
"""Solver comparison table (instances x solvers x lambdas) as CSV.

Iterations for PPDNA are printed as ``outer(inner)``.

    python3 scripts/run_benchmark.py scripts/bench_matrix.json --out runs/bench.csv
"""
import argparse
import json
import logging
from pathlib import Path

from exclasso.cli import BENCH_FIELDS, run_bench, write_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("matrix", nargs="?", default=str(Path(__file__).with_name("bench_matrix.json")))
    ap.add_argument("--out", help="CSV path (table is always printed)")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    matrix = json.loads(Path(args.matrix).read_text())
    rows = run_bench(matrix, Path(args.matrix).parent, threads=args.threads)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_bench(rows, args.out)
    print(" ".join(f"{k:>12}" for k in BENCH_FIELDS))
    for r in rows:
        print(f"{r['instance']:>12} {r['solver']:>12} {r['lambda']:12.1e} {r['iters']:>12} "
              f"{r['eta_kkt']:12.1e} {r['time']:12.2f} {r['status']:>12}")


if __name__ == "__main__":
    main()
