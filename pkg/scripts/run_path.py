#!/usr/bin/env python3
"""Compare path strategies (sieving, warm start, cold start) on synthetic data.

Writes one JSON/CSV pair per strategy into --out and prints a per-lambda
summary: nnz, final reduced size, sieving rounds and time.

    python3 scripts/run_path.py --m 500 --l 20 --p 1000 --normalize --out runs/path
"""
import argparse
import logging
import time
from pathlib import Path

from exclasso.data import SyntheticSpec, generate_synthetic, lambda_grid, save_path_result
from exclasso.ppdna import PpdnaConfig
from exclasso.sieving import solve_path


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=200)
    ap.add_argument("--l", type=int, default=20)
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--normalize", action="store_true", help="scale columns to unit norm")
    ap.add_argument("--lambda-hi", type=float, default=1.0)
    ap.add_argument("--lambda-lo", type=float, default=1e-4)
    ap.add_argument("--grid", type=int, default=20)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--strategies", nargs="+", default=["as", "warmstart"],
                    choices=["as", "warmstart", "cold"])
    ap.add_argument("--out", default="runs/path")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    spec = SyntheticSpec(m=args.m, l=args.l, p=args.p, seed=args.seed, normalize=args.normalize)
    problem = generate_synthetic(spec).problem()
    lams = lambda_grid(args.lambda_hi, args.lambda_lo, args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    totals = {}
    for s in args.strategies:
        t0 = time.perf_counter()
        res = solve_path(problem, lams, s, eps=args.tol, config=PpdnaConfig())
        totals[s] = time.perf_counter() - t0
        recs = save_path_result(res, out / f"{s}.json", out / f"{s}.csv")
        print(f"\n{s}: {totals[s]:.2f} s, failures: {len(res.failures)}")
        print(f"{'lambda':>10} {'nnz':>6} {'|I|':>6} {'rounds':>6} {'eta':>9} {'time':>7}")
        for r in recs:
            size = r["reduced_sizes"][-1] if r["reduced_sizes"] else problem.n
            print(f"{r['lambda']:10.3e} {r['nnz']:6d} {size:6d} {r['sieve_rounds']:6d} "
                  f"{r['eta_kkt']:9.1e} {r['time_s']:7.2f}")
    if "as" in totals:
        for s, t in totals.items():
            if s != "as":
                print(f"speedup of as over {s}: {t / totals['as']:.1f}x")


if __name__ == "__main__":
    main()
