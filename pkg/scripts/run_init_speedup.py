#!/usr/bin/env python3
"""Time a correlation-initialized sieving solve against a cold full solve
at a single large lambda.

    python3 scripts/run_init_speedup.py --m 500 --l 20 --p 1000 --lam 10
"""
import argparse
import time

from exclasso.data import SyntheticSpec, generate_synthetic
from exclasso.ppdna import PpdnaConfig, kkt_residual, ppdna_solve
from exclasso.sieving import as_path


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--l", type=int, default=20)
    ap.add_argument("--p", type=int, default=1000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--lam", type=float, default=10.0)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--raw", action="store_true", help="keep unscaled columns")
    args = ap.parse_args()

    print(f"{'seed':>4} {'sieve s':>8} {'eta':>8} {'rounds':>6} {'|I|':>6} "
          f"{'cold s':>8} {'eta':>8} {'ratio':>6}")
    for seed in args.seeds:
        spec = SyntheticSpec(m=args.m, l=args.l, p=args.p, seed=seed, normalize=not args.raw)
        P = generate_synthetic(spec).problem(args.lam)
        t0 = time.perf_counter()
        res = as_path(P, [args.lam], args.tol)
        t_as = time.perf_counter() - t0
        t0 = time.perf_counter()
        sol, _ = ppdna_solve(P, PpdnaConfig(tol=args.tol))
        t_cold = time.perf_counter() - t0
        eta = kkt_residual(P, res.solutions[0].x)
        print(f"{seed:4d} {t_as:8.2f} {eta:8.1e} {len(res.sieve_stats[0]):6d} "
              f"{res.reduced_sizes(0)[-1]:6d} {t_cold:8.2f} {sol.kkt_residual:8.1e} "
              f"{t_cold / t_as:6.1f}")


if __name__ == "__main__":
    main()
