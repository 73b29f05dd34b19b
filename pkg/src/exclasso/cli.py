"""Command-line front end: ``exclasso {gen,solve,path,bench}``.

Config files are JSON objects whose keys are field names of
``SyntheticSpec``, ``PpdnaConfig`` or ``FirstOrderConfig``; flags given on
the command line override them.

Exit codes: 0 success, 2 usage, 3 data error, 4 non-convergence,
5 time limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path


from .baselines import FirstOrderConfig, admm_solve, apg_solve
from .data import (DataFormatError, SyntheticSpec, generate_synthetic, lambda_grid,
                   load_problem, load_problem_dir, save_path_result, write_synthetic)
from .model import PartitionError
from .ppdna import PpdnaConfig, ppdna_solve
from .sieving import solve_path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV, EXIT_TIME = 0, 2, 3, 4, 5
THREADS_ENV = "EXCLASSO_THREADS"
SOLVERS = ("ppdna", "admm", "apg")
BENCH_FIELDS = ("instance", "solver", "lambda", "iters", "eta_kkt", "time", "status")

log = logging.getLogger("exclasso")


class UsageError(Exception):
    pass


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}")


def _build(cls, base: dict, overrides: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(base) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None and k in names})
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def solver_config(solver: str, base: dict | None = None, **overrides):
    """Config object for ``solver`` from a JSON dict plus flag overrides."""
    base = dict(base or {})
    if solver == "ppdna":
        if "max_iter" in overrides:
            overrides["max_outer"] = overrides.pop("max_iter")
        return _build(PpdnaConfig, base, overrides)
    overrides.pop("polish", None)
    return _build(FirstOrderConfig, base, overrides)


def run_solver(problem, solver: str, config):
    if solver == "ppdna":
        return ppdna_solve(problem, config)
    if solver == "admm":
        return admm_solve(problem, config)
    if solver == "apg":
        return apg_solve(problem, config)
    raise UsageError(f"unknown solver {solver!r}")


def status_code(status: str) -> int:
    if status == "converged":
        return EXIT_OK
    if status == "time-limit":
        return EXIT_TIME
    return EXIT_NOCONV


def _load(args, lam):
    if args.data:
        return load_problem_dir(args.data, lam=lam, loss=args.loss)
    if not (args.A and args.b and args.groups):
        raise UsageError("give --data DIR or all of --A, --b, --groups")
    return load_problem(args.A, args.b, args.groups, lam=lam, loss=args.loss,
                        w_path=args.w, c_path=args.c)


def _emit(obj, out):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    base = _read_json(args.config) if args.config else {}
    over = {k: getattr(args, k) for k in ("m", "l", "p", "nnz_per_group", "corr_in", "corr_out",
                                          "noise", "seed", "task", "normalize")}
    spec = _build(SyntheticSpec, base, over)
    data = generate_synthetic(spec)
    manifest = write_synthetic(data, args.out)
    _emit(manifest, None)
    return EXIT_OK


def cmd_solve(args) -> int:
    solver = args.solver_flag or args.solver or "ppdna"
    base = _read_json(args.config) if args.config else {}
    cfg = solver_config(solver, base, tol=args.tol, max_iter=args.max_iter,
                        time_limit=args.time_limit, polish=args.polish)
    problem = _load(args, args.lam)
    t0 = time.perf_counter()
    sol, rep = run_solver(problem, solver, cfg)
    elapsed = time.perf_counter() - t0
    out = {
        "problem": {"m": problem.m, "n": problem.n, "lambda": problem.lam, "loss": problem.loss},
        "solution": sol.to_dict(),
        "report": {**rep.to_dict(), "time_s": elapsed},
    }
    if not args.full:
        out["solution"].pop("x")
    _emit(out, args.out)
    return status_code(rep.status)


def cmd_path(args) -> int:
    if not args.lambda_hi > args.lambda_lo > 0:
        raise UsageError("need --lambda-hi > --lambda-lo > 0")
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    lambdas = lambda_grid(args.lambda_hi, args.lambda_lo, args.grid)
    base = _read_json(args.config) if args.config else {}
    cfg = solver_config("ppdna", base, polish=args.polish)
    problem = _load(args, float(lambdas[0]))
    res = solve_path(problem, lambdas, args.strategy, eps=args.tol, config=cfg)
    records = (save_path_result(res, args.out, args.csv) if args.out
               else res.records())
    if not args.out:
        _emit(records, None)
    if res.failures:
        for lam, why in res.failures:
            log.error("lambda=%g: %s", lam, why)
        return EXIT_NOCONV
    return EXIT_OK


def _bench_cell(inst_name, problem, solver, lam, tol, time_limit):
    row = {"instance": inst_name, "solver": solver, "lambda": lam}
    try:
        cfg = solver_config(solver, {}, tol=tol, time_limit=time_limit)
        P = problem.with_lambda(lam)
        t0 = time.perf_counter()
        sol, rep = run_solver(P, solver, cfg)
        row["time"] = time.perf_counter() - t0
        row["iters"] = (f"{rep.outer_iters}({rep.total_inner_iters})" if solver == "ppdna"
                        else str(rep.outer_iters))
        row["eta_kkt"] = sol.kkt_residual
        row["status"] = rep.status
    except Exception as exc:  # a failing cell never aborts the sweep
        log.error("%s/%s/%g failed: %s", inst_name, solver, lam, exc)
        row.update(iters="", eta_kkt=float("nan"), time=float("nan"), status=f"error: {exc}")
    return row


def _bench_instances(matrix, root):
    out = []
    for k, inst in enumerate(matrix.get("instances", [])):
        name = inst.get("name", f"instance{k}")
        if "data" in inst:
            path = Path(inst["data"])
            problem = load_problem_dir(path if path.is_absolute() else root / path,
                                       loss=inst.get("loss"))
        elif "synthetic" in inst:
            spec = _build(SyntheticSpec, inst["synthetic"], {})
            d = generate_synthetic(spec)
            problem = d.problem()
        else:
            raise UsageError(f"instance {name!r} needs 'data' or 'synthetic'")
        out.append((name, problem))
    if not out:
        raise UsageError("bench matrix lists no instances")
    return out


def run_bench(matrix: dict, root=".", threads: int = 1) -> list:
    """Rows for every (instance, solver, lambda) cell, in that sort order."""
    solvers = matrix.get("solvers", list(SOLVERS))
    bad = set(solvers) - set(SOLVERS)
    if bad:
        raise UsageError(f"unknown solvers {sorted(bad)}")
    lambdas = [float(v) for v in matrix.get("lambdas", [1e-1, 1e-3])]
    tol = float(matrix.get("tol", 1e-6))
    time_limit = float(matrix.get("time_limit", 3600))
    cells = []
    for i, (name, problem) in enumerate(_bench_instances(matrix, Path(root))):
        for j, solver in enumerate(solvers):
            for k, lam in enumerate(lambdas):
                cells.append(((i, j, k), (name, problem, solver, lam, tol, time_limit)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: (c[0], _bench_cell(*c[1])), cells))
    else:
        rows = [(key, _bench_cell(*arg)) for key, arg in cells]
    rows.sort(key=lambda r: r[0])
    return [r for _, r in rows]


def write_bench(rows, out):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r[k] for k in BENCH_FIELDS})
    finally:
        if out:
            fh.close()


def cmd_bench(args) -> int:
    matrix = _read_json(args.matrix)
    threads = args.threads or int(os.environ.get(THREADS_ENV, "1"))
    rows = run_bench(matrix, Path(args.matrix).parent, threads=max(threads, 1))
    write_bench(rows, args.out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _add_data_flags(p):
    p.add_argument("--data", help="directory with A.csv|A.txt, b.txt, groups.txt")
    p.add_argument("--A", help="feature matrix (CSV or 'm n nnz' triplets)")
    p.add_argument("--b", help="response, one value per line")
    p.add_argument("--groups", help="group id (1..l) per feature, one per line")
    p.add_argument("--w", help="optional feature weights")
    p.add_argument("--c", help="optional linear term")
    p.add_argument("--loss", choices=("squared", "logistic"),
                   help="default: logistic when b is +-1, else squared")
    p.add_argument("--config", help="JSON config; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exclasso", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic instance")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--m", type=int)
    g.add_argument("--l", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--nnz-per-group", dest="nnz_per_group", type=int)
    g.add_argument("--corr-in", dest="corr_in", type=float)
    g.add_argument("--corr-out", dest="corr_out", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--task", choices=("regression", "classification"))
    g.add_argument("--normalize", action="store_true", default=None,
                   help="scale columns of A to unit norm")
    g.add_argument("--config", help="JSON SyntheticSpec")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve for one lambda")
    _add_data_flags(s)
    which = s.add_mutually_exclusive_group()
    which.add_argument("--solver", choices=SOLVERS)
    for name in SOLVERS:
        which.add_argument(f"--{name}", dest="solver_flag", action="store_const", const=name)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--time-limit", dest="time_limit", type=float)
    s.add_argument("--polish", action="store_true", default=None,
                   help="refine the PPDNA result on its support")
    s.add_argument("--full", action="store_true", help="include x in the output")
    s.add_argument("--out", help="result JSON (default stdout)")
    s.set_defaults(func=cmd_solve, solver_flag=None)

    p = sub.add_parser("path", help="solution path over a log-spaced lambda grid")
    _add_data_flags(p)
    p.add_argument("--lambda-hi", dest="lambda_hi", type=float, default=1.0)
    p.add_argument("--lambda-lo", dest="lambda_lo", type=float, default=1e-4)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--strategy", choices=("as", "warmstart", "cold"), default="as")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--polish", action="store_true", default=None)
    p.add_argument("--out", help="per-lambda JSON records (default stdout)")
    p.add_argument("--csv", help="also write a flat CSV")
    p.set_defaults(func=cmd_path)

    b = sub.add_parser("bench", help="instances x solvers x lambdas comparison table")
    b.add_argument("matrix", help="JSON with instances, solvers, lambdas, tol, time_limit")
    b.add_argument("--out", help="CSV (default stdout)")
    b.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"exclasso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, PartitionError, FileNotFoundError, OSError) as exc:
        print(f"exclasso: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid problem data surfaces as ValueError from Problem validation
        print(f"exclasso: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
