"""Exclusive lasso solvers: PPDNA with a dual semismooth Newton inner solver,
adaptive sieving for solution paths, and first-order baselines."""

from .baselines import FirstOrderConfig, admm_solve, apg_solve
from .data import (DataFormatError, SyntheticSpec, generate_synthetic, lambda_grid,
                   load_problem, load_problem_dir, save_path_result, save_problem)
from .model import (GroupPartition, PartitionError, Problem, Solution, SolverReport,
                    embed_solution, exclusive_norm, restrict_problem, validate_partition)
from .ppdna import PpdnaConfig, kkt_residual, polish_solution, ppdna_solve
from .prox import hs_jacobian_exclusive, hs_jacobian_group, prox_exclusive, prox_sq_l1
from .sieving import PathResult, as_path, correlation_init, sieve_candidates, solve_path

__version__ = "0.1.0"
