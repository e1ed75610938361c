"""Quasi-Newton method for composite multiobjective optimization.

Each objective is f_i = g_i + h_i with g_i smooth and strongly convex and
h_i a maximum of affine functions.  Typical use::

    from paretoqn import builtin, solve, SolverConfig
    p = builtin("QUAD-M3")
    report = solve(p, [1.5, -0.5], SolverConfig(rule="bfgs"))
    report.status, report.x
"""
from .driver import (FrontReport, RunReport, SolverConfig, Status, multistart_front,
                     nondominated, solve, stationarity_certificate)
from .linesearch import ArmijoParams, LineSearchError, armijo
from .oracle import GridSpec, dominance_bruteforce, fd_check_gradient, grid_min_theta
from .problem import (CATALOG, CompositeObjective, CompositeProblem, MaxAffine, ProblemError,
                      SmoothOracle, builtin, centered_quadratic, eval_F, load_problem,
                      logquad, quadratic, validate)
from .quasi_newton import MetricSet, UpdateRule
from .subproblem import SubproblemSolution, theta_eval
from .subproblem import solve as solve_subproblem

__version__ = "0.1.0"

__all__ = [
    "ArmijoParams", "CATALOG", "CompositeObjective", "CompositeProblem", "FrontReport",
    "GridSpec", "LineSearchError", "MaxAffine", "MetricSet", "ProblemError", "RunReport",
    "SmoothOracle", "SolverConfig", "Status", "SubproblemSolution", "UpdateRule", "armijo",
    "builtin", "centered_quadratic", "dominance_bruteforce", "eval_F", "fd_check_gradient",
    "grid_min_theta", "load_problem", "logquad", "multistart_front", "nondominated",
    "quadratic", "solve", "solve_subproblem", "stationarity_certificate", "theta_eval",
    "validate",
]
