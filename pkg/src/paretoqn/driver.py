"""Quasi-Newton descent for composite multiobjective problems.

Each iteration solves the direction subproblem with the current metrics,
stops at (numerically) Pareto stationary points, takes an Armijo step that
decreases every objective and updates each metric from the step and the
change of its own smooth gradient.
"""
from __future__ import annotations

import csv
import enum
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import subproblem
from .linesearch import ArmijoParams, LineSearchError, armijo
from .problem import CompositeProblem, eval_F
from .quasi_newton import MetricSet, UpdateRule, hessians, sigma_floor


ALPHA_FLOOR = 8 * np.finfo(float).eps


class Status(str, enum.Enum):
    STATIONARY = "StationaryPoint"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAILURE = "LineSearchFailure"
    INEXACT_SUBPROBLEM = "InexactSubproblem"
    ERROR = "Error"


@dataclass(frozen=True)
class SolverConfig:
    armijo: ArmijoParams = ArmijoParams()
    rule: UpdateRule = UpdateRule.BFGS
    tol_d: float = 1e-8
    # None: ALPHA_FLOOR * max(1, |F(x^k)|_inf), the size below which a
    # predicted decrease is lost to rounding in F
    tol_alpha: Optional[float] = None
    max_iters: int = 500
    tol_gap: float = 1e-10
    sub_max_iter: int = 10_000
    seed: int = 0
    phi: float = 0.0
    # accepted for completeness of the algorithm statement, not used
    omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rule", UpdateRule(self.rule))
        for name in ("tol_d", "tol_alpha", "tol_gap", "omega"):
            if name == "tol_alpha" and self.tol_alpha is None:
                continue
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class IterateRecord:
    k: int
    x: np.ndarray
    F: np.ndarray
    d: np.ndarray
    alpha: float
    step: float
    backtracks: int
    sub_gap: float
    sub_iters: int
    kkt_residual: float
    sigma: float
    curvature: np.ndarray
    events: list

    @property
    def norm_d(self) -> float:
        return float(np.linalg.norm(self.d))

    @property
    def lam_normd_sq(self) -> float:
        return self.step * self.norm_d ** 2


class Certificate(NamedTuple):
    norm_d: float
    alpha: float
    kkt_residual: float
    exact: bool = True


@dataclass
class RunReport:
    status: Status
    x0: np.ndarray
    F0: np.ndarray
    x: np.ndarray
    F: np.ndarray
    records: list
    certificate: Certificate
    final_sub_gap: float
    final_sub_iters: int
    final_sigma: float
    skips: int = 0
    resets: int = 0
    message: str = ""
    # "norm_d" or "alpha" for stationary runs
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def inexact(self) -> bool:
        return self.status is Status.INEXACT_SUBPROBLEM

    @property
    def cumulative_lam_normd_sq(self) -> float:
        return float(sum(r.lam_normd_sq for r in self.records))

    @property
    def sigma_min(self) -> float:
        return min([r.sigma for r in self.records] + [self.final_sigma])


def solve(p: CompositeProblem, x0, cfg: SolverConfig = SolverConfig(),
          metrics: Optional[MetricSet] = None) -> RunReport:
    x = p.check_point(x0).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    M = metrics.copy() if metrics is not None else MetricSet.initial(p, cfg.rule, x, cfg.phi)
    F = eval_F(p, x)
    x0, F0 = x.copy(), F.copy()
    grads = p.grads(x)
    records = []
    message = ""
    stop_reason = ""
    for k in range(cfg.max_iters + 1):
        sol = subproblem.solve(p, x, M, cfg.tol_gap, cfg.sub_max_iter)
        sigma = sigma_floor(M)
        if not sol.exact:
            status = Status.INEXACT_SUBPROBLEM
            message = f"dual gap {sol.gap:.3e} above tolerance at k={k}"
            break
        tol_alpha = cfg.tol_alpha
        if tol_alpha is None:
            tol_alpha = ALPHA_FLOOR * max(1.0, float(np.max(np.abs(F))))
        if sol.norm_d <= cfg.tol_d:
            status, stop_reason = Status.STATIONARY, "norm_d"
            break
        if sol.alpha >= -tol_alpha:
            status, stop_reason = Status.STATIONARY, "alpha"
            break
        if k == cfg.max_iters:
            status = Status.MAX_ITERS
            break
        d = sol.direction
        try:
            step, backtracks, F_new = armijo(p, x, d, sol.alpha, cfg.armijo, F0=F)
        except LineSearchError as exc:
            status = Status.LINE_SEARCH_FAILURE
            message = f"k={k}: {exc}"
            break
        if not np.all(F_new < F):
            # accepted only through rounding of the Armijo right-hand side
            status = Status.LINE_SEARCH_FAILURE
            message = f"k={k}: accepted step gives no floating-point decrease of F"
            break
        x_new = x + step * d
        s = x_new - x
        grads_new = p.grads(x_new)
        ys = grads_new - grads
        hess = hessians(p, x_new) if M.rule is UpdateRule.EXACT_HESSIAN else None
        events = M.update(s, ys, hess)
        records.append(IterateRecord(
            k=k, x=x, F=F, d=d, alpha=sol.alpha, step=step, backtracks=backtracks,
            sub_gap=sol.gap, sub_iters=sol.dual_iterations, kkt_residual=sol.kkt_residual,
            sigma=sigma, curvature=ys @ s, events=events))
        x, F, grads = x_new, F_new, grads_new
    return RunReport(
        status=status, x0=x0, F0=F0, x=x, F=F, records=records,
        certificate=Certificate(sol.norm_d, sol.alpha, sol.kkt_residual, sol.exact),
        final_sub_gap=sol.gap, final_sub_iters=sol.dual_iterations, final_sigma=sigma,
        skips=M.skips, resets=M.resets, message=message, stop_reason=stop_reason)


def stationarity_certificate(p: CompositeProblem, x, B=None, tol_gap: float = 1e-10) -> Certificate:
    """(||d(x)||, alpha(x), KKT residual) from one subproblem solve.

    Metrics default to modulus_i * I.
    """
    if B is None:
        B = MetricSet.initial(p, UpdateRule.BFGS)
    sol = subproblem.solve(p, x, B, tol_gap)
    return Certificate(sol.norm_d, sol.alpha, sol.kkt_residual, sol.exact)


def summability_monitor(r: RunReport):
    """Series lambda_k ||d^k||^2 over accepted steps and its tail.

    For a stationary run the tail is ||d(x_final)||^2, the next term of the
    series with the first trial step 1; otherwise it is the last term.
    """
    series = [rec.lam_normd_sq for rec in r.records]
    if r.status is Status.STATIONARY:
        tail = r.certificate.norm_d ** 2
    else:
        tail = series[-1] if series else 0.0
    return series, tail


def summability_bounds(r: RunReport, rho: float) -> np.ndarray:
    """2 / (rho * sigma) * (f_i(x0) - f_i(x_final)) with sigma the smallest
    metric eigenvalue over the run; bounds the partial sums of the series."""
    return 2.0 / (rho * r.sigma_min) * (r.F0 - r.F)


def descent_bound_violations(r: RunReport, slack: float = 1e-9) -> list:
    """Iterates with alpha > -(sigma/2) ||d||^2 + slack."""
    return [rec.k for rec in r.records
            if rec.alpha > -0.5 * rec.sigma * rec.norm_d ** 2 + slack]


def descent_violations(r: RunReport) -> list:
    """Steps after which some objective did not strictly decrease."""
    Fs = [rec.F for rec in r.records] + [r.F]
    return [rec.k for rec, F_next in zip(r.records, Fs[1:]) if not np.all(F_next < rec.F)]


# ------------------------------------------------------------------- fronts

TIE_TOL = 1e-12


def dominates(u, v) -> bool:
    u, v = np.asarray(u), np.asarray(v)
    return bool(np.all(u <= v) and np.any(u != v))


def nondominated(F, tie_tol: float = TIE_TOL, dedup: bool = False) -> list:
    """Indices of the nondominated rows of ``F``, ascending.

    Rows within ``tie_tol`` of each other (max norm) are ties and never
    dominate one another; with ``dedup`` only the lowest index of a tie
    group survives.  Rows are scanned in lexicographic order: a dominator
    always precedes the row it dominates, so each row only needs checking
    against the rows kept so far.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ValueError("expected a 2-d array of objective vectors")
    N = F.shape[0]
    # lexsort is stable, so exact ties keep ascending index order
    order = np.lexsort(F.T[::-1]) if N else np.array([], dtype=int)
    keep = []
    for i in order:
        fi = F[i]
        dup = None
        dominated = False
        for pos, j in enumerate(keep):
            fj = F[j]
            if np.max(np.abs(fj - fi)) <= tie_tol:
                if dedup:
                    dup = pos
                    break
                continue
            if np.all(fj <= fi) and np.any(fj < fi):
                dominated = True
                break
        if dominated:
            continue
        if dup is not None:
            if i < keep[dup]:
                keep[dup] = i
            continue
        keep.append(i)
    return sorted(int(i) for i in keep)


def dominance_matrix(F) -> np.ndarray:
    """D[u, v] is True when row u dominates row v."""
    F = np.asarray(F, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    ne = np.any(F[:, None, :] != F[None, :, :], axis=2)
    return le & ne


@dataclass
class FrontReport:
    starts: np.ndarray
    runs: list
    X: np.ndarray
    F: np.ndarray
    statuses: list
    nondominated: list
    distinct: list
    dominance: np.ndarray = field(repr=False)
    errors: dict = field(default_factory=dict)

    @property
    def all_stationary(self) -> bool:
        return all(s == Status.STATIONARY.value for s in self.statuses)

    def to_json_dict(self) -> dict:
        return {
            "points": [{"x": x.tolist(), "F": f.tolist(), "status": s}
                       for x, f, s in zip(self.X, self.F, self.statuses)],
            "nondominated": list(self.nondominated),
            "distinct": list(self.distinct),
            "failures": self.failures(),
        }

    def failures(self) -> list:
        """Starts that did not end at a stationary point, with their messages."""
        return [{"index": i, "status": s, "message": self.errors.get(i, "")}
                for i, s in enumerate(self.statuses) if s != Status.STATIONARY.value]


def _thread_count() -> int:
    raw = os.environ.get("PARETO_QN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def sample_starts(p: CompositeProblem, N: int, seed: int) -> np.ndarray:
    lo, hi = p.start_box
    return np.random.default_rng(seed).uniform(lo, hi, size=(N, p.dim))


def multistart_front(p: CompositeProblem, N: int, cfg: SolverConfig = SolverConfig(),
                     threads: Optional[int] = None) -> FrontReport:
    """Run from N uniform starts and filter the finals for dominance."""
    if N < 1:
        raise ValueError("N must be >= 1")
    starts = sample_starts(p, N, cfg.seed)

    def run(x0):
        try:
            return solve(p, x0, cfg)
        except Exception as exc:  # recorded per start, never aborts the batch
            return exc

    workers = min(threads or _thread_count(), N)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, starts))
    else:
        runs = [run(x0) for x0 in starts]

    X, Fs, statuses, errors = [], [], [], {}
    for i, (x0, r) in enumerate(zip(starts, runs)):
        if isinstance(r, Exception):
            errors[i] = f"{type(r).__name__}: {r}"
            X.append(x0)
            Fs.append(eval_F(p, x0))
            statuses.append(Status.ERROR.value)
        else:
            X.append(r.x)
            Fs.append(r.F)
            statuses.append(r.status.value)
            if r.message:
                errors[i] = r.message
    X, Fs = np.array(X), np.array(Fs)
    return FrontReport(starts, runs, X, Fs, statuses, nondominated(Fs),
                       nondominated(Fs, dedup=True), dominance_matrix(Fs), errors)


# ------------------------------------------------------------------ writers

def trace_columns(m: int) -> list:
    return (["k", "lambda", "norm_d", "alpha", "kkt_residual", "backtracks", "sub_iters",
             "sub_gap"] + [f"f_{i + 1}" for i in range(m)] + ["lam_normd_sq"])


def _num(v) -> str:
    return repr(float(v))


def write_trace(r: RunReport, path) -> None:
    """One row per accepted step plus a final row for the terminal iterate
    (lambda = 0: no step taken)."""
    m = r.F.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_columns(m))
        for rec in r.records:
            w.writerow([rec.k, _num(rec.step), _num(rec.norm_d), _num(rec.alpha),
                        _num(rec.kkt_residual), rec.backtracks, rec.sub_iters,
                        _num(rec.sub_gap)] + [_num(f) for f in rec.F]
                       + [_num(rec.lam_normd_sq)])
        c = r.certificate
        w.writerow([len(r.records), _num(0.0), _num(c.norm_d), _num(c.alpha),
                    _num(c.kkt_residual), 0, r.final_sub_iters, _num(r.final_sub_gap)]
                   + [_num(f) for f in r.F] + [_num(0.0)])


def run_summary(r: RunReport) -> dict:
    c = r.certificate
    return {
        "status": r.status.value,
        "iterations": r.iterations,
        "x": r.x.tolist(),
        "F": r.F.tolist(),
        "certificate": {"norm_d": c.norm_d, "alpha": c.alpha, "kkt_residual": c.kkt_residual},
        "sum_lam_normd_sq": r.cumulative_lam_normd_sq,
        "metric_skips": r.skips,
        "metric_resets": r.resets,
        "stop_reason": r.stop_reason,
        "message": r.message,
    }


def write_front(front: FrontReport, json_path, csv_path) -> None:
    with open(json_path, "w") as fh:
        json.dump(front.to_json_dict(), fh, indent=2)
        fh.write("\n")
    n, m = front.X.shape[1], front.F.shape[1]
    flags = set(front.nondominated)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{j + 1}" for j in range(n)] + [f"f_{i + 1}" for i in range(m)]
                   + ["nondominated"])
        for i, (x, f) in enumerate(zip(front.X, front.F)):
            w.writerow([_num(v) for v in x] + [_num(v) for v in f] + [int(i in flags)])
