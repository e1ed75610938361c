"""Command line front end.

    paretoqn run     --builtin BIQUAD --x0 2 --rule bfgs --out runs/biquad
    paretoqn front   --builtin QUAD-M3 -N 20 --seed 7 --out fronts/m3
    paretoqn compare --builtin BIQUAD --rules bfgs,newton,identity
    paretoqn check   --problem my_problem.json

Exit codes: 0 success, 1 usage or problem-file error, and for ``run``
2 MaxIters, 3 line-search failure, 4 inexact subproblem.  ``front``,
``compare`` and ``check`` return 2 when some run or check failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import driver, oracle, subproblem
from .driver import SolverConfig, Status
from .linesearch import ArmijoParams
from .problem import ProblemError, builtin, load_problem, validate
from .quasi_newton import MetricSet, UpdateRule

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
RUN_EXIT = {
    Status.STATIONARY: 0,
    Status.MAX_ITERS: 2,
    Status.LINE_SEARCH_FAILURE: 3,
    Status.INEXACT_SUBPROBLEM: 4,
}
RULES = [r.value for r in UpdateRule]
COMPARE_COLUMNS = ["rule", "runs", "stationary", "iterations", "final_norm_d",
                   "sub_iters", "wall_time_s"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 already means MaxIters here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sp):
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", metavar="NAME", help="catalog problem name")
    src.add_argument("--problem", metavar="PATH", help="JSON problem file")
    sp.add_argument("--rule", choices=RULES, default="bfgs")
    sp.add_argument("--rho", type=float, default=1e-4)
    sp.add_argument("--zeta", type=float, default=0.5)
    sp.add_argument("--tol-d", type=float, default=1e-8)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--phi", type=float, default=0.0, help="Broyden parameter of the huang rule")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=".", help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="paretoqn", description="Quasi-Newton solver for composite "
                 "multiobjective problems.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="single solve; writes trace.csv and summary.json")
    _add_common(run)
    run.add_argument("--x0", help="comma separated start (default: one uniform draw "
                     "from the start box)")

    front = sub.add_parser("front", help="multistart front; writes front.json and points.csv")
    _add_common(front)
    front.add_argument("-N", type=int, default=20, help="number of starts")

    cmp_ = sub.add_parser("compare", help="same starts under several update rules")
    _add_common(cmp_)
    cmp_.add_argument("--rules", default="bfgs,newton,identity",
                      help="comma separated, at least two")
    cmp_.add_argument("--x0", help="single start instead of -N uniform draws")
    cmp_.add_argument("-N", type=int, default=5)

    chk = sub.add_parser("check", help="validate oracles and cross-check the subproblem solver")
    _add_common(chk)
    chk.add_argument("-N", type=int, default=5, help="sample points")
    return ap


# ------------------------------------------------------------------ helpers

def _problem(args):
    if args.builtin is not None:
        return builtin(args.builtin)
    try:
        return load_problem(args.problem)
    except ProblemError:
        raise
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        raise ProblemError(f"{args.problem}: {type(exc).__name__}: {exc}") from None


def _config(args, rule=None) -> SolverConfig:
    try:
        return SolverConfig(armijo=ArmijoParams(args.rho, args.zeta), rule=rule or args.rule,
                            tol_d=args.tol_d, max_iters=args.max_iters, seed=args.seed,
                            phi=args.phi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _x0(p, text):
    try:
        x0 = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise UsageError(f"--x0: expected comma separated numbers, got {text!r}") from None
    if x0.size != p.dim:
        raise UsageError(f"--x0: expected {p.dim} entries, got {x0.size}")
    return x0


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ----------------------------------------------------------------- commands

def cmd_run(args) -> int:
    p = _problem(args)
    cfg = _config(args)
    x0 = _x0(p, args.x0) if args.x0 else driver.sample_starts(p, 1, cfg.seed)[0]
    r = driver.solve(p, x0, cfg)
    out = _outdir(args)
    driver.write_trace(r, out / "trace.csv")
    _dump(driver.run_summary(r), out / "summary.json")
    print(f"{p.name}: {r.status.value} after {r.iterations} iterations, "
          f"|d| = {r.certificate.norm_d:.3e}, alpha = {r.certificate.alpha:.3e}")
    if r.message:
        print(r.message)
    return RUN_EXIT.get(r.status, EXIT_FAILED)


def cmd_front(args) -> int:
    if args.N < 1:
        raise UsageError("-N must be >= 1")
    p = _problem(args)
    front = driver.multistart_front(p, args.N, _config(args))
    out = _outdir(args)
    driver.write_front(front, out / "front.json", out / "points.csv")
    fails = front.failures()
    print(f"{p.name}: {args.N} starts, {len(front.nondominated)} nondominated, "
          f"{len(front.distinct)} distinct, {len(fails)} failed")
    for f in fails:
        print(f"  start {f['index']}: {f['status']} {f['message']}")
    return EXIT_FAILED if fails else EXIT_OK


def cmd_compare(args) -> int:
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    bad = [r for r in rules if r not in RULES]
    if bad:
        raise UsageError(f"--rules: unknown rule(s) {', '.join(bad)}; choose from {RULES}")
    if len(set(rules)) < 2:
        raise UsageError("--rules: compare needs at least two distinct rules")
    p = _problem(args)
    base = _config(args)
    starts = (_x0(p, args.x0)[None, :] if args.x0
              else driver.sample_starts(p, args.N, base.seed))
    rows, failed = [], False
    for rule in rules:
        cfg = _config(args, rule)
        t0 = time.perf_counter()
        reports = []
        for x0 in starts:
            try:
                reports.append(driver.solve(p, x0, cfg))
            except Exception as exc:  # recorded, the remaining rules still run
                print(f"  {rule}: start {x0.tolist()} raised {type(exc).__name__}: {exc}")
                reports.append(None)
        wall = time.perf_counter() - t0
        ok = [r for r in reports if r is not None]
        n_stat = sum(r.status is Status.STATIONARY for r in ok)
        failed |= n_stat < len(reports)
        rows.append([rule, len(reports), n_stat, sum(r.iterations for r in ok),
                     max((r.certificate.norm_d for r in ok), default=float("nan")),
                     sum(rec.sub_iters for r in ok for rec in r.records) +
                     sum(r.final_sub_iters for r in ok), wall])
    out = _outdir(args)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for row in rows:
            w.writerow(row[:4] + [repr(float(row[4]))] + [row[5], f"{row[6]:.6f}"])
    print(f"{'rule':<10}{'runs':>6}{'stat':>6}{'iters':>8}{'max |d|':>12}{'sub it':>9}{'wall s':>9}")
    for rule, n, st, it, nd, si, wall in rows:
        print(f"{rule:<10}{n:>6}{st:>6}{it:>8}{nd:>12.2e}{si:>9}{wall:>9.3f}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_check(args) -> int:
    p = _problem(args)
    report = validate(p, samples=max(args.N, 1), seed=args.seed)
    rng = np.random.default_rng(args.seed)
    lo, hi = p.start_box
    pts = rng.uniform(lo, hi, size=(max(args.N, 1), p.dim))
    result = {"problem": p.name, "validation": report.to_dict(), "gradient": [],
              "directional_derivative": [], "grid": []}
    problems = [] if report.ok else [f"validation: {len(report.violations)} violation(s)"]
    for x in pts:
        for i, obj in enumerate(p.objectives):
            err = oracle.fd_check_gradient(obj.smooth, x, 1e-6)
            scale = 1 + float(np.max(np.abs(obj.smooth.grad(x))))
            result["gradient"].append({"x": x.tolist(), "objective": i, "error": err})
            if err > 1e-5 * scale:
                problems.append(f"gradient of objective {i} at {x.tolist()}: error {err:.2e}")
        d = rng.normal(size=p.dim)
        lhs, rhs, diff = subproblem.directional_derivative_check(p, x, d)
        result["directional_derivative"].append(
            {"x": x.tolist(), "d": d.tolist(), "lhs": lhs, "rhs": rhs, "error": diff})
        if diff > 1e-4 * (1 + abs(rhs)):
            problems.append(f"directional derivative at {x.tolist()}: error {diff:.2e}")
        if p.dim <= 2:
            B = MetricSet.initial(p, args.rule, x0=x)
            sol = subproblem.solve(p, x, B)
            g = oracle.grid_min_theta(p, x, B, oracle.grid_spec_for(p.dim, sol.direction))
            result["grid"].append({"x": x.tolist(), "alpha_dual": sol.alpha,
                                   "alpha_grid": g.theta, "gap": sol.gap})
            if abs(sol.alpha - g.theta) > 5e-3 or sol.gap > 1e-10:
                problems.append(f"subproblem at {x.tolist()}: dual {sol.alpha:.6g}, "
                                f"grid {g.theta:.6g}, gap {sol.gap:.1e}")
    result["problems"] = problems
    _dump(result, _outdir(args) / "check.json")
    for line in problems:
        print(line)
    print(f"{p.name}: {'ok' if not problems else f'{len(problems)} problem(s)'}")
    return EXIT_FAILED if problems else EXIT_OK


COMMANDS = {"run": cmd_run, "front": cmd_front, "compare": cmd_compare, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ProblemError) as exc:
        print(f"paretoqn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
