"""Acceptance gate: ten criteria at their stated tolerances.

Each criterion is a function returning (passed, detail).  Under pytest every
criterion is one test and the verdict lines are printed in the terminal
summary; ``python3 tests/test_acceptance.py`` prints the same lines.
"""
import functools
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from paretoqn.driver import (SolverConfig, Status, nondominated, sample_starts, solve,
                             stationarity_certificate)
from paretoqn.oracle import grid_min_theta, grid_spec_for
from paretoqn.problem import builtin, problem_to_dict
from paretoqn.quasi_newton import MetricSet, hessians
from paretoqn.subproblem import solve as solve_subproblem, theta_eval
from _instances import CATALOG_NAMES, RULES, random_instance, triangle_distance

RESULTS = {}
STARTS = 10
RHO = 1e-4


def verdict(n, ok, detail):
    RESULTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    return ok, detail


@functools.lru_cache(maxsize=None)
def suite():
    """Every catalog problem x rule x STARTS multistarts, with wall time."""
    t0 = time.perf_counter()
    runs = []
    for name in CATALOG_NAMES:
        p = builtin(name)
        for rule in RULES:
            for x0 in sample_starts(p, STARTS, seed=0):
                runs.append((p, rule, solve(p, x0, SolverConfig(rule=rule))))
    return runs, time.perf_counter() - t0


def criterion_1():
    runs, wall = suite()
    bad = 0
    for _, _, r in runs:
        for rec in r.records:
            if not rec.alpha <= -0.5 * rec.sigma * np.linalg.norm(rec.d) ** 2 + 1e-9:
                bad += 1
    n_it = sum(r.iterations for _, _, r in runs)
    ok = bad == 0 and wall < 10.0
    return verdict(1, ok, f"descent bound on {n_it} iterates of {len(runs)} runs, "
                          f"{bad} violations, {wall:.2f} s (< 10 s)")


def criterion_2():
    runs, _ = suite()
    bad, steps = 0, 0
    for _, _, r in runs:
        Fs = [rec.F for rec in r.records] + [r.F]
        for rec, F_next in zip(r.records, Fs[1:]):
            if np.any(rec.d != 0):
                steps += 1
                bad += int(not np.all(F_next < rec.F))
    return verdict(2, bad == 0, f"strict descent on {steps} steps, {bad} violations")


def criterion_3():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst_diff, worst_gap = 0.0, 0.0
    for _ in range(100):
        p, x, B = random_instance(rng)
        sol = solve_subproblem(p, x, B)
        grid = grid_min_theta(p, x, B, grid_spec_for(p.dim, sol.direction, 1e-3))
        worst_diff = max(worst_diff, abs(sol.alpha - grid.theta))
        worst_gap = max(worst_gap, sol.gap)
    wall = time.perf_counter() - t0
    ok = worst_diff <= 5e-3 and worst_gap <= 1e-10 and wall < 60.0
    return verdict(3, ok, f"100 instances, max |alpha_dual - alpha_grid| = {worst_diff:.2e} "
                          f"(<= 5e-3), max gap = {worst_gap:.1e} (<= 1e-10), {wall:.1f} s")


def criterion_4():
    bq, m3 = builtin("BIQUAD"), builtin("QUAD-M3")
    stat = [stationarity_certificate(bq, [x]).norm_d for x in (0.0, 0.5, 1.0)]
    stat.append(stationarity_certificate(m3, [1 / 3, 1 / 3]).norm_d)
    non = [stationarity_certificate(bq, [x]).alpha for x in (2.0, -1.0)]
    ok = max(stat) <= 1e-7 and max(non) <= -1e-3
    return verdict(4, ok, f"max |d| at stationary points = {max(stat):.1e} (<= 1e-7), "
                          f"max alpha at non-stationary points = {max(non):.3f} (<= -1e-3)")


def criterion_5():
    worst, bad, n = 0.0, 0, 0
    cases = [("BIQUAD", lambda x: abs(x[0] - np.clip(x[0], 0.0, 1.0))),
             ("QUAD-M3", lambda x: triangle_distance(x, [(0, 0), (1, 0), (0, 1)]))]
    for name, dist in cases:
        p = builtin(name)
        for rule in RULES:
            for x0 in sample_starts(p, 20, seed=5):
                r = solve(p, x0, SolverConfig(rule=rule, max_iters=500))
                n += 1
                bad += int(r.status is not Status.STATIONARY)
                worst = max(worst, dist(r.x))
    ok = bad == 0 and worst <= 1e-6
    return verdict(5, ok, f"{n} runs (20 starts x {len(RULES)} rules x 2 problems), "
                          f"{bad} not stationary, max distance to Pareto set {worst:.1e} (<= 1e-6)")


def criterion_6():
    runs, _ = suite()
    worst_tail, worst_excess, n = 0.0, -np.inf, 0
    for _, _, r in runs:
        if r.status is not Status.STATIONARY:
            continue
        n += 1
        terms = np.array([rec.step * np.linalg.norm(rec.d) ** 2 for rec in r.records])
        # the next term, with trial step 1, is ||d(x_final)||^2
        worst_tail = max(worst_tail, r.certificate.norm_d ** 2)
        sigma = min([rec.sigma for rec in r.records] + [r.final_sigma])
        bound = 2.0 / (RHO * sigma) * (r.F0 - r.F) + 1e-6
        for partial in np.cumsum(terms):
            worst_excess = max(worst_excess, float(np.max(partial - bound)))
    ok = worst_tail <= 1e-12 and worst_excess <= 0
    return verdict(6, ok, f"{n} converged runs, max final term {worst_tail:.1e} (<= 1e-12), "
                          f"max partial sum minus bound {worst_excess:.2e} (<= 0)")


def _quadratic_Q(p):
    out = []
    for o in problem_to_dict(p)["objectives"]:
        if o["smooth"]["kind"] != "quadratic":
            return None
        out.append(np.array(o["smooth"]["Q"], dtype=float))
    return out


def criterion_7():
    """Replay each run's metric updates from its iterates."""
    runs, _ = suite()
    worst_res, chol_fail, hess_mismatch, updates, mismatched = 0.0, 0, 0, 0, 0
    for p, rule, r in runs:
        xs = [rec.x for rec in r.records] + [r.x]
        M = MetricSet.initial(p, rule, x0=r.x0)
        Q = _quadratic_Q(p)
        for rec, x_new in zip(r.records, xs[1:]):
            s = x_new - rec.x
            ys = p.grads(x_new) - p.grads(rec.x)
            events = M.update(s, ys, hessians(p, x_new) if rule == "newton" else None)
            mismatched += int(events != rec.events)
            for i, (B, ev) in enumerate(zip(M, events)):
                try:
                    np.linalg.cholesky(B)
                except np.linalg.LinAlgError:
                    chol_fail += 1
                if ev != "updated":
                    continue
                updates += 1
                if rule in ("bfgs", "ssbfgs", "huang"):
                    res = np.linalg.norm(B @ s - ys[i]) / (1 + np.linalg.norm(ys[i]))
                    worst_res = max(worst_res, res)
                if rule == "newton" and Q is not None:
                    hess_mismatch += int(not np.array_equal(B, Q[i]))
    ok = worst_res <= 1e-10 and chol_fail == 0 and hess_mismatch == 0 and mismatched == 0
    return verdict(7, ok, f"{updates} replayed updates, max relative secant residual "
                          f"{worst_res:.1e} (<= 1e-10), {chol_fail} Cholesky failures, "
                          f"{hess_mismatch} exact-Hessian mismatches")


def _max_directional_derivative(p, x, d):
    """max_i f_i'(x; d) from the data: grad g_i . d plus the max over active pieces."""
    vals = []
    for o in problem_to_dict(p)["objectives"]:
        g = p.objectives[len(vals)].smooth.grad(x)
        A = np.array([a for a, _ in o["nonsmooth"]["pieces"]], dtype=float)
        b = np.array([c for _, c in o["nonsmooth"]["pieces"]], dtype=float)
        v = A @ x + b
        active = v >= v.max() - 1e-12
        vals.append(g @ d + np.max(A[active] @ d))
    return max(vals)


def criterion_8():
    rng = np.random.default_rng(8)
    worst = 0.0
    t = 1e-7
    for k in range(50):
        p = builtin(CATALOG_NAMES[k % len(CATALOG_NAMES)])
        x = rng.uniform(*p.start_box)
        d = rng.normal(size=p.dim)
        B = [np.eye(p.dim)] * p.m
        fd = theta_eval(p, x, B, t * d) / t
        worst = max(worst, abs(fd - _max_directional_derivative(p, x, d)))
    return verdict(8, worst <= 1e-4, f"50 random (x, d), max |theta'(x; d) - max_i f_i'(x; d)| "
                                     f"= {worst:.1e} (<= 1e-4)")


def criterion_9():
    diffs, n = [], 0
    env = dict(os.environ)
    with tempfile.TemporaryDirectory() as tmp:
        for name in CATALOG_NAMES:
            outs = []
            for rep in ("a", "b"):
                out = Path(tmp) / name / rep
                subprocess.run([sys.executable, "-m", "paretoqn", "front", "--builtin", name,
                                "--seed", "7", "--out", str(out)], check=False,
                               capture_output=True, env=env)
                outs.append(out)
            for fname in ("front.json", "points.csv"):
                n += 1
                a, b = (o / fname for o in outs)
                if not (a.exists() and b.exists() and a.read_bytes() == b.read_bytes()):
                    diffs.append(f"{name}/{fname}")
    return verdict(9, not diffs, f"{n} file pairs from repeated front --seed 7 runs, "
                                 f"{len(diffs)} differ {diffs if diffs else ''}".rstrip())


def _brute_nondominated(F):
    keep = []
    for j in range(len(F)):
        if not any(np.all(F[i] <= F[j]) and np.any(F[i] < F[j]) for i in range(len(F))):
            keep.append(j)
    return keep


def criterion_10():
    rng = np.random.default_rng(10)
    bad = 0
    for k in range(100):
        N, m = int(rng.integers(1, 201)), int(rng.integers(1, 5))
        if k % 2:
            F = rng.normal(size=(N, m))
        else:
            # small integer grid: many exact ties and duplicates
            F = rng.integers(0, 5, size=(N, m)).astype(float)
        bad += int(nondominated(F) != _brute_nondominated(F))
    return verdict(10, bad == 0, f"100 random point sets, {bad} index-set mismatches")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(criterion):
    ok, detail = criterion()
    assert ok, detail


if __name__ == "__main__":
    passed = 0
    for c in CRITERIA:
        ok, _ = c()
        passed += ok
        print(RESULTS[CRITERIA.index(c) + 1])
    print(f"{passed}/{len(CRITERIA)} criteria passed")
    sys.exit(0 if passed == len(CRITERIA) else 1)
