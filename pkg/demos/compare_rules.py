"""
Metric update rules side by side
================================

The same starts on a two-dimensional nonsmooth problem, once per metric rule.
The exact Hessian rule uses the true curvature; identity is plain proximal
steepest descent.
"""

import time

from paretoqn import SolverConfig, builtin, solve
from paretoqn.driver import sample_starts

p = builtin("CB3-COMP")
starts = sample_starts(p, 10, seed=1)

print(f"{'rule':<10}{'iters':>8}{'max |d|':>12}{'skips':>7}{'time s':>9}")
for rule in ["bfgs", "ssbfgs", "huang", "newton", "identity"]:
    t0 = time.perf_counter()
    runs = [solve(p, x0, SolverConfig(rule=rule)) for x0 in starts]
    wall = time.perf_counter() - t0
    iters = sum(r.iterations for r in runs)
    worst = max(r.certificate.norm_d for r in runs)
    skips = sum(r.skips for r in runs)
    print(f"{rule:<10}{iters:8d}{worst:12.1e}{skips:7d}{wall:9.3f}")
