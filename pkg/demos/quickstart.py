"""
A first run on a one-dimensional bi-objective problem
=====================================================

Two parabolas with minima at 0 and 1.  Every point of [0, 1] is Pareto
optimal, and the solver stops at one of them.
"""

from paretoqn import SolverConfig, builtin, solve

p = builtin("BIQUAD")
r = solve(p, [2.0], SolverConfig(rule="bfgs"))

print(r.status.value, "after", r.iterations, "iterations")
print("x =", r.x, " F =", r.F)

# one line per accepted step
for rec in r.records:
    print(f"k={rec.k}  x={rec.x[0]: .6f}  |d|={rec.norm_d:.2e}  alpha={rec.alpha:.2e}  step={rec.step}")

# at the final point the search direction has vanished
print("certificate:", r.certificate)
assert 0.0 <= r.x[0] <= 1.0
