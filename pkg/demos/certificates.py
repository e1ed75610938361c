"""
Stationarity certificates
=========================

The search direction d(x) is zero exactly at Pareto stationary points, and
alpha(x) < 0 elsewhere.  Scanning a line makes the dichotomy visible.
"""

import numpy as np
from paretoqn import builtin, stationarity_certificate

p = builtin("BIQUAD")
for x in np.linspace(-1.0, 2.0, 13):
    c = stationarity_certificate(p, [x])
    mark = "stationary" if c.norm_d <= 1e-7 else ""
    print(f"x = {x:5.2f}   |d| = {c.norm_d:.3e}   alpha = {c.alpha: .3e}   {mark}")

# with an l1 term both objectives share the kink at 0
pl1 = builtin("BIQUAD-L1")
print("BIQUAD-L1 at 0:", stationarity_certificate(pl1, [0.0]))

# the centroid of the triangle is stationary for the three-point problem
m3 = builtin("QUAD-M3")
print("QUAD-M3 at (1/3, 1/3):", stationarity_certificate(m3, [1 / 3, 1 / 3]))
print("QUAD-M3 at (1, 1):    ", stationarity_certificate(m3, [1.0, 1.0]))
