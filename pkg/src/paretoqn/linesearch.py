"""Backtracking Armijo rule for vector objectives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import CompositeProblem, eval_F


@dataclass(frozen=True)
class ArmijoParams:
    """rho: sufficient-decrease factor, zeta: backtracking factor."""

    rho: float = 1e-4
    zeta: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.zeta < 1:
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


class LineSearchError(RuntimeError):
    """No trial step satisfied the Armijo test within max_backtracks.

    ``trials`` holds (step, F(x + step * d)) for every rejected trial.
    """

    def __init__(self, msg, trials):
        super().__init__(msg)
        self.trials = trials


def armijo_accepts(F0, F_trial, step, rho, alpha) -> np.ndarray:
    """Per-objective test f_i(x + step d) <= f_i(x) + step * rho * alpha."""
    return F_trial <= F0 + step * rho * alpha


def armijo(p: CompositeProblem, x, d, alpha: float, prm: ArmijoParams = ArmijoParams(),
           F0=None):
    """Largest step zeta**j, j = 0, 1, ..., passing the test for every objective.

    Returns ``(step, backtracks, F(x + step * d))``.
    """
    if not alpha < 0:
        raise ValueError(f"alpha must be negative, got {alpha}")
    d = np.asarray(d, dtype=float)
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    x = p.check_point(x)
    F0 = eval_F(p, x) if F0 is None else F0
    trials = []
    step = 1.0
    for j in range(prm.max_backtracks + 1):
        Ft = eval_F(p, x + step * d)
        if np.all(armijo_accepts(F0, Ft, step, prm.rho, alpha)):
            return step, j, Ft
        trials.append((step, Ft))
        step *= prm.zeta
    raise LineSearchError(
        f"Armijo test failed for {len(trials)} trial steps (last {trials[-1][0]:.3e})", trials)
