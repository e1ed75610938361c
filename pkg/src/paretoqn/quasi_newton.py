"""Per-objective Hessian approximations and their updates."""
from __future__ import annotations

import enum

import numpy as np


class UpdateRule(str, enum.Enum):
    BFGS = "bfgs"
    SELF_SCALING_BFGS = "ssbfgs"
    HUANG_BFGS = "huang"
    EXACT_HESSIAN = "newton"
    IDENTITY = "identity"


CURVATURE_EPS = 1e-12


class MetricSet:
    """The m symmetric positive definite metrics B_1..B_m of one solver run.

    ``phi`` is the Broyden-class parameter of the Huang rule (0 gives BFGS,
    values in [0, 1) keep positive definiteness).  Failed updates never
    raise: a skipped update keeps the old matrix, a matrix that loses
    positive definiteness is reset to modulus * I.
    """

    def __init__(self, matrices, rule=UpdateRule.BFGS, moduli=None, phi: float = 0.0):
        self.rule = UpdateRule(rule)
        self.matrices = [np.array(M, dtype=float, copy=True) for M in matrices]
        n = self.matrices[0].shape[0]
        self.moduli = np.ones(len(self.matrices)) if moduli is None else np.asarray(moduli, float)
        if not 0.0 <= phi < 1.0:
            raise ValueError(f"phi must lie in [0, 1), got {phi}")
        self.phi = float(phi)
        self.skips = 0
        self.resets = 0
        self.factors = [None] * len(self.matrices)
        for i in range(len(self.matrices)):
            if self.matrices[i].shape != (n, n):
                raise ValueError("metrics must all be n x n")
            if not self._refactor(i):
                raise np.linalg.LinAlgError(f"initial metric {i} is not positive definite")

    @classmethod
    def initial(cls, problem, rule=UpdateRule.BFGS, x0=None, phi: float = 0.0,
                matrices=None) -> "MetricSet":
        """Starting metrics for ``rule``.

        Identity uses I, the exact Hessian rule uses the Hessians at ``x0``
        and the quasi-Newton rules use modulus_i * I unless ``matrices`` is
        given.
        """
        rule = UpdateRule(rule)
        n, eta = problem.dim, problem.moduli
        if matrices is None:
            if rule is UpdateRule.IDENTITY:
                matrices = [np.eye(n) for _ in eta]
            elif rule is UpdateRule.EXACT_HESSIAN:
                matrices = hessians(problem, x0)
            else:
                matrices = [e * np.eye(n) for e in eta]
        return cls(matrices, rule, eta, phi)

    @property
    def m(self) -> int:
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __len__(self):
        return len(self.matrices)

    def copy(self) -> "MetricSet":
        out = MetricSet(self.matrices, self.rule, self.moduli, self.phi)
        out.skips, out.resets = self.skips, self.resets
        return out

    def _refactor(self, i) -> bool:
        M = self.matrices[i]
        self.matrices[i] = M = 0.5 * (M + M.T)
        try:
            self.factors[i] = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return False
        return True

    def update(self, s, ys, hessians=None) -> list:
        """Apply the update rule for step ``s`` and gradient changes ``ys``.

        ``hessians`` (Hessians at the new point) is required by the exact
        Hessian rule.  Returns one event string per metric:
        "updated", "skipped", "reset" or "kept".
        """
        s = np.asarray(s, dtype=float)
        if not np.any(s):
            raise ValueError("step s must be nonzero")
        events = []
        for i in range(self.m):
            if self.rule is UpdateRule.IDENTITY:
                events.append("kept")
                continue
            if self.rule is UpdateRule.EXACT_HESSIAN:
                if hessians is None:
                    raise ValueError("exact Hessian rule needs the new Hessians")
                new = np.array(hessians[i], dtype=float)
            else:
                y = np.asarray(ys[i], dtype=float)
                sy = float(s @ y)
                if sy <= CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
                    self.skips += 1
                    events.append("skipped")
                    continue
                new = self._quasi_newton(self.matrices[i], s, y, sy)
            old = self.matrices[i]
            self.matrices[i] = new
            if self._refactor(i):
                events.append("updated")
            else:
                self.matrices[i] = self.moduli[i] * np.eye(old.shape[0])
                self._refactor(i)
                self.resets += 1
                events.append("reset")
        return events

    def _quasi_newton(self, B, s, y, sy):
        Bs = B @ s
        sBs = float(s @ Bs)
        bfgs_part = B - np.outer(Bs, Bs) / sBs
        if self.rule is UpdateRule.SELF_SCALING_BFGS:
            # Oren-Luenberger scaling of the retained curvature
            return (sy / sBs) * bfgs_part + np.outer(y, y) / sy
        out = bfgs_part + np.outer(y, y) / sy
        if self.rule is UpdateRule.HUANG_BFGS and self.phi:
            # Broyden class: (1 - phi) * BFGS + phi * DFP
            v = y / sy - Bs / sBs
            out = out + self.phi * sBs * np.outer(v, v)
        return out


def bfgs_update(B, s, y):
    """Plain BFGS update of a single matrix (no safeguards)."""
    B = np.asarray(B, dtype=float)
    Bs = B @ s
    return B - np.outer(Bs, Bs) / (s @ Bs) + np.outer(y, y) / (s @ y)


def sigma_floor(M) -> float:
    """Smallest eigenvalue over all metrics."""
    return min(float(np.linalg.eigvalsh(B)[0]) for B in M)


def hessians(problem, x):
    if x is None:
        raise ValueError("exact Hessian rule needs a point")
    out = []
    for i, obj in enumerate(problem.objectives):
        if obj.smooth.hess is None:
            raise ValueError(f"objective {i} has no Hessian oracle")
        out.append(np.asarray(obj.smooth.hess(np.asarray(x, dtype=float)), dtype=float))
    return out
