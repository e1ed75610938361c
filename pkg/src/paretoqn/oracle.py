"""Brute-force and finite-difference cross-checks.

Nothing here calls the dual solver or the driver's dominance filter; these
routines only evaluate oracles and compare numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import SmoothOracle, as_matrices
from .subproblem import build_pieces, theta_eval

MAX_GRID_DIM = 3
# nodes evaluated per refinement level, and per batch of theta_eval
LEVEL_NODES = 60_000
BATCH = 250_000


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid: center + resolution * k with |resolution * k|_inf <= radius."""

    center: np.ndarray
    radius: float
    resolution: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if c.ndim != 1:
            raise ValueError("grid center must be a vector")
        if c.size > MAX_GRID_DIM:
            raise ValueError(f"grid oracle supports n <= {MAX_GRID_DIM}, got n = {c.size}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")

    @property
    def half_width(self) -> int:
        """Number of grid steps from the center to the box edge."""
        return int(np.floor(self.radius / self.resolution + 1e-9))

    @property
    def n_nodes(self) -> int:
        return (2 * self.half_width + 1) ** self.center.size


@dataclass
class GridMin:
    """Grid minimizer of theta.  Unpacks as ``d, theta = grid_min_theta(...)``.

    ``bound`` is Lip * resolution * sqrt(n) / 2 with Lip an upper bound on the
    Lipschitz constant of theta over the grid box: the node value is within
    ``bound`` of the minimum of theta over the box.
    """

    d: np.ndarray
    theta: float
    bound: float
    lipschitz: float
    evaluations: int
    levels: int

    def __iter__(self):
        return iter((self.d, self.theta))


def _axis(lo: int, hi: int, step: int) -> np.ndarray:
    k = np.arange(lo, hi + 1, step)
    if k[-1] != hi:
        k = np.append(k, hi)
    return k


def _evaluate(p, x, B, spec: GridSpec, axes):
    """theta at the nodes of the product of integer ``axes``."""
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    D = spec.center + spec.resolution * K
    vals = np.concatenate([np.atleast_1d(theta_eval(p, x, B, D[i:i + BATCH]))
                           for i in range(0, len(D), BATCH)])
    return K, vals


def _lipschitz(model, mats, lo_d, hi_d) -> float:
    """Upper bound on |grad q_k| over the box [lo_d, hi_d] for every piece k."""
    mid, half = 0.5 * (lo_d + hi_d), 0.5 * (hi_d - lo_d)
    norms = np.array([np.linalg.norm(M, 2) for M in mats])
    best = 0.0
    for k in range(model.K):
        i = model.owner[k]
        g = np.linalg.norm(mats[i] @ mid + model.c[k]) + norms[i] * np.linalg.norm(half)
        best = max(best, g)
    return float(best)


def grid_min_theta(p, x, B, spec: GridSpec, exhaustive: bool = False) -> GridMin:
    """Minimum of theta(x, .) over the nodes of ``spec``.

    The default coarse-to-fine search returns the same minimum value as
    evaluating every node.  Each level keeps only the coarse nodes whose
    value is within Lip * (coarse covering radius) of the best one, where
    Lip is recomputed from the piece data on the current box; since the
    coarse nodes are fine nodes, the fine minimizer can never be discarded.
    """
    x = p.check_point(x)
    n = p.dim
    if spec.center.size != n:
        raise ValueError(f"grid center has dimension {spec.center.size}, problem has {n}")
    if n > MAX_GRID_DIM:
        raise ValueError(f"grid oracle supports n <= {MAX_GRID_DIM}, got n = {n}")
    mats = as_matrices(B)
    model = build_pieces(p, x, mats)
    h, N = spec.resolution, spec.half_width
    edge = N * h * np.ones(n)
    lip_box = _lipschitz(model, mats, spec.center - edge, spec.center + edge)
    bound = lip_box * h * np.sqrt(n) / 2

    lo, hi = -N * np.ones(n, dtype=int), N * np.ones(n, dtype=int)
    evaluations = levels = 0
    step = 1 if exhaustive else max(1, int(np.ceil((2 * N + 1) / LEVEL_NODES ** (1 / n))))
    while True:
        axes = [_axis(lo[j], hi[j], step) for j in range(n)]
        K, vals = _evaluate(p, x, mats, spec, axes)
        evaluations += len(vals)
        levels += 1
        best = int(np.argmin(vals))
        if step == 1:
            return GridMin(spec.center + h * K[best], float(vals[best]), float(bound),
                           lip_box, evaluations, levels)
        lip = _lipschitz(model, mats, spec.center + h * lo, spec.center + h * hi)
        # every fine node lies within step/2 grid units (per axis) of a coarse node
        reach = lip * step * h * np.sqrt(n) / 2
        keep = K[vals <= vals[best] + reach]
        pad = (step + 1) // 2
        lo = np.maximum(lo, keep.min(axis=0) - pad)
        hi = np.minimum(hi, keep.max(axis=0) + pad)
        extent = int(np.max(hi - lo)) + 1
        step = max(1, min(step // 2, int(np.ceil(extent / LEVEL_NODES ** (1 / n)))))


def fd_check_gradient(oracle: SmoothOracle, x, h_fd: float = 1e-6) -> float:
    """Infinity-norm gap between grad(x) and a central-difference gradient."""
    if not h_fd > 0:
        raise ValueError(f"h_fd must be positive, got {h_fd}")
    x = np.asarray(x, dtype=float).reshape(oracle.dim)
    fd = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h_fd
        fd[j] = (oracle.value(x + e) - oracle.value(x - e)) / (2 * h_fd)
    return float(np.max(np.abs(np.asarray(oracle.grad(x), dtype=float) - fd)))


def dominance_bruteforce(points, tie_tol: float = 0.0) -> list:
    """Indices of points no other point dominates, by checking every pair.

    u dominates v iff u <= v componentwise and u != v.  With ``tie_tol`` > 0,
    pairs within tie_tol of each other (max norm) are treated as equal.
    """
    P = [np.asarray(p, dtype=float) for p in points]
    out = []
    for v, pv in enumerate(P):
        dominated = False
        for u, pu in enumerate(P):
            if u == v or np.max(np.abs(pu - pv)) <= tie_tol:
                continue
            if all(a <= b for a, b in zip(pu, pv)) and any(a != b for a, b in zip(pu, pv)):
                dominated = True
                break
        if not dominated:
            out.append(v)
    return out


def grid_spec_for(x_dim: int, d, resolution: float = 1e-3, center=None) -> GridSpec:
    """Box of radius 4 |d| + 1 around ``center`` (default the origin)."""
    center = np.zeros(x_dim) if center is None else center
    return GridSpec(center, 4 * float(np.linalg.norm(d)) + 1, resolution)

