"""Search-direction subproblem at a fixed point x.

The model

    theta(x, d) = max_i  grad g_i(x)^T d + 1/2 d^T B_i d + h_i(x + d) - h_i(x)

is, for max-of-affine h_i, a max of K quadratic pieces

    q_k(d) = 1/2 d^T B_{i(k)} d + c_k^T d + r_k.

``min_d theta`` is solved through its concave dual over the probability
simplex on the pieces,

    psi(lam) = min_d sum_k lam_k q_k(d) = -1/2 c(lam)^T H(lam)^{-1} c(lam) + r(lam),

whose gradient is the vector of piece values at d(lam).  The duality gap
``max_k q_k(d(lam)) - psi(lam)`` certifies the returned direction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .problem import CompositeProblem, as_matrices, fd_step, subgradient_h


class MetricError(np.linalg.LinAlgError):
    """A metric combination H(lam) is not positive definite."""


@dataclass
class PieceModel:
    """Quadratic pieces of theta(x, .) at a fixed x.

    ``owner[k]`` is the objective of piece k, ``slopes[k]`` the slope a_k of
    the originating affine piece of h_{owner[k]}.
    """

    x: np.ndarray
    metrics: list
    owner: np.ndarray
    c: np.ndarray
    r: np.ndarray
    slopes: np.ndarray
    grads: np.ndarray
    nonsmooth: list

    @property
    def K(self) -> int:
        return self.owner.size

    @property
    def m(self) -> int:
        return len(self.metrics)

    @property
    def n(self) -> int:
        return self.x.size

    def piece_values(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        quad = np.array([d @ self.metrics[i] @ d for i in range(self.m)])
        return 0.5 * quad[self.owner] + self.c @ d + self.r

    def value(self, d) -> float:
        return float(np.max(self.piece_values(d)))

    def aggregate(self, lam) -> np.ndarray:
        """Per-objective weights w_j = sum of lam_k over pieces of objective j."""
        return np.bincount(self.owner, weights=lam, minlength=self.m)


def build_pieces(p: CompositeProblem, x, B) -> PieceModel:
    x = p.check_point(x)
    mats = as_matrices(B)
    if len(mats) != p.m or any(M.shape != (p.dim, p.dim) for M in mats):
        raise ValueError(f"expected {p.m} metrics of shape {(p.dim, p.dim)}")
    grads = p.grads(x)
    owner, c, r, slopes = [], [], [], []
    for i, obj in enumerate(p.objectives):
        h = obj.nonsmooth
        vals = h.piece_values(x)
        hx = vals.max()
        for j in range(h.n_pieces):
            owner.append(i)
            c.append(grads[i] + h.A[j])
            r.append(vals[j] - hx)
            slopes.append(h.A[j])
    return PieceModel(x, mats, np.array(owner), np.array(c), np.array(r),
                      np.array(slopes), grads, [o.nonsmooth for o in p.objectives])


def theta_eval(p: CompositeProblem, x, B, d):
    """theta(x, d) evaluated from the problem oracles, without piece expansion.

    ``d`` may be a single direction (n,) or a batch (N, n).
    """
    x = p.check_point(x)
    mats = as_matrices(B)
    D = np.atleast_2d(np.asarray(d, dtype=float))
    grads = p.grads(x)
    vals = np.empty((D.shape[0], p.m))
    for i, obj in enumerate(p.objectives):
        h = obj.nonsmooth
        quad = np.einsum("ij,jk,ik->i", D, mats[i], D)
        vals[:, i] = D @ grads[i] + 0.5 * quad + h.value(x + D) - float(h.value(x))
    out = vals.max(axis=1)
    return float(out[0]) if np.ndim(d) == 1 else out


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} by sort and threshold."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def dual_eval(model: PieceModel, lam):
    """Dual value psi(lam), primal candidate d(lam) and the gradient of psi.

    The gradient entries are the piece values q_k(d(lam)).
    """
    lam = np.asarray(lam, dtype=float)
    w = model.aggregate(lam)
    H = sum(wi * M for wi, M in zip(w, model.metrics) if wi != 0.0)
    c = lam @ model.c
    r = float(lam @ model.r)
    try:
        factor = cho_factor(H)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise MetricError(f"H(lam) is not positive definite: {exc}") from None
    d = -cho_solve(factor, c)
    psi = 0.5 * float(c @ d) + r
    return psi, d, model.piece_values(d)


@dataclass
class SubproblemSolution:
    direction: np.ndarray
    alpha: float
    weights: np.ndarray
    subgradients: np.ndarray
    kkt_residual: float
    gap: float
    dual_iterations: int
    lam: np.ndarray
    psi: float
    exact: bool
    subgradients_valid: bool

    @property
    def norm_d(self) -> float:
        return float(np.linalg.norm(self.direction))


def _curvature_bound(model: PieceModel, d, lam) -> float:
    """Estimate of the Lipschitz constant of grad psi at lam.

    The Hessian of psi is -G^T H(lam)^{-1} G with G the piece gradients at
    d(lam).
    """
    G = np.array([model.metrics[i] @ d for i in model.owner]) + model.c
    w = model.aggregate(lam)
    H = sum(wi * M for wi, M in zip(w, model.metrics) if wi != 0.0)
    mu = float(np.linalg.eigvalsh(H)[0])
    return max(float(np.linalg.norm(G, 2)) ** 2 / mu, 1e-12)


def solve_model(model: PieceModel, tol_gap: float = 1e-10, max_iter: int = 10_000,
                weak_duality_tol: float = 1e-12) -> SubproblemSolution:
    """Maximise psi over the simplex by projected gradient ascent.

    Steps start at 1/L from the curvature estimate, backtrack on the usual
    sufficient-ascent test and grow after each accepted step.  If the
    projection stalls a Frank-Wolfe step toward the best vertex is taken.
    Each time the support of lam settles, a Newton solve of the KKT system
    restricted to that support is tried; near the optimum psi is flat to
    second order, so ascent tests alone cannot resolve the last digits.
    """
    if not tol_gap > 0:
        raise ValueError("tol_gap must be > 0")
    K = model.K
    lam = np.full(K, 1.0 / K)
    psi, d, g = dual_eval(model, lam)
    step = 1.0 / _curvature_bound(model, d, lam)
    best = (np.inf, lam, psi, d, g)
    tried = set()
    prev_support = None
    it = 0
    while True:
        gap = float(g.max()) - psi
        if gap < -weak_duality_tol:
            raise ArithmeticError(f"weak duality violated: gap {gap:.3e}")
        if gap < best[0]:
            best = (gap, lam, psi, d, g)
        if best[0] <= tol_gap or it >= max_iter:
            break
        support = tuple(np.nonzero(lam > 0)[0])
        settled = support == prev_support and support not in tried
        # retry on a geometric schedule too: an early attempt may start too far out
        if settled or (it & (it - 1)) == 0:
            tried.add(support)
            polished = _polish(model, lam, d, g)
            if polished is not None:
                gap_p = float(polished[2].max()) - polished[0]
                if gap_p < -weak_duality_tol:
                    raise ArithmeticError(f"weak duality violated: gap {gap_p:.3e}")
                if gap_p < best[0]:
                    best = (gap_p, polished[3], polished[0], polished[1], polished[2])
                    if gap_p <= tol_gap:
                        break
        prev_support = support
        it += 1
        moved = False
        slack = 1e-13 * max(1.0, abs(psi))
        for _ in range(60):
            trial = project_simplex(lam + step * g)
            delta = trial - lam
            dd = float(delta @ delta)
            if dd == 0.0:
                break
            psi_t, d_t, g_t = dual_eval(model, trial)
            if psi_t >= psi + float(g @ delta) - dd / (2 * step) - slack:
                lam, psi, d, g = trial, psi_t, d_t, g_t
                moved = True
                break
            step *= 0.5
        if moved:
            step *= 2.0
            continue
        lam, psi, d, g = _frank_wolfe_step(model, lam, psi, d, g)
        step = 1.0 / _curvature_bound(model, d, lam)

    gap, lam, psi, d, g = best
    if g.max() > 0.0:
        # theta(x, 0) = 0 exactly, so d = 0 beats a candidate that rounds above it
        d, g = np.zeros_like(d), model.r.copy()
        gap = -psi
    return _assemble(model, lam, psi, d, g, gap, it, exact=gap <= tol_gap)


def _polish(model: PieceModel, lam, d, g, max_newton: int = 50):
    """Semismooth Newton refinement of the KKT system of min_d max_k q_k(d).

    Unknowns (d, lam, t) with

        sum_k lam_k grad q_k(d) = 0,   sum_k lam_k = 1,
        phi(lam_k, t - q_k(d)) = 0     for every piece,

    where phi is the Fischer-Burmeister function, so complementarity and the
    sign conditions are folded into the equations and the support is found
    by the iteration itself.  Globalised by backtracking on 1/2 ||F||^2.
    Returns dual_eval at the clipped, renormalised weights, or None.
    """
    n, K = model.n, model.K
    mats = [model.metrics[i] for i in model.owner]

    def residual(z):
        zd, zl, zt = z[:n], z[n:n + K], z[-1]
        grads = np.array([M @ zd for M in mats]) + model.c
        qv = 0.5 * np.einsum("i,kij,j->k", zd, np.array(mats), zd) + model.c @ zd + model.r
        b = zt - qv
        rho = np.hypot(zl, b)
        F = np.concatenate([zl @ grads, [zl.sum() - 1.0], rho - zl - b])
        return F, grads, zl, b, rho

    z = np.concatenate([d, lam, [float(g.max())]])
    F, grads, zl, b, rho = residual(z)
    merit = 0.5 * float(F @ F)
    for _ in range(max_newton):
        if np.sqrt(2 * merit) <= 1e-15:
            break
        J = np.zeros((n + 1 + K, n + K + 1))
        J[:n, :n] = sum(l * M for l, M in zip(zl, mats))
        J[:n, n:n + K] = grads.T
        J[n, n:n + K] = 1.0
        safe = rho > 0
        da = np.where(safe, zl / np.where(safe, rho, 1.0), 1 / np.sqrt(2)) - 1.0
        db = np.where(safe, b / np.where(safe, rho, 1.0), 1 / np.sqrt(2)) - 1.0
        rows = slice(n + 1, n + 1 + K)
        J[rows, :n] = -db[:, None] * grads
        J[rows, n:n + K] = np.diag(da)
        J[rows, -1] = db
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        slope = float(F @ (J @ step))
        if not np.all(np.isfinite(step)) or slope >= 0:
            step = -J.T @ F
            slope = -float(step @ step)
        t = 1.0
        while t > 1e-12:
            trial = z + t * step
            Ft, grads_t, zl_t, b_t, rho_t = residual(trial)
            mt = 0.5 * float(Ft @ Ft)
            if mt <= merit + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        z, F, grads, zl, b, rho, merit = trial, Ft, grads_t, zl_t, b_t, rho_t, mt
    full = np.maximum(z[n:n + K], 0.0)
    if full.sum() <= 0:
        return None
    full /= full.sum()
    try:
        psi, dd, gg = dual_eval(model, full)
    except MetricError:
        return None
    return psi, dd, gg, full


def _frank_wolfe_step(model, lam, psi, d, g):
    j = int(np.argmax(g))
    u = -lam.copy()
    u[j] += 1.0
    slope = float(g @ u)
    gamma = 1.0
    while gamma > 1e-16:
        trial = lam + gamma * u
        psi_t, d_t, g_t = dual_eval(model, trial)
        if psi_t >= psi + 0.5 * gamma * slope:
            return trial, psi_t, d_t, g_t
        gamma *= 0.5
    return lam, psi, d, g


def _assemble(model, lam, psi, d, g, gap, iterations, exact) -> SubproblemSolution:
    w = model.aggregate(lam)
    xd = model.x + d
    xi = np.zeros((model.m, model.n))
    valid = True
    for j, h in enumerate(model.nonsmooth):
        ks = np.nonzero(model.owner == j)[0]
        if w[j] > 0:
            xi[j] = lam[ks] @ model.slopes[ks] / w[j]
            # a convex combination of slopes is in the subdifferential at x + d
            # only if every supported piece is active there
            vals = h.piece_values(xd)
            support = lam[ks] > 0
            if np.any(vals.max() - vals[support] > 1e-8):
                valid = False
        else:
            xi[j] = subgradient_h(h, xd)
    resid = sum(w[j] * (model.grads[j] + model.metrics[j] @ d + xi[j]) for j in range(model.m))
    return SubproblemSolution(
        direction=d, alpha=float(g.max()), weights=w, subgradients=xi,
        kkt_residual=float(np.linalg.norm(resid)), gap=float(gap),
        dual_iterations=iterations, lam=lam, psi=float(psi), exact=bool(exact),
        subgradients_valid=valid)


def solve(p: CompositeProblem, x, B, tol_gap: float = 1e-10,
          max_iter: int = 10_000) -> SubproblemSolution:
    """Direction d(x) and value alpha(x) for metrics ``B``."""
    return solve_model(build_pieces(p, x, B), tol_gap=tol_gap, max_iter=max_iter)


def directional_derivative_check(p: CompositeProblem, x, d, h_fd=None):
    """Compare the one-sided derivative of t -> theta(x, t d) with max_i f_i'(x; d).

    Both sides are forward differences at t = 0+.  Returns (lhs, rhs, |lhs - rhs|).
    """
    x = p.check_point(x)
    d = np.asarray(d, dtype=float)
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    t = fd_step(x) if h_fd is None else float(h_fd)
    # theta(x, 0) = 0 and the derivative does not depend on the metrics
    B = [np.eye(p.dim)] * p.m
    lhs = theta_eval(p, x, B, t * d) / t
    F0 = np.array([o.value(x) for o in p.objectives])
    Ft = np.array([o.value(x + t * d) for o in p.objectives])
    rhs = float(np.max((Ft - F0) / t))
    return lhs, rhs, abs(lhs - rhs)
