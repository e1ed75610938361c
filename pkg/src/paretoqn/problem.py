"""Composite multiobjective problems f_i = g_i + h_i.

Each ``g_i`` is a smooth, strongly convex oracle with a declared modulus and
each ``h_i`` is a max of affine functions.  The module also ships a small
catalog of test problems with known Pareto sets and a JSON loader.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np


class ProblemError(ValueError):
    """Raised for malformed problem definitions or inputs of the wrong shape."""


@dataclass(frozen=True)
class SmoothOracle:
    """Smooth strongly convex function ``g`` on R^n.

    ``modulus`` is the declared strong convexity constant; it is checked by
    :func:`validate`, never inferred.  ``params`` keeps the JSON description
    for oracles built from a file or a factory.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    modulus: float
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: Optional[dict] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ProblemError(f"dim must be positive, got {self.dim}")
        if not self.modulus > 0:
            raise ProblemError(f"modulus must be > 0, got {self.modulus}")


def quadratic(Q, q=None, c=0.0, modulus=None) -> SmoothOracle:
    """g(x) = 1/2 x^T Q x + q^T x + c.

    When ``modulus`` is omitted it is set to the smallest eigenvalue of Q.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise ProblemError(f"Q must be square, got shape {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
        raise ProblemError("Q must be symmetric")
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float).reshape(n)
    c = float(c)
    if modulus is None:
        modulus = float(np.linalg.eigvalsh(Q)[0])

    def value(x):
        return float(0.5 * x @ Q @ x + q @ x + c)

    def grad(x):
        return Q @ x + q

    def hess(x):
        return Q.copy()

    params = {"kind": "quadratic", "Q": Q.tolist(), "q": q.tolist(), "c": c,
              "modulus": float(modulus)}
    return SmoothOracle(n, value, grad, float(modulus), hess, params)


def centered_quadratic(center, scale=1.0) -> SmoothOracle:
    """g(x) = scale/2 * ||x - center||^2."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    n = center.size
    Q = scale * np.eye(n)
    return quadratic(Q, -scale * center, 0.5 * scale * center @ center, scale)


def logquad(Q, a, q=None, c=0.0, modulus=None) -> SmoothOracle:
    """g(x) = 1/2 x^T Q x + q^T x + c + log(1 + exp(a^T x)).

    The softplus term is convex, so the modulus defaults to lambda_min(Q).
    """
    base = quadratic(Q, q, c, modulus)
    a = np.asarray(a, dtype=float).reshape(base.dim)

    def value(x):
        return base.value(x) + float(np.logaddexp(0.0, a @ x))

    def grad(x):
        s = _sigmoid(a @ x)
        return base.grad(x) + s * a

    def hess(x):
        s = _sigmoid(a @ x)
        return base.hess(x) + s * (1.0 - s) * np.outer(a, a)

    params = dict(base.params, kind="logquad", a=a.tolist())
    return SmoothOracle(base.dim, value, grad, base.modulus, hess, params)


def _sigmoid(t):
    if t >= 0:
        return 1.0 / (1.0 + np.exp(-t))
    e = np.exp(t)
    return e / (1.0 + e)


class MaxAffine:
    """Polyhedral convex function h(x) = max_j (a_j^T x + b_j)."""

    def __init__(self, slopes, offsets):
        A = np.asarray(slopes, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        b = np.asarray(offsets, dtype=float).reshape(-1)
        if A.shape[0] < 1 or A.shape[0] != b.size:
            raise ProblemError("MaxAffine needs J >= 1 pieces with matching slopes/offsets")
        self.A = A
        self.b = b
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @classmethod
    def zero(cls, dim: int) -> "MaxAffine":
        return cls(np.zeros((1, dim)), [0.0])

    @classmethod
    def from_pieces(cls, pieces) -> "MaxAffine":
        """Build from ``[(a_1, b_1), (a_2, b_2), ...]``."""
        pieces = list(pieces)
        A = [np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in pieces]
        return cls(np.vstack(A) if A else np.zeros((0, 1)), [b for _, b in pieces])

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.A.shape[0]

    def pieces(self):
        return [(self.A[j].copy(), float(self.b[j])) for j in range(self.n_pieces)]

    def piece_values(self, x):
        """Values of every affine piece; ``x`` may be (n,) or (N, n)."""
        return np.asarray(x, dtype=float) @ self.A.T + self.b

    def value(self, x):
        return np.max(self.piece_values(x), axis=-1)

    def active_piece(self, x) -> int:
        # argmax returns the first maximiser, i.e. the lowest index on ties
        return int(np.argmax(self.piece_values(x)))

    def __repr__(self):
        return f"MaxAffine(J={self.n_pieces}, n={self.dim})"


def subgradient_h(h: MaxAffine, x) -> np.ndarray:
    """Slope of the active piece of ``h`` at ``x`` (lowest index on ties)."""
    x = np.asarray(x, dtype=float)
    return h.A[h.active_piece(x)].copy()


@dataclass(frozen=True)
class CompositeObjective:
    smooth: SmoothOracle
    nonsmooth: MaxAffine

    def __post_init__(self):
        if self.smooth.dim != self.nonsmooth.dim:
            raise ProblemError(
                f"smooth dim {self.smooth.dim} != nonsmooth dim {self.nonsmooth.dim}")

    def value(self, x) -> float:
        return self.smooth.value(x) + float(self.nonsmooth.value(x))


@dataclass(frozen=True)
class ParetoHint:
    """Pareto set given as the convex hull of ``vertices`` (rows)."""

    vertices: np.ndarray

    def distance(self, x) -> float:
        """Euclidean distance from ``x`` to the convex hull of the vertices.

        Exact: every face of the hull is spanned by some subset of at most
        n + 1 vertices, so the nearest point is the best affine projection
        with nonnegative barycentric weights over all such subsets.
        """
        V = np.asarray(self.vertices, dtype=float)
        x = np.asarray(x, dtype=float)
        best = np.inf
        for size in range(1, min(len(V), x.size + 1) + 1):
            for idx in itertools.combinations(range(len(V)), size):
                P = V[list(idx)]
                w = _affine_weights(P, x)
                if w is None or np.any(w < -1e-14):
                    continue
                best = min(best, float(np.linalg.norm(w @ P - x)))
        return best


def _affine_weights(P, x):
    """Weights w, sum(w) = 1, minimising ||w @ P - x||."""
    if len(P) == 1:
        return np.ones(1)
    base = P[0]
    D = (P[1:] - base).T
    coef, *_ = np.linalg.lstsq(D, x - base, rcond=None)
    if np.linalg.matrix_rank(D) < D.shape[1]:
        return None
    return np.concatenate([[1.0 - coef.sum()], coef])


@dataclass(frozen=True)
class CompositeProblem:
    objectives: tuple
    start_box: tuple
    pareto_hint: Optional[ParetoHint] = None
    name: str = "problem"

    def __post_init__(self):
        objs = tuple(self.objectives)
        object.__setattr__(self, "objectives", objs)
        if len(objs) < 2:
            raise ProblemError(f"need at least 2 objectives, got {len(objs)}")
        dims = {o.smooth.dim for o in objs}
        if len(dims) != 1:
            raise ProblemError(f"objectives have unequal dims {sorted(dims)}")
        n = dims.pop()
        lo, hi = (np.asarray(v, dtype=float).reshape(-1) for v in self.start_box)
        if lo.size != n or hi.size != n:
            raise ProblemError(f"start_box must have {n} entries per bound")
        if not np.all(lo < hi):
            raise ProblemError("start_box requires lo < hi componentwise")
        object.__setattr__(self, "start_box", (lo, hi))

    @property
    def dim(self) -> int:
        return self.objectives[0].smooth.dim

    @property
    def m(self) -> int:
        return len(self.objectives)

    @property
    def moduli(self) -> np.ndarray:
        return np.array([o.smooth.modulus for o in self.objectives])

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ProblemError(f"point has dimension {x.size}, problem has {self.dim}")
        return x

    def smooth_values(self, x) -> np.ndarray:
        x = self.check_point(x)
        return np.array([o.smooth.value(x) for o in self.objectives])

    def nonsmooth_values(self, x) -> np.ndarray:
        x = self.check_point(x)
        return np.array([float(o.nonsmooth.value(x)) for o in self.objectives])

    def grads(self, x) -> np.ndarray:
        """Gradients of the smooth parts, one row per objective."""
        x = self.check_point(x)
        return np.vstack([o.smooth.grad(x) for o in self.objectives])


def eval_F(p: CompositeProblem, x) -> np.ndarray:
    """Objective vector F(x) = (g_i(x) + h_i(x))_i."""
    return p.smooth_values(x) + p.nonsmooth_values(x)


# ---------------------------------------------------------------- validation

@dataclass
class Violation:
    objective: int
    check: str
    point: np.ndarray
    detail: str


@dataclass
class ValidationReport:
    samples: int
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, check: str) -> int:
        return sum(v.check == check for v in self.violations)

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "ok": self.ok,
            "violations": [
                {"objective": v.objective, "check": v.check,
                 "point": np.asarray(v.point).tolist(), "detail": v.detail}
                for v in self.violations],
            "notes": list(self.notes),
        }


def fd_step(x) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(x))))


def central_gradient(fun, x, h):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def validate(p: CompositeProblem, samples: int = 10, seed: int = 0,
             rtol: float = 1e-5) -> ValidationReport:
    """Sample ``samples`` points from the start box and check every oracle.

    Checks gradient against central differences, Hessian against differenced
    gradients and strong convexity (Cholesky of hess - modulus*I).  Oracles
    without a Hessian get a two-point monotone-gradient test instead.
    """
    if samples < 1:
        raise ProblemError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = p.start_box
    pts = rng.uniform(lo, hi, size=(samples, p.dim))
    report = ValidationReport(samples)
    for i, obj in enumerate(p.objectives):
        g = obj.smooth
        if g.hess is None:
            report.notes.append(
                f"objective {i}: no Hessian, strong convexity checked by monotone-gradient pairs")
        for x in pts:
            h = fd_step(x)
            fd = central_gradient(g.value, x, h)
            gx = g.grad(x)
            err = float(np.max(np.abs(fd - gx)))
            if err > rtol * max(1.0, float(np.max(np.abs(gx)))):
                report.violations.append(Violation(i, "gradient", x.copy(), f"max abs err {err:.3e}"))
            if g.hess is not None:
                H = np.asarray(g.hess(x), dtype=float)
                Hfd = np.column_stack([
                    (g.grad(x + h * e) - g.grad(x - h * e)) / (2 * h) for e in np.eye(p.dim)])
                herr = float(np.max(np.abs(H - Hfd)))
                if herr > rtol * max(1.0, float(np.max(np.abs(H)))):
                    report.violations.append(Violation(i, "hessian", x.copy(), f"max abs err {herr:.3e}"))
                if not _strongly_convex_at(H, g.modulus):
                    lam_min = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
                    report.violations.append(Violation(
                        i, "strong_convexity", x.copy(),
                        f"lambda_min(hess) = {lam_min:.6g} < modulus {g.modulus:.6g}"))
        if g.hess is None:
            for x, y in zip(pts, rng.uniform(lo, hi, size=(samples, p.dim))):
                lhs = float((g.grad(x) - g.grad(y)) @ (x - y))
                rhs = g.modulus * float((x - y) @ (x - y))
                if lhs < rhs * (1 - 1e-9) - 1e-12:
                    report.violations.append(Violation(
                        i, "strong_convexity", x.copy(),
                        f"<grad diff, x - y> = {lhs:.6g} < modulus*|x-y|^2 = {rhs:.6g}"))
    return report


def _strongly_convex_at(H, modulus) -> bool:
    H = 0.5 * (H + H.T)
    # tolerance so that an exact modulus (hess == modulus*I) passes
    shift = modulus - 1e-10 * max(1.0, float(np.max(np.abs(H))))
    try:
        np.linalg.cholesky(H - shift * np.eye(H.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


# ------------------------------------------------------------------- catalog

def _abs1():
    return MaxAffine([[1.0], [-1.0]], [0.0, 0.0])


def _biquad(l1: bool) -> CompositeProblem:
    h = _abs1 if l1 else (lambda: MaxAffine.zero(1))
    objs = (CompositeObjective(centered_quadratic([0.0]), h()),
            CompositeObjective(centered_quadratic([1.0]), h()))
    hint = ParetoHint(np.array([[0.0]]) if l1 else np.array([[0.0], [1.0]]))
    return CompositeProblem(objs, ([-2.0], [3.0]), hint, "BIQUAD-L1" if l1 else "BIQUAD")


def _quad_m3() -> CompositeProblem:
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    objs = tuple(CompositeObjective(centered_quadratic(c), MaxAffine.zero(2)) for c in centers)
    return CompositeProblem(objs, ([-1.0, -1.0], [2.0, 2.0]), ParetoHint(centers), "QUAD-M3")


def _cb3_comp() -> CompositeProblem:
    g1 = quadratic([[1.0, 0.0], [0.0, 2.0]], [-1.0, 0.0], 0.5)
    h1 = MaxAffine([[1.0, -1.0], [-1.0, 1.0]], [0.0, 0.0])
    g2 = quadratic([[2.0, 0.5], [0.5, 1.0]], [0.0, -1.0], 0.5)
    h2 = MaxAffine([[1.0, 0.0], [0.0, -1.0], [0.0, 0.0]], [0.0, 0.0, 0.0])
    g3 = centered_quadratic([-0.5, -0.5])
    h3 = MaxAffine([[0.5, 0.5], [-1.0, 0.0], [0.0, -1.0], [-1.0, -1.0]], [0.0, 0.0, 0.0, 1.0])
    objs = (CompositeObjective(g1, h1), CompositeObjective(g2, h2), CompositeObjective(g3, h3))
    return CompositeProblem(objs, ([-2.0, -2.0], [2.0, 2.0]), None, "CB3-COMP")


def _logquad() -> CompositeProblem:
    g1 = logquad(np.eye(2), [1.0, -1.0], [-1.0, 0.0], 0.5)
    g2 = logquad([[2.0, 0.0], [0.0, 1.0]], [-0.5, 2.0], [0.0, -1.0], 0.5)
    objs = (CompositeObjective(g1, MaxAffine.zero(2)), CompositeObjective(g2, MaxAffine.zero(2)))
    return CompositeProblem(objs, ([-2.0, -2.0], [2.0, 2.0]), None, "LOGQUAD")


CATALOG = {
    "BIQUAD": lambda: _biquad(False),
    "BIQUAD-L1": lambda: _biquad(True),
    "QUAD-M3": _quad_m3,
    "CB3-COMP": _cb3_comp,
    "LOGQUAD": _logquad,
}


def builtin(name: str) -> CompositeProblem:
    """Catalog problem by name; validated on a few sampled points."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ProblemError(
            f"unknown builtin problem {name!r}; catalog: {', '.join(CATALOG)}") from None
    p = factory()
    report = validate(p, samples=5)
    if not report.ok:  # pragma: no cover - catalog is static
        raise ProblemError(f"builtin {name} failed validation: {report.violations}")
    return p


# ---------------------------------------------------------------------- JSON

def _smooth_from_dict(d: dict, n: int, where: str) -> SmoothOracle:
    kind = d.get("kind")
    try:
        Q = np.asarray(d["Q"], dtype=float)
    except KeyError:
        raise ProblemError(f"{where}: missing field 'Q'") from None
    if Q.ndim == 1 and Q.size == n * n:
        Q = Q.reshape(n, n)
    if Q.shape != (n, n):
        raise ProblemError(f"{where}.Q: expected {n}x{n} (row-major), got shape {Q.shape}")
    q = d.get("q")
    c = d.get("c", 0.0)
    mod = d.get("modulus")
    try:
        if kind == "quadratic":
            return quadratic(Q, q, c, mod)
        if kind == "logquad":
            if "a" not in d:
                raise ProblemError(f"{where}: logquad requires field 'a'")
            return logquad(Q, d["a"], q, c, mod)
    except ProblemError as exc:
        raise ProblemError(f"{where}: {exc}") from None
    raise ProblemError(f"{where}.kind: expected 'quadratic' or 'logquad', got {kind!r}")


def problem_from_dict(data: dict, name: str = "problem") -> CompositeProblem:
    """Build a problem from the JSON problem-file layout."""
    if not isinstance(data, dict):
        raise ProblemError("top level: expected an object")
    try:
        n = int(data["dim"])
        objs_raw = data["objectives"]
        box = data["start_box"]
        lo, hi = box["lo"], box["hi"]
    except (KeyError, TypeError) as exc:
        raise ProblemError(f"top level: missing field {exc}") from None
    objs = []
    for i, od in enumerate(objs_raw):
        where = f"objectives[{i}]"
        if "smooth" not in od:
            raise ProblemError(f"{where}: missing field 'smooth'")
        smooth = _smooth_from_dict(od["smooth"], n, f"{where}.smooth")
        pieces = od.get("nonsmooth", {}).get("pieces")
        if pieces is None:
            h = MaxAffine.zero(n)
        else:
            try:
                h = MaxAffine.from_pieces([(a, b) for a, b in pieces])
            except (ValueError, TypeError) as exc:
                raise ProblemError(f"{where}.nonsmooth.pieces: {exc}") from None
            if h.dim != n:
                raise ProblemError(f"{where}.nonsmooth.pieces: slopes must have {n} entries")
        objs.append(CompositeObjective(smooth, h))
    hint = None
    if "pareto_vertices" in data:
        hint = ParetoHint(np.asarray(data["pareto_vertices"], dtype=float))
    return CompositeProblem(tuple(objs), (lo, hi), hint, data.get("name", name))


def problem_to_dict(p: CompositeProblem) -> dict:
    objs = []
    for i, o in enumerate(p.objectives):
        if o.smooth.params is None:
            raise ProblemError(f"objective {i}: smooth oracle has no serialisable params")
        objs.append({"smooth": dict(o.smooth.params),
                     "nonsmooth": {"pieces": [[a.tolist(), b] for a, b in o.nonsmooth.pieces()]}})
    out = {"name": p.name, "dim": p.dim, "objectives": objs,
           "start_box": {"lo": p.start_box[0].tolist(), "hi": p.start_box[1].tolist()}}
    if p.pareto_hint is not None:
        out["pareto_vertices"] = np.asarray(p.pareto_hint.vertices).tolist()
    return out


def load_problem(path) -> CompositeProblem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(data, name=path.stem)


def as_matrices(B) -> list:
    """Accept a MetricSet or a plain sequence of matrices."""
    mats = getattr(B, "matrices", B)
    return [np.atleast_2d(np.asarray(M, dtype=float)) for M in mats]
