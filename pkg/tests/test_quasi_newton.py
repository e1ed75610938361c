import numpy as np
import pytest
from hypothesis import given, strategies as st

from paretoqn.problem import builtin
from paretoqn.quasi_newton import CURVATURE_EPS, MetricSet, UpdateRule, bfgs_update, sigma_floor
from _instances import spd

seeds = st.integers(0, 2**32 - 1)


def one(B, rule="bfgs", **kw):
    return MetricSet([np.array([[B]], dtype=float)], rule, **kw)


# scalar examples

def test_scalar_exact_quadratic_keeps_metric():
    M = one(1.0)
    assert M.update(np.array([-1.0]), [np.array([-1.0])]) == ["updated"]
    assert M.matrices[0][0, 0] == 1.0


def test_scalar_hand_update():
    M = one(2.0)
    M.update(np.array([1.0]), [np.array([1.0])])
    assert M.matrices[0][0, 0] == pytest.approx(1.0)
    assert M.matrices[0] @ [1.0] == pytest.approx([1.0])


def test_scalar_zero_curvature_skipped():
    M = one(1.0)
    assert M.update(np.array([1.0]), [np.array([0.0])]) == ["skipped"]
    assert M.matrices[0][0, 0] == 1.0 and M.skips == 1


def test_negative_curvature_skipped():
    M = one(1.0)
    assert M.update(np.array([1.0]), [np.array([-0.5])]) == ["skipped"]


def test_zero_step_rejected():
    with pytest.raises(ValueError):
        one(1.0).update(np.array([0.0]), [np.array([1.0])])


# sigma floor

def test_sigma_floor_examples():
    assert sigma_floor([np.eye(2), np.eye(2)]) == 1.0
    assert sigma_floor([np.diag([2.0, 3.0]), np.diag([1.0, 5.0])]) == 1.0


def test_sigma_floor_after_bfgs_steps_on_biquad():
    p = builtin("BIQUAD")
    M = MetricSet.initial(p, "bfgs")
    rng = np.random.default_rng(0)
    x = np.array([2.0])
    for _ in range(10):
        s = rng.normal(size=1)
        ys = p.grads(x + s) - p.grads(x)
        M.update(s, ys)
        x = x + s
    assert sigma_floor(M) > 0


# Broyden-family algebra

def _pair(rng, n):
    s = rng.normal(size=n)
    y = spd(rng, n, 0.1) @ s
    return s, y


@pytest.mark.parametrize("rule, phi", [("bfgs", 0.0), ("ssbfgs", 0.0), ("huang", 0.0),
                                       ("huang", 0.5), ("huang", 0.9)])
@given(seed=seeds)
def test_secant_and_spd(rule, phi, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    B = spd(rng, n)
    M = MetricSet([B], rule, phi=phi)
    s, y = _pair(rng, n)
    assert M.update(s, [y]) == ["updated"]
    B1 = M.matrices[0]
    assert np.linalg.norm(B1 @ s - y) <= 1e-10 * (1 + np.linalg.norm(y))
    np.linalg.cholesky(B1)
    assert np.array_equal(B1, B1.T)


@given(seeds)
def test_bfgs_matches_textbook_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    B = spd(rng, n)
    s, y = _pair(rng, n)
    M = MetricSet([B], "bfgs")
    M.update(s, [y])
    ref = B - np.outer(B @ s, s @ B) / (s @ B @ s) + np.outer(y, y) / (s @ y)
    assert np.allclose(M.matrices[0], ref, rtol=1e-12, atol=1e-12)
    assert np.allclose(bfgs_update(B, s, y), ref, rtol=1e-12, atol=1e-12)


@given(seeds)
def test_self_scaling_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    B = spd(rng, n)
    s, y = _pair(rng, n)
    M = MetricSet([B], "ssbfgs")
    M.update(s, [y])
    tau = (s @ y) / (s @ B @ s)
    ref = tau * (B - np.outer(B @ s, s @ B) / (s @ B @ s)) + np.outer(y, y) / (s @ y)
    assert np.allclose(M.matrices[0], ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("phi", [0.0, 0.3, 0.7])
@given(seed=seeds)
def test_huang_is_convex_combination_of_bfgs_and_dfp(phi, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    B = spd(rng, n)
    s, y = _pair(rng, n)
    M = MetricSet([B], "huang", phi=phi)
    M.update(s, [y])
    sy = s @ y
    bfgs = B - np.outer(B @ s, s @ B) / (s @ B @ s) + np.outer(y, y) / sy
    P = np.eye(n) - np.outer(y, s) / sy
    dfp = P @ B @ P.T + np.outer(y, y) / sy
    ref = (1 - phi) * bfgs + phi * dfp
    assert np.allclose(M.matrices[0], ref, rtol=1e-9, atol=1e-10)


def test_phi_out_of_range():
    with pytest.raises(ValueError):
        one(1.0, "huang", phi=1.0)
    with pytest.raises(ValueError):
        one(1.0, "huang", phi=-0.1)


def test_bfgs_on_quadratic_reproduces_curvature_along_step():
    rng = np.random.default_rng(3)
    Q = spd(rng, 3)
    M = MetricSet([np.eye(3)], "bfgs")
    for _ in range(6):
        s = rng.normal(size=3)
        M.update(s, [Q @ s])
        assert M.matrices[0] @ s == pytest.approx(Q @ s, rel=1e-10, abs=1e-10)


# other rules

def test_exact_hessian_reproduces_quadratic_bitwise():
    p = builtin("CB3-COMP")
    x0 = np.array([1.0, -1.0])
    M = MetricSet.initial(p, "newton", x0=x0)
    Qs = [o.smooth.hess(x0) for o in p.objectives]
    for B, Q in zip(M, Qs):
        assert np.array_equal(B, Q)
    x1 = x0 + np.array([0.3, 0.2])
    M.update(x1 - x0, p.grads(x1) - p.grads(x0),
             [o.smooth.hess(x1) for o in p.objectives])
    for B, Q in zip(M, Qs):
        assert np.array_equal(B, Q)


def test_exact_hessian_requires_hessians():
    p = builtin("BIQUAD")
    M = MetricSet.initial(p, "newton", x0=[0.0])
    with pytest.raises(ValueError):
        M.update(np.array([1.0]), p.grads([1.0]) - p.grads([0.0]))


def test_identity_rule_keeps_identity():
    p = builtin("QUAD-M3")
    M = MetricSet.initial(p, "identity")
    assert M.update(np.array([1.0, 0.5]), np.ones((3, 2))) == ["kept"] * 3
    assert all(np.array_equal(B, np.eye(2)) for B in M)
    assert sigma_floor(M) == 1.0


def test_reset_to_modulus_on_indefinite_matrix():
    M = MetricSet([np.eye(2), np.eye(2)], "newton", moduli=[0.5, 2.0])
    events = M.update(np.array([1.0, 0.0]), np.zeros((2, 2)),
                      [np.diag([1.0, -1.0]), np.diag([3.0, 3.0])])
    assert events == ["reset", "updated"]
    assert np.array_equal(M.matrices[0], 0.5 * np.eye(2)) and M.resets == 1


def test_initial_metrics_per_rule():
    p = builtin("LOGQUAD")
    x0 = np.array([0.3, -0.2])
    bfgs = MetricSet.initial(p, "bfgs")
    assert all(np.array_equal(B, e * np.eye(2)) for B, e in zip(bfgs, p.moduli))
    ident = MetricSet.initial(p, UpdateRule.IDENTITY)
    assert all(np.array_equal(B, np.eye(2)) for B in ident)
    newton = MetricSet.initial(p, "newton", x0=x0)
    assert all(np.allclose(B, o.smooth.hess(x0)) for B, o in zip(newton, p.objectives))


def test_indefinite_initial_metric_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        MetricSet([-np.eye(2)])


def test_copy_is_independent():
    M = one(2.0)
    C = M.copy()
    C.update(np.array([1.0]), [np.array([1.0])])
    assert M.matrices[0][0, 0] == 2.0


def test_curvature_threshold_is_relative():
    # s.y = 5e-13 is below 1e-12 |s| |y| although positive
    s = np.array([1.0, 0.0])
    y = np.array([CURVATURE_EPS / 2, 1.0])
    M = MetricSet([np.eye(2)], "bfgs")
    assert M.update(s, [y]) == ["skipped"]
