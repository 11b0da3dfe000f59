import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from icrsparse.prox import (
    NonFiniteInput,
    PowerIterationStall,
    QuadraticForm,
    SolverSettings,
    kkt_residual,
    lipschitz_estimate,
    safe_lipschitz,
    solve_nonneg_linear_quadratic,
    solve_weighted_l1_quadratic,
)


def random_quadratic(rng, q, p, l2=0.1):
    A = rng.standard_normal((q, p))
    A /= np.linalg.norm(A, axis=0)
    y = rng.standard_normal(q)
    return QuadraticForm.from_least_squares(A, y, l2)


def objective_l1(Q, w, x):
    return x @ Q.gram @ x + Q.linear @ x + np.sum(w * np.abs(x))


def orthant_oracle(Q, w):
    """Minimise x'Gx + c'x + sum w|x| by solving the smooth system per sign pattern."""
    p = Q.p
    best, best_x = np.inf, None
    for signs in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(signs, dtype=float)
        idx = np.flatnonzero(s)
        x = np.zeros(p)
        if idx.size:
            G = Q.gram[np.ix_(idx, idx)]
            rhs = -(Q.linear[idx] + w[idx] * s[idx]) / 2.0
            xs = np.linalg.solve(G, rhs)
            if np.any(np.sign(xs) != s[idx]):
                continue
            x[idx] = xs
        f = objective_l1(Q, w, x)
        if f < best:
            best, best_x = f, x
    return best_x


def active_set_oracle(Q, c):
    """Minimise x'Gx + c'x over x >= 0 by enumerating free sets."""
    p = Q.p
    best, best_x = np.inf, None
    for free in itertools.product((0, 1), repeat=p):
        idx = np.flatnonzero(free)
        x = np.zeros(p)
        if idx.size:
            xs = np.linalg.solve(Q.gram[np.ix_(idx, idx)], -c[idx] / 2.0)
            if np.any(xs < 0):
                continue
            x[idx] = xs
        f = x @ Q.gram @ x + c @ x
        if f < best:
            best, best_x = f, x
    return best_x


def test_lipschitz_examples():
    assert 3.996 <= lipschitz_estimate(QuadraticForm(np.diag([1.0, 2.0]), np.zeros(2))) <= 4.0
    assert lipschitz_estimate(QuadraticForm(np.eye(5), np.zeros(5))) == pytest.approx(2.0, rel=1e-6)
    A = np.array([[1.0, 1.0]])
    Q = QuadraticForm(A.T @ A, np.zeros(2))
    assert lipschitz_estimate(Q) == pytest.approx(2 * np.linalg.eigvalsh(A.T @ A).max(), rel=1e-6)


def test_lipschitz_against_eigensolver(rng):
    for p in (3, 16, 40):
        Q = random_quadratic(rng, p // 2 + 1, p)
        L = lipschitz_estimate(Q)
        top = 2 * np.linalg.eigvalsh(Q.gram).max()
        assert 0.999 * top <= L <= top * (1 + 1e-9)


def test_scalar_soft_threshold():
    # (x-1)^2 + 0.1 x^2 + 0.2|x| = 1.1 x^2 - 2x + 0.2|x| + 1
    Q = QuadraticForm(np.array([[1.1]]), np.array([-2.0]), 1.0)
    res = solve_weighted_l1_quadratic(Q, np.array([0.2]))
    assert res.x[0] == pytest.approx(1.8 / 2.2, abs=1e-10)
    assert res.converged
    exact = np.array([1.8 / 2.2])
    assert kkt_residual(exact, Q, np.array([0.2])) <= 1e-10
    assert kkt_residual(exact + 1e-3, Q, np.array([0.2])) > 0


def test_huge_weights_give_zero(rng):
    Q = random_quadratic(rng, 4, 6)
    w = np.full(6, np.abs(Q.linear).max() * 1.01)
    res = solve_weighted_l1_quadratic(Q, w)
    assert np.all(res.x == 0)
    assert kkt_residual(np.zeros(6), Q, w) == 0.0


def test_infinite_weight_pins_coordinate(rng):
    Q = random_quadratic(rng, 5, 4)
    w = np.array([0.01, np.inf, 0.01, np.inf])
    res = solve_weighted_l1_quadratic(Q, w)
    assert res.x[1] == 0.0 and res.x[3] == 0.0
    assert res.kkt <= 1e-8


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteInput):
        QuadraticForm(np.eye(2), np.array([np.nan, 0.0]))
    with pytest.raises(NonFiniteInput):
        solve_weighted_l1_quadratic(QuadraticForm(np.eye(2), np.zeros(2)), np.array([np.nan, 1.0]))
    with pytest.raises(NonFiniteInput):
        solve_nonneg_linear_quadratic(QuadraticForm(np.eye(2), np.zeros(2)), np.array([np.inf, 1.0]))


def test_power_iteration_stall_and_safe_bound():
    # two nearly equal top eigenvalues with a tiny budget cannot settle
    G = np.diag([1.0, 0.999999, 0.2])
    with pytest.raises(PowerIterationStall):
        lipschitz_estimate(G, max_iter=5, rtol=1e-15)
    assert safe_lipschitz(G) >= 2.0 * 0.999


@pytest.mark.parametrize("p", [1, 2, 3])
def test_weighted_l1_matches_orthant_oracle(rng, p):
    for _ in range(20):
        Q = random_quadratic(rng, max(1, p - 1), p, l2=rng.uniform(0.01, 0.5))
        w = rng.uniform(0.0, 1.0, p)
        res = solve_weighted_l1_quadratic(Q, w)
        assert res.kkt <= 1e-8
        assert np.linalg.norm(res.x - orthant_oracle(Q, w)) <= 1e-6


@pytest.mark.parametrize("p", [1, 2, 3])
def test_nonneg_matches_active_set_oracle(rng, p):
    for _ in range(20):
        Q = random_quadratic(rng, max(1, p - 1), p, l2=rng.uniform(0.01, 0.5))
        pen = rng.uniform(0.0, 0.5, p)
        res = solve_nonneg_linear_quadratic(Q, pen)
        assert res.kkt <= 1e-8
        assert np.all(res.x >= 0)
        assert np.linalg.norm(res.x - active_set_oracle(Q, Q.linear + pen)) <= 1e-6


def test_nonneg_examples(rng):
    # pull toward -1 clamps at zero
    Q = QuadraticForm(np.array([[1.0]]), np.array([2.0]), 1.0)
    assert solve_nonneg_linear_quadratic(Q, np.zeros(1)).x[0] == 0.0
    # an already non-negative unconstrained minimiser is unchanged
    G = np.array([[2.0, 0.3], [0.3, 1.5]])
    target = np.array([0.7, 0.4])
    Q = QuadraticForm(G, -2 * G @ target)
    res = solve_nonneg_linear_quadratic(Q, np.zeros(2))
    free = solve_weighted_l1_quadratic(Q, np.zeros(2))
    assert np.linalg.norm(res.x - target) <= 1e-8
    assert np.linalg.norm(res.x - free.x) <= 1e-8


def test_kkt_modes(rng):
    Q = random_quadratic(rng, 3, 5)
    pen = rng.uniform(0, 0.1, 5)
    res = solve_nonneg_linear_quadratic(Q, pen)
    assert kkt_residual(res.x, Q, pen, mode="nonneg") <= 1e-8
    bumped = res.x.copy()
    bumped[0] += 1e-3
    assert kkt_residual(bumped, Q, pen, mode="nonneg") > 0


@given(st.integers(0, 10_000), st.integers(4, 30))
def test_certificates_and_start_independence(seed, p):
    rng = np.random.default_rng(seed)
    Q = random_quadratic(rng, max(2, p // 2), p, l2=0.05)
    w = rng.uniform(0.0, 0.5, p)
    a = solve_weighted_l1_quadratic(Q, w)
    b = solve_weighted_l1_quadratic(Q, w, x0=rng.standard_normal(p))
    assert a.kkt <= 1e-8 and b.kkt <= 1e-8
    assert np.linalg.norm(a.x - b.x) <= 1e-6
    assert a.objective <= Q.constant + 1e-12  # no worse than x = 0
    pen = rng.uniform(0.0, 0.5, p)
    c = solve_nonneg_linear_quadratic(Q, pen)
    assert c.kkt <= 1e-8


def test_permutation_invariance(rng):
    Q = random_quadratic(rng, 6, 10)
    w = rng.uniform(0, 0.3, 10)
    perm = rng.permutation(10)
    Qp = QuadraticForm(Q.gram[np.ix_(perm, perm)], Q.linear[perm], Q.constant)
    a = solve_weighted_l1_quadratic(Q, w)
    b = solve_weighted_l1_quadratic(Qp, w[perm])
    assert np.linalg.norm(a.x[perm] - b.x) <= 1e-6


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(kkt_tolerance=0)
    with pytest.raises(ValueError):
        SolverSettings(max_inner_iters=0)
