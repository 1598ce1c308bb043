import numpy as np
import pytest

from skyghi.errors import LineSearchFailure, NonFiniteGradient, NonFiniteObjective
from skyghi.optim import (
    LbfgsState,
    SgdNesterovState,
    lbfgs_minimize,
    sgd_nesterov_step,
    two_loop_direction,
)


def half_square(theta):
    theta = np.asarray(theta, dtype=np.float64)
    return 0.5 * theta @ theta, theta.copy()


def rosenbrock(p):
    x, y = p
    value = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    grad = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return value, grad


def test_plain_gradient_step():
    state = SgdNesterovState(learning_rate=0.1, momentum=0.0)
    theta, _ = sgd_nesterov_step(state, np.array([1.0]), lambda t: t)
    assert theta.tolist() == [0.9]


def test_first_nesterov_step():
    state = SgdNesterovState(learning_rate=0.01, momentum=0.9)
    theta, state = sgd_nesterov_step(state, np.array([1.0]), lambda t: t)
    assert state.velocity.tolist() == pytest.approx([-0.01], abs=1e-15)
    assert theta.tolist() == pytest.approx([0.99], abs=1e-15)


def test_gradient_taken_at_lookahead():
    seen = []

    def grad(t):
        seen.append(t.copy())
        return t

    state = SgdNesterovState(0.01, 0.9, velocity=np.array([-0.5]))
    sgd_nesterov_step(state, np.array([1.0]), grad)
    assert seen[0].tolist() == pytest.approx([0.55])


def test_zero_momentum_is_bitwise_gradient_descent():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    hess = a @ a.T + np.eye(6)
    theta = rng.normal(size=6)
    state = SgdNesterovState(learning_rate=0.013, momentum=0.0)
    plain = theta.copy()
    for _ in range(20):
        theta, state = sgd_nesterov_step(state, theta, lambda t: hess @ t)
        plain = plain - 0.013 * (hess @ plain)
        assert theta.tobytes() == plain.tobytes()


def test_nesterov_beats_plain_descent_on_quadratic():
    hess = np.diag([1.0, 0.1, 0.01])
    start = np.array([1.0, -2.0, 3.0])
    lr = 0.01
    state = SgdNesterovState(lr, 0.9)
    theta = start.copy()
    plain = start.copy()
    for _ in range(50):
        theta, state = sgd_nesterov_step(state, theta, lambda t: hess @ t)
        plain = plain - lr * (hess @ plain)
    assert np.linalg.norm(theta) < np.linalg.norm(plain)


def test_non_finite_gradient():
    state = SgdNesterovState()
    with pytest.raises(NonFiniteGradient):
        sgd_nesterov_step(state, np.ones(2), lambda t: np.array([1.0, np.nan]))


def test_momentum_range():
    with pytest.raises(ValueError):
        SgdNesterovState(momentum=1.0)


@pytest.mark.parametrize("seed", range(5))
def test_quadratic_converges_fast(seed):
    init = np.random.default_rng(seed).normal(0, 10, size=7)
    res = lbfgs_minimize(half_square, init, grad_tol=1e-8)
    assert res.converged
    assert res.iterations <= 5
    assert np.max(np.abs(res.grad)) < 1e-8


def test_rosenbrock():
    res = lbfgs_minimize(rosenbrock, [-1.2, 1.0], grad_tol=1e-10, max_iters=1000)
    assert np.max(np.abs(res.x - 1)) < 1e-4
    assert res.value < 1e-10
    assert np.linalg.norm(rosenbrock(res.x)[1]) < 1e-6


def test_stationary_start():
    res = lbfgs_minimize(half_square, np.zeros(3))
    assert res.iterations == 0
    assert res.x.tolist() == [0.0, 0.0, 0.0]


def test_every_step_strictly_decreases():
    res = lbfgs_minimize(rosenbrock, [-1.2, 1.0], grad_tol=1e-10, max_iters=1000)
    assert all(b < a for a, b in zip(res.trace, res.trace[1:]))
    assert len(res.trace) == res.iterations + 1


def test_first_direction_is_steepest_descent():
    g = np.array([0.5, -2.0, 3.0])
    assert np.array_equal(two_loop_direction(g, []), -g)


def test_two_loop_matches_dense_bfgs_update():
    # the recursion applies the BFGS inverse update to gamma*I, pair by pair
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4))
    hess = a @ a.T + np.eye(4)
    pairs = []
    for _ in range(3):
        s = rng.normal(size=4)
        pairs.append((s, hess @ s))
    s_last, y_last = pairs[-1]
    h = (s_last @ y_last) / (y_last @ y_last) * np.eye(4)
    for s, y in pairs:
        rho = 1 / (y @ s)
        v = np.eye(4) - rho * np.outer(y, s)
        h = v.T @ h @ v + rho * np.outer(s, s)
    g = rng.normal(size=4)
    np.testing.assert_allclose(two_loop_direction(g, pairs), -h @ g, rtol=1e-10)


def test_history_bound_and_curvature():
    state = LbfgsState(memory=3)
    rng = np.random.default_rng(2)
    for _ in range(10):
        s = rng.normal(size=3)
        assert state.push(s, 2 * s)
    assert len(state.history) == 3
    assert not state.push(np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]))
    assert not state.push(np.array([1e-6, 0.0, 0.0]), np.array([1e-5, 0.0, 0.0]))
    assert len(state.history) == 3
    assert all(s @ y > 0 for s, y in state.history)


def test_callback_sees_every_step():
    seen = []
    res = lbfgs_minimize(rosenbrock, [-1.2, 1.0], memory=3, grad_tol=1e-10, max_iters=1000,
                         callback=lambda x, f, g: seen.append(f))
    assert seen == res.trace[1:]
    assert np.max(np.abs(res.x - 1)) < 1e-4


def test_deterministic():
    a = lbfgs_minimize(rosenbrock, [-1.2, 1.0])
    b = lbfgs_minimize(rosenbrock, [-1.2, 1.0])
    assert a.x.tobytes() == b.x.tobytes() and a.trace == b.trace


def test_line_search_failure():
    # the reported gradient points uphill, so no step along -g can decrease f
    def lying(x):
        return float(x @ x), -2 * x

    with pytest.raises(LineSearchFailure):
        lbfgs_minimize(lying, np.array([1.0, 1.0]))


def test_non_finite_objective():
    with pytest.raises(NonFiniteObjective):
        lbfgs_minimize(lambda x: (np.nan, np.zeros_like(x)), np.ones(2))
