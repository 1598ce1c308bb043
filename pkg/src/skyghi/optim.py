"""SGD with Nesterov momentum and limited-memory BFGS on flat parameter vectors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchFailure, NonFiniteGradient, NonFiniteObjective


@dataclass
class SgdNesterovState:
    learning_rate: float = 0.01
    momentum: float = 0.9
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def sgd_nesterov_step(state: SgdNesterovState, params, grad_fn):
    """One Nesterov step with the gradient taken at the look-ahead point.

    ``g = grad_fn(params + mu * v)``, ``v <- mu * v - lr * g``,
    ``params <- params + v``. Returns ``(new_params, state)``; the state's
    velocity is updated in place.
    """
    params = np.asarray(params, dtype=np.float64)
    if state.velocity is None:
        state.velocity = np.zeros_like(params)
    elif state.velocity.shape != params.shape:
        raise ValueError("velocity and parameters differ in shape")
    mu, lr = state.momentum, state.learning_rate
    lookahead = params + mu * state.velocity if mu else params
    g = np.asarray(grad_fn(lookahead), dtype=np.float64)
    if g.shape != params.shape:
        raise ValueError("gradient and parameters differ in shape")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient contains NaN or inf")
    state.velocity = mu * state.velocity - lr * g
    return params + state.velocity, state


@dataclass
class LbfgsState:
    memory: int = 10
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    history: deque = field(default_factory=deque)

    def push(self, s, y):
        if s @ y <= 1e-10:
            return False
        self.history.append((s, y))
        while len(self.history) > self.memory:
            self.history.popleft()
        return True


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    trace: list  # objective value after each accepted step, starting with f(init)


def two_loop_direction(grad, history) -> np.ndarray:
    """Search direction ``-H grad`` from the stored (s, y) pairs.

    With no pairs the initial inverse Hessian is the identity; otherwise it is
    ``gamma * I`` with ``gamma = s'y / y'y`` from the newest pair.
    """
    q = np.array(grad, dtype=np.float64)
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if history:
        s, y = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(objective, init, memory: int = 10, max_iters: int = 500,
                   grad_tol: float = 1e-6, c1: float = 1e-4, backtrack: float = 0.5,
                   max_backtracks: int = 60, callback=None) -> LbfgsResult:
    """Minimize ``objective(x) -> (value, grad)`` with L-BFGS and Armijo backtracking.

    Stops once ``max|grad| < grad_tol`` or after ``max_iters`` accepted steps.
    Pairs with ``s'y <= 1e-10`` are skipped. If no step length satisfies the
    Armijo condition along the quasi-Newton direction, the history is dropped
    and steepest descent is tried before giving up with LineSearchFailure.
    """
    state = LbfgsState(memory=memory, c1=c1, backtrack=backtrack, max_backtracks=max_backtracks)
    x = np.array(init, dtype=np.float64)
    f, g = _evaluate(objective, x)
    trace = [f]
    it = 0
    while it < max_iters and np.max(np.abs(g)) >= grad_tol:
        d = two_loop_direction(g, state.history)
        step = _armijo(objective, x, f, g, d, state)
        if step is None and state.history:
            state.history.clear()
            d = -g
            step = _armijo(objective, x, f, g, d, state)
        if step is None:
            raise LineSearchFailure(
                f"no Armijo step after {max_backtracks} backtracks at iteration {it}")
        x_new, f_new, g_new = step
        state.push(x_new - x, g_new - g)
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        it += 1
        if callback is not None:
            callback(x, f, g)
    return LbfgsResult(x, f, g, it, bool(np.max(np.abs(g)) < grad_tol), trace)


def _evaluate(objective, x):
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective returned a non-finite value or gradient")
    return f, g


def _armijo(objective, x, f, g, d, state: LbfgsState):
    slope = g @ d
    if not slope < 0:
        return None
    t = 1.0
    for _ in range(state.max_backtracks):
        x_new = x + t * d
        f_new, g_new = objective(x_new)
        f_new = float(f_new)
        if np.isfinite(f_new) and f_new <= f + state.c1 * t * slope and f_new < f:
            g_new = np.asarray(g_new, dtype=np.float64)
            if not np.all(np.isfinite(g_new)):
                raise NonFiniteObjective("non-finite gradient at accepted point")
            return x_new, f_new, g_new
        t *= state.backtrack
    return None
