"""Independent check for the truncated high-loss optimisation.

Plain projected-gradient ascent over all 4(s-2) gains at once, started
from many random feasible points.  It shares nothing with the multiplier
solver beyond the problem data.  In coordinates x_n = sqrt(w_n) gamma_n
the budget becomes a sphere |x|^2 = budget and the boxes become
0 <= x <= sqrt(w_n) c_n.
"""
from __future__ import annotations

import numpy as np

from .optimizer import TruncatedProblem


def _project(y: np.ndarray, upper: np.ndarray, radius2: float) -> np.ndarray:
    """Map each row of y onto {0 <= x <= upper, |x|^2 = radius2}.

    x = min(t * y, upper) with the scalar t solved exactly: the squared norm
    is piecewise quadratic in t between the breakpoints upper_i / y_i.  This
    is the Euclidean projection whenever the clip bounds are inactive and a
    feasible retraction otherwise.
    """
    full = float(np.sum(upper**2))
    if radius2 >= full:
        return np.broadcast_to(upper, y.shape).copy()
    y = np.maximum(y, 1e-300)
    brk = upper / y
    order = np.argsort(brk, axis=1)
    b = np.take_along_axis(brk, order, axis=1)
    u2 = np.take_along_axis(np.broadcast_to(upper**2, y.shape), order, axis=1)
    y2 = np.take_along_axis(y**2, order, axis=1)
    # before breakpoint j the first j coordinates sit on their bounds
    clipped = np.concatenate([np.zeros((y.shape[0], 1)), np.cumsum(u2, axis=1)[:, :-1]], axis=1)
    free = np.cumsum(y2[:, ::-1], axis=1)[:, ::-1]
    at_break = clipped + b**2 * free
    j = np.sum(at_break < radius2, axis=1)
    rows = np.arange(y.shape[0])
    t = np.sqrt((radius2 - clipped[rows, j]) / free[rows, j])
    return np.minimum(t[:, None] * y, upper)


def _value(x: np.ndarray) -> np.ndarray:
    blocks = x.reshape(x.shape[0], -1, 4)
    return np.sum((blocks[..., 0] + blocks[..., 2]) * (blocks[..., 1] + blocks[..., 3]), axis=1)


def _gradient(x: np.ndarray) -> np.ndarray:
    blocks = x.reshape(x.shape[0], -1, 4)
    a = blocks[..., 0] + blocks[..., 2]
    b = blocks[..., 1] + blocks[..., 3]
    return np.stack([b, a, b, a], axis=-1).reshape(x.shape)


def projected_gradient_oracle(
    problem: TruncatedProblem,
    restarts: int = 64,
    seed: int = 0,
    step: float = 1.0,
    max_iter: int = 50000,
    tol: float = 1e-15,
) -> tuple[float, np.ndarray]:
    """Best objective (minimisation form) and gains over random restarts."""
    rng = np.random.default_rng(seed)
    root_w = np.sqrt(problem.weights)[:, None]
    upper = (root_w * problem.boxes).ravel()
    x = _project(rng.uniform(0.0, 1.0, (restarts, upper.size)) * upper, upper, problem.budget)
    for _ in range(max_iter):
        x_new = _project(x + step * _gradient(x), upper, problem.budget)
        moved = np.max(np.abs(x_new - x))
        x = x_new
        if moved < tol * max(1.0, float(np.max(upper))):
            break
    values = _value(x)
    best = int(np.argmax(values))
    gammas = x[best].reshape(-1, 4) / root_w
    return -float(values[best]), gammas
