"""Brute-force reference for tiny rank-pooling problems.

Evaluates the objective on a dense grid over the fitted vector, refined
around the best point each pass.  Independent of the production solver:
only the objective definition is shared mathematics.
"""

import numpy as np


def objective_batch(dmat, v, lam):
    """Objective at many candidate vectors at once: (N, D) -> (N,)."""
    t = len(v)
    scores = dmat @ v.T  # (N, T)
    total = 0.5 * lam * (dmat**2).sum(axis=1)
    scale = 2.0 / (t * (t - 1))
    for q in range(t):
        for p in range(q):
            total = total + scale * np.maximum(0.0, 1.0 - scores[:, q] + scores[:, p])
    return total


def grid_search_best(v, lam, passes=12, points=9):
    """Best objective value found by refining a dense grid.

    The initial span covers every vector the regularizer allows (the
    optimum satisfies 0.5 * lam * |d|^2 <= f(0) = 1), with margin.
    """
    dim = v.shape[1]
    span = 1.1 * np.sqrt(2.0 / lam)
    center = np.zeros(dim)
    best_val = objective_batch(center[None, :], v, lam)[0]
    best_d = center.copy()
    for _ in range(passes):
        axes = [np.linspace(c - span, c + span, points) for c in center]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.reshape(-1) for m in mesh], axis=1)
        vals = objective_batch(grid, v, lam)
        i = int(vals.argmin())
        if vals[i] < best_val:
            best_val = vals[i]
            best_d = grid[i].copy()
        center = grid[i]
        spacing = 2.0 * span / (points - 1)
        span = 2.0 * spacing
    return float(best_val), best_d
