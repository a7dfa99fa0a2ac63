"""Finite-difference verification of reverse-mode gradients.

Central differences per coordinate, at 64 bits only; 32-bit checks are
numerically meaningless and are rejected up front.
"""

from __future__ import annotations

import numpy as np

from .adam import zero_grads
from .tensor import Tensor


def grad_check(loss_fn, params, epsilon=1e-5, sample=None, rng=None):
    """Worst relative error between analytic and numeric gradients.

    ``loss_fn`` maps the parameter list to a scalar Tensor and must be
    deterministic.  For large tensors, ``sample`` limits the number of
    coordinates probed per tensor (chosen by ``rng``, default seeded).

    The error for one tensor is ``max|analytic - numeric|`` scaled by the
    largest gradient magnitude in that tensor, which keeps coordinates with
    true-zero gradients from drowning the check in rounding noise.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError("grad_check requires float64 parameters")
    zero_grads(params)
    loss = loss_fn(params)
    loss.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    zero_grads(params)

    if rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is not None and sample < n:
            coords = np.sort(rng.choice(n, size=sample, replace=False))
        else:
            coords = np.arange(n)
        numeric = np.zeros(len(coords))
        for row, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_fn(params).item()
            flat[i] = orig - epsilon
            f_minus = loss_fn(params).item()
            flat[i] = orig
            numeric[row] = (f_plus - f_minus) / (2.0 * epsilon)
        asel = ga.reshape(-1)[coords]
        scale = max(np.abs(asel).max(initial=0.0), np.abs(numeric).max(initial=0.0))
        diff = np.abs(asel - numeric).max(initial=0.0)
        err = diff / scale if scale > 1e-10 else diff
        worst = max(worst, err)
    return worst


__all__ = ["grad_check", "Tensor"]
