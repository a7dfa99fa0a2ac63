"""Bias-corrected Adam over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor


@dataclass
class AdamState:
    """Step counter, moment accumulators and the update hyperparameters."""

    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, alpha=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        m = [np.zeros_like(p.data) for p in params]
        v = [np.zeros_like(p.data) for p in params]
        return cls(step=0, m=m, v=v, alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state):
    """One Adam update; mutates the given params and state, returns both."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params/grads/state length mismatch")
    for p, g in zip(params, grads):
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("adam_step: non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=p.data.dtype)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bias1
        vhat = v / bias2
        p.data -= state.alpha * mhat / (np.sqrt(vhat) + state.eps)
    return params, state


def zero_grads(params):
    for p in params:
        p.zero_grad()


def collect_grads(params, scale=1.0):
    """Gradients of all params as arrays; missing grads count as zero."""
    out = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        out.append(g * scale if scale != 1.0 else g)
    return out


__all__ = ["AdamState", "adam_step", "zero_grads", "collect_grads", "Tensor"]
