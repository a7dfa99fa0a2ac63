"""Dynamic images: convex rank pooling over running-mean frame features.

A window of frames is flattened per frame, averaged into running means,
and a parameter vector is fit so that later frames score higher under a
pairwise hinge objective with L2 regularization.  The fitted vector,
reshaped back to image layout, is the window's dynamic image: static
pixels cancel and the energy concentrates where things move.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labels import GAP
from .numerics.tensor import NonFiniteError
from .video_io import VideoSequence, sliding_windows


@dataclass
class RankPoolConfig:
    """Solver knobs: regularization weight, iteration budget, step schedule.

    ``method`` picks the solver: "exact" runs dual coordinate ascent on the
    equivalent box-constrained quadratic program (fast, machine-precision);
    "subgradient" runs plain descent on the primal with the step schedule
    eta0 / (1 + k / schedule_k), kept for cross-checking.
    """

    lam: float = 1.0
    iters: int = 600
    tol: float = 1e-7
    method: str = "exact"
    eta0: float = 0.1
    schedule_k: int = 50  # subgradient step k uses eta0 / (1 + k / schedule_k)
    stall_limit: int = 200  # stop after this many iterations without progress

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.method not in ("exact", "subgradient"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class DynamicImage:
    """One rank-pooled window: raw values plus display-normalization bounds."""

    values: np.ndarray  # (3, H, W) raw fitted vector, reshaped
    source: tuple = ("", 0, 0)  # (video name, start frame, window length)
    norm_bounds: tuple = (0.0, 0.0)
    label: int | None = None
    next_label: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("dynamic image has non-finite values")
        lo, hi = self.norm_bounds
        if lo > hi:
            raise ValueError(f"norm bounds out of order: {self.norm_bounds}")

    @property
    def shape(self):
        return self.values.shape

    def normalized(self):
        """Linear map of the raw values to [0, 1]; a constant image maps to 0.5."""
        lo, hi = self.norm_bounds
        if hi > lo:
            return ((self.values - lo) / (hi - lo)).astype(np.float32)
        return np.full_like(self.values, 0.5)


def flatten_frames(window):
    """Stack each frame's values into one row: (T, D) float64."""
    frames = [np.asarray(f, dtype=np.float64).reshape(-1) for f in window]
    if not frames:
        raise ValueError("empty window")
    return np.stack(frames)


def running_means(window):
    """Per-frame running averages of the flattened frames: row t is the
    mean of frames 0..t."""
    psi = flatten_frames(window)
    counts = np.arange(1, len(psi) + 1, dtype=np.float64)
    return np.cumsum(psi, axis=0) / counts[:, None]


def pairwise_objective(d, v, lam):
    """The fitted-vector objective: L2 term plus normalized hinge sum over
    all frame pairs (later frame should score at least 1 higher)."""
    t = len(v)
    scores = v @ d
    margins = 1.0 - (scores[:, None] - scores[None, :])  # [q, t] uses S_q - S_t
    iu = np.triu_indices(t, k=1)
    hinges = np.maximum(0.0, margins.T[iu])  # pairs with q > t
    return 0.5 * lam * float(d @ d) + (2.0 / (t * (t - 1))) * float(hinges.sum())


def rank_pool(window, cfg=None, return_trace=False):
    """Fit the ranking vector from zero; the objective is convex, so the
    result approximates the global minimum.

    Returns the flat vector with the best objective value seen.  With
    ``return_trace`` the accepted (improving) objective values come back too.
    """
    cfg = cfg or RankPoolConfig()
    v = running_means(window)
    if len(v) < 2:
        raise ValueError(f"rank pooling needs at least 2 frames, got {len(v)}")
    if cfg.method == "exact":
        best_d, trace = _solve_dual(v, cfg)
    else:
        best_d, trace = _solve_subgradient(v, cfg)
    if return_trace:
        return best_d, trace
    return best_d


def _solve_subgradient(v, cfg):
    """Primal descent with the fixed diminishing step schedule."""
    t, dim = v.shape
    scale = 2.0 / (t * (t - 1))
    upper = np.triu(np.ones((t, t), dtype=bool), k=1)  # [t_idx, q_idx] with q > t

    d = np.zeros(dim)
    best_d = d.copy()
    best_f = np.inf
    since_best = 0
    trace = []
    for k in range(cfg.iters):
        scores = v @ d
        # margins[i, q] = 1 - S_q + S_i for pair (q > i)
        margins = 1.0 - (scores[None, :] - scores[:, None])
        active = (margins > 0.0) & upper
        f = 0.5 * cfg.lam * float(d @ d) + scale * float(margins[active].sum())
        if not np.isfinite(f):
            raise NonFiniteError("rank pooling objective diverged")
        if f < best_f - cfg.tol:
            best_f, best_d = f, d.copy()
            since_best = 0
            trace.append(f)
        else:
            since_best += 1
            if since_best > cfg.stall_limit:
                break
        as_lower = active.sum(axis=1)  # times frame i appears as the earlier frame
        as_upper = active.sum(axis=0)  # times frame i appears as the later frame
        grad = cfg.lam * d + scale * (v.T @ (as_lower - as_upper).astype(np.float64))
        eta = cfg.eta0 / (1.0 + k / cfg.schedule_k)
        d = d - eta * grad
    return best_d, trace


def _solve_dual(v, cfg):
    """Cyclic coordinate ascent on the dual box QP.

    With one multiplier per frame pair, the fitted vector is always
    (1/lam) * sum_p alpha_p (V_q - V_t), so everything runs in the T x T
    Gram space of running means; the full-size vector materializes once at
    the end.  Iterations here are full sweeps over the pairs.
    """
    if cfg.lam == 0:
        raise ValueError("the exact solver needs lam > 0; use method='subgradient'")
    t = len(v)
    scale = 2.0 / (t * (t - 1))
    lam = cfg.lam
    ti, qi = np.triu_indices(t, k=1)  # pair p ranks frame qi[p] above ti[p]
    npairs = len(ti)
    gram = v @ v.T
    diag = gram[qi, qi] - 2.0 * gram[qi, ti] + gram[ti, ti]
    live = np.flatnonzero(diag > 0.0)
    live_mask = diag > 0.0

    alpha = np.zeros(npairs)
    alpha[~live_mask] = scale  # identical-frame pairs: constant hinge, no pull
    u = np.zeros(npairs)  # u[p] = sum_p' alpha_p' * <w_p, w_p'>
    col_q = gram[:, qi]
    col_t = gram[:, ti]

    def primal(alpha_vec):
        # identical-frame pairs are skipped: their running means cancel
        # exactly, so including them only adds rounding noise
        c = np.zeros(t)
        np.add.at(c, qi[live_mask], alpha_vec[live_mask])
        np.add.at(c, ti[live_mask], -alpha_vec[live_mask])
        scores = gram @ c / lam
        hinges = np.maximum(0.0, 1.0 - (scores[qi] - scores[ti]))
        return 0.5 * float(c @ gram @ c) / lam + scale * float(hinges.sum()), c

    best_f, best_c = primal(alpha)
    trace = [best_f]
    for _ in range(cfg.iters):
        max_delta = 0.0
        for p in live:
            step = lam * (1.0 - u[p] / lam) / diag[p]
            a_new = min(max(alpha[p] + step, 0.0), scale)
            delta = a_new - alpha[p]
            if delta != 0.0:
                u += delta * (
                    col_q[qi[p]] - col_t[qi[p]] - col_q[ti[p]] + col_t[ti[p]]
                )
                alpha[p] = a_new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        f, c = primal(alpha)
        if not np.isfinite(f):
            raise NonFiniteError("rank pooling objective diverged")
        if f < best_f:
            best_f, best_c = f, c
            trace.append(f)
        if max_delta <= cfg.tol * scale:
            break
    return v.T @ best_c / lam, trace


def make_dynamic_image(window, cfg=None, source=("", 0, 0), label=None):
    """Rank-pool a window and reshape the result into a dynamic image."""
    window = np.asarray(window)
    d = rank_pool(window, cfg)
    values = d.reshape(window.shape[1:]).astype(np.float32)
    lo, hi = float(values.min()), float(values.max())
    return DynamicImage(
        values=values, source=source, norm_bounds=(lo, hi), label=label
    )


def majority_label(labels):
    """Most frequent label; ties break toward the smaller class id."""
    labels = np.asarray(labels)
    shifted = labels - labels.min()
    counts = np.bincount(shifted)
    winners = np.flatnonzero(counts == counts.max())
    return int(winners.min() + labels.min())


def di_sequence(video, window_spec, cfg=None):
    """Dynamic images for every sliding window of a video, in window order.

    Each image's label is the majority per-frame label inside its window
    (GAP counts like any other class; relabeling happens downstream).
    """
    name = video.name if isinstance(video, VideoSequence) else ""
    labels = video.labels if isinstance(video, VideoSequence) else None
    out = []
    for start, window in sliding_windows(video, window_spec):
        label = None
        if labels is not None:
            label = majority_label(labels[start : start + window_spec.window])
        out.append(
            make_dynamic_image(
                window,
                cfg,
                source=(name, start, window_spec.window),
                label=label,
            )
        )
    return out


__all__ = [
    "GAP",
    "RankPoolConfig",
    "DynamicImage",
    "flatten_frames",
    "running_means",
    "pairwise_objective",
    "rank_pool",
    "make_dynamic_image",
    "majority_label",
    "di_sequence",
]
