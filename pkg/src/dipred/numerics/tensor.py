"""Dense-tensor arithmetic with reverse-mode autodiff.

Values are numpy float32/float64 arrays; every differentiable operation
records its inputs and a backward closure, so gradients of a scalar loss
reach the leaf tensors via ``Tensor.backward()``.  Image tensors are
channels-first (C, H, W).
"""

from __future__ import annotations

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording (pure inference)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class NonFiniteError(FloatingPointError):
    """A NaN or Inf showed up where only finite values are allowed."""


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {where}")


class Tensor:
    """A dense float array plus gradient slot and tape bookkeeping.

    ``requires_grad`` marks leaf parameters.  Operations record a tape node
    whenever any operand is tracked (a parameter or derived from one), so
    pure data pipelines stay tape-free and cheap.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tracked(self):
        return self.requires_grad or bool(self._parents)

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Backpropagate from this scalar; fills ``grad`` on tracked tensors."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        order = _toposort(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic sugar (same-shape tensors or python scalars) --

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __neg__(self):
        return mul(self, -1.0)


def _toposort(root):
    order, seen, stack = [], set(), [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and p._parents:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _result(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.tracked for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(value, dtype=None):
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        data = a.data + a.data.dtype.type(b)

        def backward(g):
            if a.tracked:
                a.accumulate_grad(g)

        return _result(data, (a,), backward)
    _same_shape(a, b, "add")

    def backward(g):
        if a.tracked:
            a.accumulate_grad(g)
        if b.tracked:
            b.accumulate_grad(g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    _same_shape(a, b, "sub")

    def backward(g):
        if a.tracked:
            a.accumulate_grad(g)
        if b.tracked:
            b.accumulate_grad(-g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        c = a.data.dtype.type(b)

        def backward(g):
            if a.tracked:
                a.accumulate_grad(g * c)

        return _result(a.data * c, (a,), backward)
    _same_shape(a, b, "mul")

    def backward(g):
        if a.tracked:
            a.accumulate_grad(g * b.data)
        if b.tracked:
            b.accumulate_grad(g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g * mask)

    return _result(np.maximum(x.data, 0), (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g * out * (1.0 - out))

    return _result(out, (x,), backward)


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g * (1.0 - out * out))

    return _result(out, (x,), backward)


def log1p(x):
    x = as_tensor(x)

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g / (1.0 + x.data))

    return _result(np.log1p(x.data), (x,), backward)


def clamp_max(x, cap):
    """Elementwise min(x, cap); the saturating half of a bounded output."""
    x = as_tensor(x)
    cap = float(cap)
    mask = x.data < cap

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g * mask)

    return _result(np.minimum(x.data, cap), (x,), backward)


# ---------------------------------------------------------------------------
# shape ops


def concat_channels(tensors):
    """Concatenate (C, H, W) tensors along the channel axis."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[0] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=0)

    def backward(g):
        start = 0
        for t, n in zip(tensors, sizes):
            if t.tracked:
                t.accumulate_grad(g[start : start + n])
            start += n

    return _result(data, tensors, backward)


def channel_slice(x, start, stop):
    x = as_tensor(x)

    def backward(g):
        if x.tracked:
            full = np.zeros_like(x.data)
            full[start:stop] = g
            x.accumulate_grad(full)

    return _result(x.data[start:stop], (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g.reshape(old))

    return _result(x.data.reshape(shape), (x,), backward)


def mean(x):
    """Full reduction to a 0-d scalar tensor."""
    x = as_tensor(x)
    n = x.data.size

    def backward(g):
        if x.tracked:
            x.accumulate_grad(np.full_like(x.data, g / n))

    return _result(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,), backward)


def spatial_mean(x):
    """(C, H, W) -> (C,) average over the spatial axes."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError("spatial_mean expects a (C, H, W) tensor")
    c, h, w = x.data.shape

    def backward(g):
        if x.tracked:
            x.accumulate_grad(np.broadcast_to(g[:, None, None] / (h * w), (c, h, w)))

    return _result(x.data.mean(axis=(1, 2)), (x,), backward)


# ---------------------------------------------------------------------------
# convolution / pooling / resampling


def _im2col(xp, k, h, w):
    c = xp.shape[0]
    cols = np.empty((c, k * k, h * w), dtype=xp.dtype)
    n = 0
    for i in range(k):
        for j in range(k):
            cols[:, n, :] = xp[:, i : i + h, j : j + w].reshape(c, -1)
            n += 1
    return cols.reshape(c * k * k, h * w)


def _col2im(gcols, c, h, w, k):
    p = k // 2
    gxp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=gcols.dtype)
    g = gcols.reshape(c, k * k, h, w)
    n = 0
    for i in range(k):
        for j in range(k):
            gxp[:, i : i + h, j : j + w] += g[:, n]
            n += 1
    return gxp[:, p : p + h, p : p + w]


def conv2d(x, w, b):
    """Same-padded cross-correlation: (C_in,H,W) x (C_out,C_in,k,k) -> (C_out,H,W)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError("conv2d expects (C,H,W) input and (O,C,k,k) kernels")
    c_in, h, wd = x.data.shape
    c_out, c_in_k, k, k2 = w.data.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernels must be square with odd size, got {k}x{k2}")
    if c_in_k != c_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, kernels expect {c_in_k}")
    if b.data.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {b.data.shape} != ({c_out},)")
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    cols = _im2col(xp, k, h, wd)
    wmat = w.data.reshape(c_out, -1)
    out = (wmat @ cols + b.data[:, None]).reshape(c_out, h, wd)

    def backward(g):
        gmat = g.reshape(c_out, -1)
        if w.tracked:
            w.accumulate_grad((gmat @ cols.T).reshape(w.data.shape))
        if b.tracked:
            b.accumulate_grad(gmat.sum(axis=1))
        if x.tracked:
            x.accumulate_grad(_col2im(wmat.T @ gmat, c_in, h, wd, k))

    return _result(out, (x, w, b), backward)


def maxpool2(x):
    """Non-overlapping 2x2 max pooling; argmax wins the gradient."""
    x = as_tensor(x)
    c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got {h}x{w}")
    xr = (
        x.data.reshape(c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h // 2, w // 2, 4)
    )
    idx = xr.argmax(axis=3)
    out = np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]

    def backward(g):
        if x.tracked:
            gr = np.zeros((c, h // 2, w // 2, 4), dtype=g.dtype)
            np.put_along_axis(gr, idx[..., None], g[..., None], axis=3)
            gx = (
                gr.reshape(c, h // 2, w // 2, 2, 2)
                .transpose(0, 1, 3, 2, 4)
                .reshape(c, h, w)
            )
            x.accumulate_grad(gx)

    return _result(out, (x,), backward)


def upsample2(x):
    """Nearest-neighbor 2x upsampling: each value fills a 2x2 block."""
    x = as_tensor(x)
    c, h, w = x.data.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def backward(g):
        if x.tracked:
            x.accumulate_grad(g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))

    return _result(out, (x,), backward)


# ---------------------------------------------------------------------------
# dense / classification heads


def matvec(w, x, b):
    """Affine map: (O, I) @ (I,) + (O,)."""
    w, x, b = as_tensor(w), as_tensor(x), as_tensor(b)
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec: {w.data.shape} @ {x.data.shape}")
    out = w.data @ x.data + b.data

    def backward(g):
        if w.tracked:
            w.accumulate_grad(np.outer(g, x.data))
        if x.tracked:
            x.accumulate_grad(w.data.T @ g)
        if b.tracked:
            b.accumulate_grad(g)

    return _result(out, (w, x, b), backward)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits, target):
    """Cross-entropy of an integer target against softmax(logits)."""
    logits = as_tensor(logits)
    z = logits.data.astype(np.float64)
    z = z - z.max()
    logsum = np.log(np.exp(z).sum())
    probs = np.exp(z - logsum)
    loss = logsum - z[target]

    def backward(g):
        if logits.tracked:
            grad = probs.copy()
            grad[target] -= 1.0
            logits.accumulate_grad((g * grad).astype(logits.data.dtype))

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)
