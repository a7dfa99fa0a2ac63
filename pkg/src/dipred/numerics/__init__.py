"""Dense tensors, reverse-mode autodiff, Adam, gradient checking, DITF IO."""

from .adam import AdamState, adam_step, collect_grads, zero_grads
from .ditf import (
    FormatError,
    atomic_write_bytes,
    ditf_bytes,
    read_bundle,
    read_ditf,
    write_bundle,
    write_ditf,
)
from .gradcheck import grad_check
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    no_grad,
    add,
    as_tensor,
    channel_slice,
    clamp_max,
    concat_channels,
    conv2d,
    log1p,
    matvec,
    maxpool2,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    spatial_mean,
    sub,
    tanh,
    upsample2,
)

__all__ = [
    "AdamState",
    "adam_step",
    "collect_grads",
    "zero_grads",
    "FormatError",
    "atomic_write_bytes",
    "ditf_bytes",
    "read_bundle",
    "read_ditf",
    "write_bundle",
    "write_ditf",
    "grad_check",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "no_grad",
    "add",
    "as_tensor",
    "channel_slice",
    "clamp_max",
    "concat_channels",
    "conv2d",
    "log1p",
    "matvec",
    "maxpool2",
    "mean",
    "mul",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "spatial_mean",
    "sub",
    "tanh",
    "upsample2",
]
