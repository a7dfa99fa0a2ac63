"""Predictive-coding recurrent network over dynamic-image sequences.

A stack of layers, each holding a ConvLSTM representation that predicts the
layer's own input; rectified prediction residuals (positive and negative
halves kept separate) feed the next layer up, and the representation pass
runs top-down before the prediction pass runs bottom-up.  Trained
unsupervised with Adam to forecast the next image in a sequence, with the
loss taken on the bottom layer's residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import (
    AdamState,
    ShapeError,
    Tensor,
    adam_step,
    add,
    channel_slice,
    clamp_max,
    collect_grads,
    concat_channels,
    conv2d,
    log1p,
    maxpool2,
    mean,
    mul,
    no_grad,
    read_bundle,
    relu,
    sigmoid,
    sub,
    tanh,
    upsample2,
    write_bundle,
    zero_grads,
)
from .numerics.tensor import as_tensor
from .rank_pooling import DynamicImage

SPLIT_L1 = "split_l1"
SPLIT_LOG = "split_log"

_DTYPE_CODES = {np.dtype(np.float32): 1.0, np.dtype(np.float64): 2.0}
_CODE_DTYPES = {1.0: np.float32, 2.0: np.float64}


@dataclass
class PredNetConfig:
    """Architecture and training recipe.

    Defaults match the full-scale setup (four layers, channels
    (3, 48, 96, 192), 128x160 inputs); desk-scale runs swap in
    (3, 8, 16, 32) at 32x40 via configuration.
    """

    num_layers: int = 4
    channels: tuple = (3, 48, 96, 192)
    kernel_size: int = 3
    height: int = 128
    width: int = 160
    error_mode: str = SPLIT_LOG
    noise_sigma: float = 0.03
    layer_loss_weights: tuple = (1.0, 0.0, 0.0, 0.0)
    rollout_target: str = "actual"  # score fed-back steps against "actual"
    # images or against the fed-back "input" itself (pure consistency)
    lr: float = 0.001
    lr_final: float = 0.0001
    epochs: int = 10
    batch_size: int = 4
    sequence_length: int = 10
    rollout_length: int = 15
    context_length: int = 10
    seed: int = 0
    dtype: np.dtype = np.float32

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.layer_loss_weights = tuple(float(w) for w in self.layer_loss_weights)
        if len(self.channels) != self.num_layers:
            raise ValueError(
                f"{self.num_layers} layers need {self.num_layers} channel sizes, "
                f"got {self.channels}"
            )
        if len(self.layer_loss_weights) != self.num_layers:
            raise ValueError("layer_loss_weights must have one weight per layer")
        factor = 2 ** (self.num_layers - 1)
        if self.height % factor or self.width % factor:
            raise ValueError(
                f"{self.height}x{self.width} input not divisible by {factor} "
                f"for {self.num_layers} layers"
            )
        if self.error_mode not in (SPLIT_L1, SPLIT_LOG):
            raise ValueError(f"unknown error mode {self.error_mode!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.rollout_target not in ("actual", "input"):
            raise ValueError(f"unknown rollout target {self.rollout_target!r}")
        self.dtype = np.dtype(self.dtype)

    def layer_shape(self, l):
        return (self.channels[l], self.height >> l, self.width >> l)

    def lstm_in_channels(self, l):
        # gate input: split error (2c) + own representation (c) + upsampled
        # representation from above, when a layer above exists
        c = 2 * self.channels[l] + self.channels[l]
        if l < self.num_layers - 1:
            c += self.channels[l + 1]
        return c

    def param_shapes(self):
        """(name, shape) for every parameter, in canonical order."""
        k = self.kernel_size
        out = []
        for l in range(self.num_layers):
            c = self.channels[l]
            out.append((f"lstm{l}.w", (4 * c, self.lstm_in_channels(l), k, k)))
            out.append((f"lstm{l}.b", (4 * c,)))
            out.append((f"ahat{l}.w", (c, c, k, k)))
            out.append((f"ahat{l}.b", (c,)))
            if l > 0:
                out.append((f"a{l}.w", (c, 2 * self.channels[l - 1], k, k)))
                out.append((f"a{l}.b", (c,)))
        return out


class PredNetModel:
    """Parameter store for the stacked predictive layers."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = dict(params)
        for name, shape in cfg.param_shapes():
            if name not in self.params:
                raise ShapeError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ShapeError(
                    f"parameter {name} has shape {self.params[name].shape}, "
                    f"expected {shape}"
                )

    def param(self, name):
        return self.params[name]

    def parameters(self):
        return [self.params[name] for name, _ in self.cfg.param_shapes()]

    def astype(self, dtype):
        """A copy of the model with parameters cast to the given dtype."""
        cfg = replace(self.cfg, dtype=np.dtype(dtype))
        params = {
            name: Tensor(p.data.astype(dtype), requires_grad=True)
            for name, p in self.params.items()
        }
        return PredNetModel(cfg, params)


def init_model(cfg, seed=None):
    """Fan-in-scaled uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = {}
    for name, shape in cfg.param_shapes():
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=cfg.dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, shape).astype(cfg.dtype)
        params[name] = Tensor(data, requires_grad=True)
    return PredNetModel(cfg, params)


@dataclass
class PredNetState:
    """Per-layer recurrent state: representation, cell, split error."""

    r: list = field(default_factory=list)
    c: list = field(default_factory=list)
    e: list = field(default_factory=list)


def zero_state(cfg):
    r, c, e = [], [], []
    for l in range(cfg.num_layers):
        ch, h, w = cfg.layer_shape(l)
        r.append(Tensor(np.zeros((ch, h, w), dtype=cfg.dtype)))
        c.append(Tensor(np.zeros((ch, h, w), dtype=cfg.dtype)))
        e.append(Tensor(np.zeros((2 * ch, h, w), dtype=cfg.dtype)))
    return PredNetState(r, c, e)


def split_error(a, ahat, mode=SPLIT_L1):
    """Split rectified residual: positive half stacked on negative half.

    The logarithmic mode squashes each half through log(1 + u), elementwise
    and differentiable, still zero exactly when prediction equals input.
    """
    a, ahat = as_tensor(a), as_tensor(ahat)
    if a.shape != ahat.shape:
        raise ShapeError(f"split_error: {a.shape} vs {ahat.shape}")
    pos = relu(sub(a, ahat))
    neg = relu(sub(ahat, a))
    if mode == SPLIT_LOG:
        pos, neg = log1p(pos), log1p(neg)
    elif mode != SPLIT_L1:
        raise ValueError(f"unknown error mode {mode!r}")
    return concat_channels([pos, neg])


def step(model, state, x):
    """One time step: returns (new state, bottom-layer prediction).

    The representation pass runs top-down first, each layer's ConvLSTM fed
    with its previous error and representation plus the upsampled
    representation just computed above it.  The prediction/error pass then
    runs bottom-up, with the bottom prediction clamped to [0, 1].
    """
    cfg = model.cfg
    num_layers = cfg.num_layers
    x = as_tensor(x)
    if x.shape != (cfg.channels[0], cfg.height, cfg.width):
        raise ShapeError(
            f"input shape {x.shape} != {(cfg.channels[0], cfg.height, cfg.width)}"
        )

    r_new = [None] * num_layers
    c_new = [None] * num_layers
    for l in reversed(range(num_layers)):
        parts = [state.e[l], state.r[l]]
        if l < num_layers - 1:
            parts.append(upsample2(r_new[l + 1]))
        gates = conv2d(
            concat_channels(parts), model.param(f"lstm{l}.w"), model.param(f"lstm{l}.b")
        )
        n = cfg.channels[l]
        gi = sigmoid(channel_slice(gates, 0, n))
        gf = sigmoid(channel_slice(gates, n, 2 * n))
        gg = tanh(channel_slice(gates, 2 * n, 3 * n))
        go = sigmoid(channel_slice(gates, 3 * n, 4 * n))
        c_new[l] = add(mul(gf, state.c[l]), mul(gi, gg))
        r_new[l] = mul(go, tanh(c_new[l]))

    e_new = [None] * num_layers
    a = x
    prediction = None
    for l in range(num_layers):
        ahat = relu(conv2d(r_new[l], model.param(f"ahat{l}.w"), model.param(f"ahat{l}.b")))
        if l == 0:
            ahat = clamp_max(ahat, 1.0)  # keep fed-back rollouts bounded
            prediction = ahat
        e_new[l] = split_error(a, ahat, cfg.error_mode)
        if l < num_layers - 1:
            a = maxpool2(
                relu(
                    conv2d(
                        e_new[l],
                        model.param(f"a{l + 1}.w"),
                        model.param(f"a{l + 1}.b"),
                    )
                )
            )
    return PredNetState(r_new, c_new, e_new), prediction


def sequence_loss(model, xs, cfg=None, extrap_from=None):
    """Mean weighted layer error over steps 1..T-1, plus the predictions.

    The step-0 term is excluded: a prediction from empty context says
    nothing.  With ``extrap_from`` set, inputs from that step on are the
    model's own previous predictions (kept in-graph, so training through
    the feedback path works); the recurrence always sees those fed-back
    inputs, while the bottom loss term scores against the true images or
    the fed-back ones per ``cfg.rollout_target``.
    """
    cfg = cfg or model.cfg
    if len(xs) < 2:
        raise ValueError(f"need at least 2 steps, got {len(xs)}")
    state = zero_state(cfg)
    total = None
    predictions = []
    for t in range(len(xs)):
        fed_back = extrap_from is not None and t >= extrap_from
        if fed_back:
            x_t = predictions[t - 1]
        else:
            x_t = as_tensor(np.asarray(xs[t], dtype=cfg.dtype))
        state, pred = step(model, state, x_t)
        predictions.append(pred)
        if t == 0:
            continue
        term = None
        for l, weight in enumerate(cfg.layer_loss_weights):
            if weight == 0.0:
                continue
            if l == 0 and fed_back and cfg.rollout_target == "actual":
                truth = as_tensor(np.asarray(xs[t], dtype=cfg.dtype))
                e0 = split_error(truth, pred, cfg.error_mode)
                part = mul(mean(e0), weight)
            else:
                part = mul(mean(state.e[l]), weight)
            term = part if term is None else add(term, part)
        if term is not None:
            total = term if total is None else add(total, term)
    if total is None:
        raise ValueError("all layer loss weights are zero")
    return mul(total, 1.0 / (len(xs) - 1)), predictions


def _noisy_inputs(xs, rng, sigma, limit, dtype):
    out = []
    for t, x in enumerate(xs):
        x = np.asarray(x, dtype=dtype)
        if sigma > 0 and t < limit:
            x = (x + rng.normal(0.0, sigma, x.shape)).astype(dtype)
        out.append(x)
    return out


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # (epoch, mean loss, lr)

    def losses(self):
        return [loss for _, loss, _ in self.epochs]


def _run_training(model, sequences, cfg, extrap_from, start_epoch, stop_epoch, adam_state):
    if not sequences:
        raise ValueError("empty training set")
    params = model.parameters()
    if adam_state is None:
        adam_state = AdamState.for_params(params, alpha=cfg.lr)
    history = TrainHistory()
    noise_limit = extrap_from if extrap_from is not None else max(
        len(s) for s in sequences
    )
    if stop_epoch is None:
        stop_epoch = cfg.epochs
    for epoch in range(start_epoch, stop_epoch):
        lr = cfg.lr if epoch < cfg.epochs // 2 else cfg.lr_final
        adam_state.alpha = lr
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 211, epoch)))
        order = rng.permutation(len(sequences))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            zero_grads(params)
            for idx in batch:
                xs = _noisy_inputs(
                    sequences[idx], rng, cfg.noise_sigma, noise_limit, cfg.dtype
                )
                loss, _ = sequence_loss(model, xs, cfg, extrap_from=extrap_from)
                loss.backward()
                epoch_loss += loss.item()
            grads = collect_grads(params, scale=1.0 / len(batch))
            adam_step(params, grads, adam_state)
        history.epochs.append((epoch, epoch_loss / len(sequences), lr))
    return history, adam_state


def train(model, sequences, cfg=None, start_epoch=0, stop_epoch=None, adam_state=None):
    """Unsupervised next-image training on fixed-length sequences.

    Gaussian noise is added to every input; the bottom-layer error (and so
    the loss) is taken against the noisy inputs.  Mini-batch gradients are
    averaged in a fixed order and applied with Adam; the learning rate
    drops to its final value at the halfway epoch.  ``start_epoch`` and
    ``stop_epoch`` bound the epochs actually run without changing the
    schedule, which is what checkpoint resume needs.
    """
    cfg = cfg or model.cfg
    for s in sequences:
        if len(s) != cfg.sequence_length:
            raise ValueError(
                f"training sequences must have {cfg.sequence_length} steps, "
                f"got {len(s)}"
            )
    return _run_training(model, sequences, cfg, None, start_epoch, stop_epoch, adam_state)


def finetune_rollout(
    model, sequences, cfg=None, start_epoch=0, stop_epoch=None, adam_state=None
):
    """Closed-loop finetuning: real inputs for the context, then the model's
    own predictions are fed back for the remaining steps (no added noise on
    fed-back steps); the loss still runs over every valid step."""
    cfg = cfg or model.cfg
    for s in sequences:
        if len(s) < cfg.rollout_length:
            raise ValueError(
                f"rollout sequences need {cfg.rollout_length} steps, got {len(s)}"
            )
    return _run_training(
        model, sequences, cfg, cfg.context_length, start_epoch, stop_epoch, adam_state
    )


def _context_arrays(context, cfg):
    out = []
    for item in context:
        values = item.normalized() if isinstance(item, DynamicImage) else item
        out.append(np.asarray(values, dtype=cfg.dtype))
    return out


def _as_dynamic_image(pred, context, k):
    source = ("", 0, 0)
    last = context[-1] if context else None
    if isinstance(last, DynamicImage):
        name, start, window = last.source
        stride = 0
        if len(context) >= 2 and isinstance(context[-2], DynamicImage):
            stride = start - context[-2].source[1]
        source = (name, start + k * stride, window)
    return DynamicImage(values=pred, source=source, norm_bounds=(0.0, 1.0))


def predict_next(model, context):
    """Forecast the image after the context (exactly context_length images).

    Runs the recurrence over the context, then one extra step with the last
    real image as input; that step's bottom prediction is the forecast.
    """
    return predict_rollout(model, context, horizon=1)[0]


def predict_rollout(model, context, horizon=5):
    """Forecast ``horizon`` steps, feeding each prediction back as the next
    input; the result list holds DynamicImage values in [0, 1]."""
    cfg = model.cfg
    if len(context) != cfg.context_length:
        raise ValueError(
            f"context must hold {cfg.context_length} images, got {len(context)}"
        )
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    xs = _context_arrays(context, cfg)
    out = []
    with no_grad():
        state = zero_state(cfg)
        for x in xs:
            state, _ = step(model, state, x)
        feed = xs[-1]
        for k in range(1, horizon + 1):
            state, pred = step(model, state, feed)
            out.append(_as_dynamic_image(pred.data.copy(), context, k))
            feed = pred
    return out


# ---------------------------------------------------------------------------
# checkpoints


def _cfg_entries(cfg):
    return {
        "cfg.num_layers": np.float64(cfg.num_layers),
        "cfg.channels": np.asarray(cfg.channels, dtype=np.float64),
        "cfg.kernel_size": np.float64(cfg.kernel_size),
        "cfg.height": np.float64(cfg.height),
        "cfg.width": np.float64(cfg.width),
        "cfg.error_mode": np.float64(0.0 if cfg.error_mode == SPLIT_L1 else 1.0),
        "cfg.rollout_target": np.float64(0.0 if cfg.rollout_target == "input" else 1.0),
        "cfg.noise_sigma": np.float64(cfg.noise_sigma),
        "cfg.layer_loss_weights": np.asarray(cfg.layer_loss_weights, dtype=np.float64),
        "cfg.lr": np.float64(cfg.lr),
        "cfg.lr_final": np.float64(cfg.lr_final),
        "cfg.epochs": np.float64(cfg.epochs),
        "cfg.batch_size": np.float64(cfg.batch_size),
        "cfg.sequence_length": np.float64(cfg.sequence_length),
        "cfg.rollout_length": np.float64(cfg.rollout_length),
        "cfg.context_length": np.float64(cfg.context_length),
        "cfg.seed": np.float64(cfg.seed),
        "cfg.dtype": np.float64(_DTYPE_CODES[np.dtype(cfg.dtype)]),
    }


def _cfg_from_entries(entries):
    return PredNetConfig(
        num_layers=int(entries["cfg.num_layers"]),
        channels=tuple(int(c) for c in entries["cfg.channels"]),
        kernel_size=int(entries["cfg.kernel_size"]),
        height=int(entries["cfg.height"]),
        width=int(entries["cfg.width"]),
        error_mode=SPLIT_L1 if float(entries["cfg.error_mode"]) == 0.0 else SPLIT_LOG,
        rollout_target=(
            "input" if float(entries.get("cfg.rollout_target", 1.0)) == 0.0 else "actual"
        ),
        noise_sigma=float(entries["cfg.noise_sigma"]),
        layer_loss_weights=tuple(float(w) for w in entries["cfg.layer_loss_weights"]),
        lr=float(entries["cfg.lr"]),
        lr_final=float(entries["cfg.lr_final"]),
        epochs=int(entries["cfg.epochs"]),
        batch_size=int(entries["cfg.batch_size"]),
        sequence_length=int(entries["cfg.sequence_length"]),
        rollout_length=int(entries["cfg.rollout_length"]),
        context_length=int(entries["cfg.context_length"]),
        seed=int(entries["cfg.seed"]),
        dtype=_CODE_DTYPES[float(entries["cfg.dtype"])],
    )


def save_checkpoint(path, model, adam_state=None, next_epoch=None):
    """Bundle the model (and optionally optimizer state) atomically."""
    entries = _cfg_entries(model.cfg)
    for name, _ in model.cfg.param_shapes():
        entries[f"param.{name}"] = model.params[name].data
    if adam_state is not None:
        entries["opt.step"] = np.float64(adam_state.step)
        entries["opt.alpha"] = np.float64(adam_state.alpha)
        for (name, _), m, v in zip(
            model.cfg.param_shapes(), adam_state.m, adam_state.v
        ):
            entries[f"opt.m.{name}"] = m
            entries[f"opt.v.{name}"] = v
    if next_epoch is not None:
        entries["train.next_epoch"] = np.float64(next_epoch)
    write_bundle(path, entries)


def load_checkpoint(path):
    """Returns (model, adam_state or None, next_epoch or None)."""
    entries = read_bundle(path)
    cfg = _cfg_from_entries(entries)
    params = {}
    for name, _ in cfg.param_shapes():
        params[name] = Tensor(entries[f"param.{name}"], requires_grad=True)
    model = PredNetModel(cfg, params)
    adam_state = None
    if "opt.step" in entries:
        adam_state = AdamState(
            step=int(entries["opt.step"]),
            m=[entries[f"opt.m.{name}"] for name, _ in cfg.param_shapes()],
            v=[entries[f"opt.v.{name}"] for name, _ in cfg.param_shapes()],
            alpha=float(entries["opt.alpha"]),
        )
    next_epoch = (
        int(entries["train.next_epoch"]) if "train.next_epoch" in entries else None
    )
    return model, adam_state, next_epoch
