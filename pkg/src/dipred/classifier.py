"""Action recognition from dynamic images, plus next-action relabeling.

Gaps between actions take the label of the action that follows them
(that is the thing worth predicting); a trailing gap gets the terminal
END class.  The recognizer is a small three-block conv net over the
normalized [0, 1] image view, trained with plain SGD (momentum, weight
decay, step-decayed learning rate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import END, GAP, LabelTimeline
from .numerics import (
    ShapeError,
    Tensor,
    add,
    conv2d,
    matvec,
    maxpool2,
    no_grad,
    read_bundle,
    relu,
    softmax,
    softmax_cross_entropy,
    spatial_mean,
    write_bundle,
    zero_grads,
)
from .rank_pooling import DynamicImage


def relabel_gaps(timeline):
    """Every gap takes the class of the next real action; a trailing gap
    with nothing after it becomes END.  Idempotent; real frames untouched."""
    frames = timeline.frames.copy()
    segments = timeline.segments()
    for i, (cid, start, end) in enumerate(segments):
        if cid != GAP:
            continue
        follower = END
        for nxt_cid, _, _ in segments[i + 1 :]:
            if nxt_cid != GAP:
                follower = nxt_cid
                break
        frames[start:end] = follower
    return LabelTimeline(frames, dict(timeline.class_names))


def next_action_labels(di_list, timeline):
    """Set each image's next_label to the relabeled class right after its
    window ends; windows ending at the video end get END.  Mutates and
    returns the list."""
    relabeled = relabel_gaps(timeline)
    total = len(relabeled)
    for di in di_list:
        _, start, window = di.source
        end = start + window
        if end > total:
            raise ValueError(
                f"window [{start}, {end}) runs past the {total}-frame timeline"
            )
        di.next_label = END if end == total else int(relabeled.frames[end])
    return di_list


# ---------------------------------------------------------------------------
# the recognizer


@dataclass
class ClassifierConfig:
    """Three conv blocks and the SGD recipe."""

    input_shape: tuple = (3, 32, 40)
    channels: tuple = (12, 24, 48)
    lr: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 16
    lr_decay_every: int = 500  # iterations per learning-rate halving
    lr_decay_factor: float = 0.5
    iterations: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != 3:
            raise ValueError("the recognizer uses exactly three conv blocks")
        _, h, w = self.input_shape
        if h % 8 or w % 8:
            raise ValueError(f"input {h}x{w} must be divisible by 8 for 3 poolings")


class ClassifierModel:
    """Conv blocks -> global average pool -> linear logits over the classes."""

    def __init__(self, cfg, params, classes, class_names=None):
        self.cfg = cfg
        self.params = dict(params)
        self.classes = list(classes)
        self.class_names = dict(class_names or {})
        if len(self.classes) != self.params["fc.w"].shape[0]:
            raise ShapeError("class table does not match the output layer")

    def parameters(self):
        names = ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b",
                 "fc.w", "fc.b"]
        return [self.params[n] for n in names]

    def logits(self, image):
        image = np.asarray(image, dtype=np.float32)
        if image.shape != self.cfg.input_shape:
            image = resize_nearest(image, self.cfg.input_shape[1:])
        h = add(Tensor(image), -0.5)  # center the [0, 1] view
        for i in (1, 2, 3):
            h = maxpool2(relu(conv2d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])))
        return matvec(self.params["fc.w"], spatial_mean(h), self.params["fc.b"])


def resize_nearest(image, hw):
    """Nearest-neighbor spatial resize of a (C, H, W) array."""
    c, h, w = image.shape
    nh, nw = hw
    rows = np.minimum((np.arange(nh) * h) // nh, h - 1)
    cols = np.minimum((np.arange(nw) * w) // nw, w - 1)
    return image[:, rows][:, :, cols]


def init_classifier(cfg, classes, class_names=None, seed=None):
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    c_in = cfg.input_shape[0]
    widths = (c_in,) + cfg.channels
    params = {}
    for i in (1, 2, 3):
        shape = (widths[i], widths[i - 1], 3, 3)
        bound = 1.0 / np.sqrt(np.prod(shape[1:]))
        params[f"conv{i}.w"] = Tensor(
            rng.uniform(-bound, bound, shape).astype(np.float32), requires_grad=True
        )
        params[f"conv{i}.b"] = Tensor(
            np.zeros(shape[0], dtype=np.float32), requires_grad=True
        )
    k = len(classes)
    bound = 1.0 / np.sqrt(cfg.channels[-1])
    params["fc.w"] = Tensor(
        rng.uniform(-bound, bound, (k, cfg.channels[-1])).astype(np.float32),
        requires_grad=True,
    )
    params["fc.b"] = Tensor(np.zeros(k, dtype=np.float32), requires_grad=True)
    return ClassifierModel(cfg, params, classes, class_names)


def _as_image(item):
    return item.normalized() if isinstance(item, DynamicImage) else np.asarray(item)


def train_classifier(examples, labels, cfg=None, classes=None, class_names=None):
    """Fit the recognizer on (image, class id) pairs.

    SGD with momentum and weight decay over shuffled mini-batches; the
    learning rate halves on a fixed iteration schedule.  Deterministic per
    seed.  Returns (model, per-iteration loss list).
    """
    cfg = cfg or ClassifierConfig()
    images = [_as_image(x) for x in examples]
    labels = [int(y) for y in labels]
    if len(images) != len(labels) or not images:
        raise ValueError("need matching, non-empty examples and labels")
    present = sorted(set(labels))
    if classes is None:
        classes = present
    else:
        classes = sorted(int(c) for c in classes)
        missing = [c for c in classes if c not in present]
        if missing:
            raise ValueError(f"classes with zero examples: {missing}")
        stray = [c for c in present if c not in classes]
        if stray:
            raise ValueError(f"labels outside the class set: {stray}")
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    index_of = {c: i for i, c in enumerate(classes)}
    targets = np.array([index_of[y] for y in labels])

    model = init_classifier(cfg, classes, class_names)
    params = model.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 977)))
    order = rng.permutation(len(images))
    cursor = 0
    lr = cfg.lr
    losses = []
    for it in range(cfg.iterations):
        if it > 0 and it % cfg.lr_decay_every == 0:
            lr *= cfg.lr_decay_factor
        batch = []
        for _ in range(min(cfg.batch_size, len(images))):
            if cursor == len(order):
                order = rng.permutation(len(images))
                cursor = 0
            batch.append(order[cursor])
            cursor += 1
        zero_grads(params)
        batch_loss = 0.0
        for idx in batch:
            loss = softmax_cross_entropy(model.logits(images[idx]), int(targets[idx]))
            loss.backward()
            batch_loss += loss.item()
        losses.append(batch_loss / len(batch))
        grads = [
            p.grad / len(batch) if p.grad is not None else np.zeros_like(p.data)
            for p in params
        ]
        sgd_update(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
    return model, losses


def sgd_update(params, grads, velocity, lr, momentum, weight_decay):
    """Momentum SGD step: v <- momentum*v + (g + wd*p); p <- p - lr*v."""
    for p, g, v in zip(params, grads, velocity):
        v *= momentum
        v += g + weight_decay * p.data
        p.data -= lr * v


def classify(model, image):
    """(class id, probabilities over the model's class order)."""
    with no_grad():
        z = model.logits(_as_image(image)).data
    probs = softmax(z)
    return model.classes[int(probs.argmax())], probs


def classify_batch(model, images):
    """Item-by-item classification; bitwise identical to classify() calls."""
    return [classify(model, image) for image in images]


def accuracy(model, images, labels):
    hits = sum(
        1 for x, y in zip(images, labels) if classify(model, x)[0] == int(y)
    )
    return hits / len(labels) if labels else 0.0


# ---------------------------------------------------------------------------
# checkpoints (same bundle format as the forecasting model)


def save_classifier(path, model):
    cfg = model.cfg
    entries = {
        "cfg.input_shape": np.asarray(cfg.input_shape, dtype=np.float64),
        "cfg.channels": np.asarray(cfg.channels, dtype=np.float64),
        "cfg.lr": np.float64(cfg.lr),
        "cfg.momentum": np.float64(cfg.momentum),
        "cfg.weight_decay": np.float64(cfg.weight_decay),
        "cfg.batch_size": np.float64(cfg.batch_size),
        "cfg.lr_decay_every": np.float64(cfg.lr_decay_every),
        "cfg.lr_decay_factor": np.float64(cfg.lr_decay_factor),
        "cfg.iterations": np.float64(cfg.iterations),
        "cfg.seed": np.float64(cfg.seed),
        "classes": np.asarray(model.classes, dtype=np.float64),
    }
    for name, p in model.params.items():
        entries[f"param.{name}"] = p.data
    write_bundle(path, entries)


def load_classifier(path):
    entries = read_bundle(path)
    cfg = ClassifierConfig(
        input_shape=tuple(int(v) for v in entries["cfg.input_shape"]),
        channels=tuple(int(v) for v in entries["cfg.channels"]),
        lr=float(entries["cfg.lr"]),
        momentum=float(entries["cfg.momentum"]),
        weight_decay=float(entries["cfg.weight_decay"]),
        batch_size=int(entries["cfg.batch_size"]),
        lr_decay_every=int(entries["cfg.lr_decay_every"]),
        lr_decay_factor=float(entries["cfg.lr_decay_factor"]),
        iterations=int(entries["cfg.iterations"]),
        seed=int(entries["cfg.seed"]),
    )
    classes = [int(c) for c in entries["classes"]]
    params = {
        name[len("param."):]: Tensor(arr, requires_grad=True)
        for name, arr in entries.items()
        if name.startswith("param.")
    }
    return ClassifierModel(cfg, params, classes)
