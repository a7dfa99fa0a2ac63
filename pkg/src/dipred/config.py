"""Flat key = value run configuration with a closed key registry.

Unknown keys are rejected (typos surface immediately); every resolved
value is dumpable as deterministic text.  CLI --set overrides beat file
values, which beat defaults.
"""

from __future__ import annotations

import numpy as np

_REGISTRY = {
    # global
    "seed": (int, 0),
    # synthetic data generation
    "data.train_videos": (int, 20),
    "data.val_videos": (int, 2),
    "data.test_videos": (int, 4),
    "data.height": (int, 32),
    "data.width": (int, 40),
    "data.fps": (float, 30.0),
    "data.actions_per_video": (int, 3),
    "data.min_duration": (int, 40),
    "data.max_duration": (int, 60),
    "data.min_gap": (int, 4),
    "data.max_gap": (int, 10),
    "data.speed": (float, 0.45),
    "data.shape_size": (float, 4.0),
    "data.grow_rate": (float, 0.12),
    "data.order": (str, "cyclic"),  # or "random"
    # dynamic-image construction
    "di.window": (int, 30),
    "di.stride": (int, 5),
    "rankpool.lambda": (float, 1.0),
    "rankpool.iters": (int, 600),
    "rankpool.tol": (float, 1e-7),
    "rankpool.method": (str, "exact"),  # or "subgradient"
    # forecasting network
    "prednet.layers": (int, 4),
    "prednet.channels": ("int_tuple", (3, 8, 16, 32)),
    "prednet.kernel": (int, 3),
    "prednet.error_mode": (str, "split_log"),
    "prednet.sigma": (float, 0.03),
    "prednet.layer_weights": ("float_tuple", (1.0, 0.0, 0.0, 0.0)),
    "prednet.lr": (float, 0.001),
    "prednet.lr_final": (float, 0.0001),
    "prednet.epochs": (int, 10),
    "prednet.batch": (int, 4),
    "prednet.sequence_length": (int, 10),
    "prednet.rollout_length": (int, 15),
    "prednet.context": (int, 10),
    "prednet.subseq_stride": (int, 1),
    "prednet.finetune_epochs": (int, 4),
    "prednet.finetune_lr": (float, 0.0001),
    "prednet.rollout_target": (str, "actual"),  # or "input"
    "prednet.resume": (str, ""),
    "prednet.stop_epoch": (int, -1),  # train only up to this epoch; -1 = all
    # recognizer
    "classifier.channels": ("int_tuple", (12, 24, 48)),
    "classifier.lr": (float, 0.0001),
    "classifier.momentum": (float, 0.9),
    "classifier.weight_decay": (float, 0.0005),
    "classifier.batch": (int, 16),
    "classifier.decay_interval": (int, 500),
    "classifier.decay_factor": (float, 0.5),
    "classifier.iterations": (int, 2000),
    "classifier.inputs": (str, "predicted"),  # or "original"
    "classifier.label_mode": (str, "next"),  # or "window"
    # evaluation
    "eval.horizon": (int, 5),
    "eval.checkpoint": (str, ""),  # empty: finetuned if present, else trained
}


class ConfigError(ValueError):
    """Unknown key or unparsable value."""


def _parse_value(key, raw):
    kind = _REGISTRY[key][0]
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "int_tuple":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if kind == "float_tuple":
            return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    raise ConfigError(f"unhandled kind {kind!r}")


def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Resolved configuration: registry defaults plus file plus overrides."""

    def __init__(self, values=None):
        self._values = {k: default for k, (_, default) in _REGISTRY.items()}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def __getitem__(self, key):
        if key not in self._values:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def set(self, key, value):
        if key not in _REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(key, value)
        self._values[key] = value

    def update_from_file(self, path):
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, raw = line.partition("=")
                self.set(key.strip(), raw)

    def update_from_pairs(self, pairs):
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"--set needs key=value, got {pair!r}")
            key, _, raw = pair.partition("=")
            self.set(key.strip(), raw)

    def dump(self):
        """Deterministic resolved-config text, one key per line."""
        lines = [f"{k} = {_format_value(self._values[k])}" for k in sorted(self._values)]
        return "\n".join(lines) + "\n"

    # -- typed views over module boundaries --

    def window_spec(self):
        from .video_io import WindowSpec

        return WindowSpec(self["di.window"], self["di.stride"])

    def rankpool_config(self):
        from .rank_pooling import RankPoolConfig

        return RankPoolConfig(
            lam=self["rankpool.lambda"],
            iters=self["rankpool.iters"],
            tol=self["rankpool.tol"],
            method=self["rankpool.method"],
        )

    def prednet_config(self, epochs=None, lr=None, lr_final=None, seed=None):
        from .prednet import PredNetConfig

        return PredNetConfig(
            num_layers=self["prednet.layers"],
            channels=self["prednet.channels"],
            kernel_size=self["prednet.kernel"],
            height=self["data.height"],
            width=self["data.width"],
            error_mode=self["prednet.error_mode"],
            noise_sigma=self["prednet.sigma"],
            layer_loss_weights=self["prednet.layer_weights"],
            rollout_target=self["prednet.rollout_target"],
            lr=self["prednet.lr"] if lr is None else lr,
            lr_final=self["prednet.lr_final"] if lr_final is None else lr_final,
            epochs=self["prednet.epochs"] if epochs is None else epochs,
            batch_size=self["prednet.batch"],
            sequence_length=self["prednet.sequence_length"],
            rollout_length=self["prednet.rollout_length"],
            context_length=self["prednet.context"],
            seed=self["seed"] if seed is None else seed,
            dtype=np.float32,
        )

    def classifier_config(self, seed=None):
        from .classifier import ClassifierConfig

        return ClassifierConfig(
            input_shape=(3, self["data.height"], self["data.width"]),
            channels=self["classifier.channels"],
            lr=self["classifier.lr"],
            momentum=self["classifier.momentum"],
            weight_decay=self["classifier.weight_decay"],
            batch_size=self["classifier.batch"],
            lr_decay_every=self["classifier.decay_interval"],
            lr_decay_factor=self["classifier.decay_factor"],
            iterations=self["classifier.iterations"],
            seed=self["seed"] if seed is None else seed,
        )


def load_config(path=None, overrides=(), seed=None):
    cfg = RunConfig()
    if path:
        cfg.update_from_file(path)
    cfg.update_from_pairs(overrides)
    if seed is not None:
        cfg.set("seed", int(seed))
    return cfg
