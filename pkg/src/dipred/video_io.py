"""Frame sequences on disk, synthetic multi-action clips, sliding windows.

Frames are (3, H, W) float arrays in [0, 1], stored on disk as binary
8-bit PGM (P5) or PPM (P6).  The synthetic generator renders one bright
antialiased square moving over a static textured background, one motion
pattern per action class, with still gaps between actions.
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass, field

import numpy as np

from .labels import GAP, LabelTimeline

ACTION_NAMES = {0: "right", 1: "left", 2: "down", 3: "grow"}
ACTION_IDS = {name: cid for cid, name in ACTION_NAMES.items()}


class VideoError(ValueError):
    """Unusable frame data or an impossible video request."""


@dataclass
class VideoSequence:
    """Ordered frames with a frame rate and optional per-frame labels."""

    frames: np.ndarray  # (T, 3, H, W) float32 in [0, 1]
    fps: float = 30.0
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise VideoError(f"frames must be (T, 3, H, W), got {self.frames.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.frames):
                raise VideoError("labels must have one entry per frame")

    def __len__(self):
        return len(self.frames)

    @property
    def frame_shape(self):
        return self.frames.shape[1:]

    def timeline(self, class_names=None):
        if self.labels is None:
            raise VideoError(f"video {self.name!r} carries no labels")
        return LabelTimeline(self.labels, dict(class_names or ACTION_NAMES))


@dataclass
class WindowSpec:
    """Sliding-window geometry: window length and stride, in frames."""

    window: int = 30
    stride: int = 5

    def __post_init__(self):
        if self.window < 2:
            raise VideoError(f"window must be >= 2, got {self.window}")
        if self.stride < 1:
            raise VideoError(f"stride must be >= 1, got {self.stride}")


def sliding_windows(video, spec):
    """All full windows as (start_frame, (W, 3, H, W) view) pairs.

    Starts advance by the stride; a trailing window that would run past the
    end is dropped, so the count is floor((T - W) / s) + 1.
    """
    frames = video.frames if isinstance(video, VideoSequence) else np.asarray(video)
    t = len(frames)
    if t < spec.window:
        raise VideoError(f"video has {t} frames, shorter than window {spec.window}")
    return [
        (start, frames[start : start + spec.window])
        for start in range(0, t - spec.window + 1, spec.stride)
    ]


# ---------------------------------------------------------------------------
# PGM / PPM files


def write_pnm(path, image):
    """8-bit binary PGM for (H, W), PPM for (3, H, W) channels-first arrays."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[0] == 3:
        arr = arr.transpose(1, 2, 0)
        magic = b"P6"
    elif arr.ndim == 2:
        magic = b"P5"
    else:
        raise VideoError(f"cannot encode array of shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def read_pnm(path):
    """Read binary PGM/PPM; returns uint8 (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, data = _pnm_token(data, path)
    if magic not in (b"P5", b"P6"):
        raise VideoError(f"{path}: unsupported format {magic!r}")
    w, data = _pnm_token(data, path)
    h, data = _pnm_token(data, path)
    maxval, data = _pnm_token(data, path)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise VideoError(f"{path}: only 8-bit maxval 255 supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    if len(data) < need:
        raise VideoError(f"{path}: truncated pixel data")
    arr = np.frombuffer(data[:need], dtype=np.uint8)
    return arr.reshape((h, w, 3)) if channels == 3 else arr.reshape((h, w))


def _pnm_token(data, path):
    # one whitespace-delimited token, skipping '#' comment lines
    i = 0
    while True:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        break
    j = i
    while j < len(data) and not data[j : j + 1].isspace():
        j += 1
    if i == j:
        raise VideoError(f"{path}: malformed header")
    # single whitespace after the last header token precedes the raster
    return data[i:j], data[j + 1 :] if data[j : j + 1].isspace() else data[j:]


def save_frames(video, directory, prefix="frame"):
    """Write each frame as <prefix>_NNNNN.ppm; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, frame in enumerate(video.frames):
        path = os.path.join(directory, f"{prefix}_{i:05d}.ppm")
        write_pnm(path, frame)
        paths.append(path)
    return paths


def load_frames(directory, pattern="*.p[pgn]m", fps=30.0, name=None):
    """Frames from a directory of PGM/PPM files, in lexicographic order.

    Pixel bytes scale to [0, 1]; grayscale replicates to three channels.
    """
    files = sorted(glob.glob(os.path.join(directory, pattern)))
    if not files:
        raise VideoError(f"no frames matching {pattern!r} in {directory}")
    frames = []
    shape = None
    for path in files:
        img = read_pnm(path)
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise VideoError(
                f"{path}: frame shape {img.shape} differs from first frame {shape}"
            )
        frames.append(img.transpose(2, 0, 1).astype(np.float32) / 255.0)
    return VideoSequence(
        np.stack(frames), fps=fps, name=name or os.path.basename(directory)
    )


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class ActionScript:
    """A storyboard: (class_id, duration, gap_after) entries plus shape/speed.

    Deterministic given the seed; drives one rendered video.
    """

    entries: list  # (class_id, duration_frames, gap_after_frames)
    speed: float = 0.5  # translation, px/frame
    grow_rate: float = 0.25  # half-size growth, px/frame
    shape_size: float = 5.0  # half-size of the square, px
    seed: int = 0

    def __post_init__(self):
        for cid, duration, gap in self.entries:
            if cid not in ACTION_NAMES:
                raise VideoError(f"unknown action class {cid}")
            if duration < 1:
                raise VideoError(f"duration must be >= 1, got {duration}")
            if gap < 0:
                raise VideoError(f"gap must be >= 0, got {gap}")

    def total_frames(self):
        return sum(d + g for _, d, g in self.entries)

    def to_lines(self):
        parts = [
            f"{ACTION_NAMES[c]}:{d}:{g}" for c, d, g in self.entries
        ]
        return [
            f"entries = {','.join(parts)}",
            f"speed = {self.speed!r}",
            f"grow_rate = {self.grow_rate!r}",
            f"shape_size = {self.shape_size!r}",
            f"seed = {self.seed}",
        ]

    @classmethod
    def from_lines(cls, lines):
        kv = {}
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        entries = []
        for part in kv["entries"].split(","):
            name, duration, gap = part.strip().split(":")
            entries.append((ACTION_IDS[name], int(duration), int(gap)))
        return cls(
            entries=entries,
            speed=float(kv.get("speed", 0.5)),
            grow_rate=float(kv.get("grow_rate", 0.25)),
            shape_size=float(kv.get("shape_size", 5.0)),
            seed=int(kv.get("seed", 0)),
        )


MARGIN = 1.5  # px kept between the square and the frame edge


def max_feasible_duration(class_id, height, width, speed, shape_size, grow_rate):
    """Longest duration whose full trajectory stays inside the frame."""
    if class_id == ACTION_IDS["grow"]:
        room = min(height, width) / 2.0 - MARGIN - shape_size
        return max(1, int(room / grow_rate)) if grow_rate > 0 else 10**6
    room_x = width - 2.0 * (MARGIN + shape_size)
    room_y = height - 2.0 * (MARGIN + shape_size)
    room = room_y if class_id == ACTION_IDS["down"] else room_x
    return max(1, int(room / speed)) if speed > 0 else 10**6


def random_script(
    rng,
    height,
    width,
    actions=3,
    min_duration=40,
    max_duration=60,
    min_gap=4,
    max_gap=10,
    speed=0.45,
    shape_size=4.0,
    grow_rate=0.12,
    order="cyclic",
):
    """Storyboard with feasible durations; cyclic order starts at a random
    phase so every video sees the same action-transition structure."""
    class_ids = sorted(ACTION_NAMES)
    if order == "cyclic":
        phase = int(rng.integers(len(class_ids)))
        picks = [class_ids[(phase + i) % len(class_ids)] for i in range(actions)]
    elif order == "random":
        picks = [int(rng.choice(class_ids)) for _ in range(actions)]
    else:
        raise VideoError(f"unknown action order {order!r}")
    entries = []
    for cid in picks:
        cap = max_feasible_duration(cid, height, width, speed, shape_size, grow_rate)
        hi = min(max_duration, cap)
        lo = min(min_duration, hi)
        duration = int(rng.integers(lo, hi + 1))
        gap = int(rng.integers(min_gap, max_gap + 1))
        entries.append((cid, duration, gap))
    return ActionScript(
        entries=entries,
        speed=speed,
        grow_rate=grow_rate,
        shape_size=shape_size,
        seed=int(rng.integers(2**31)),
    )


def _render(bg, cx, cy, half, color):
    """Composite an antialiased axis-aligned square onto the background."""
    h, w = bg.shape[1:]
    xs = np.arange(w)
    ys = np.arange(h)
    cov_x = np.clip(np.minimum(cx + half, xs + 1) - np.maximum(cx - half, xs), 0, 1)
    cov_y = np.clip(np.minimum(cy + half, ys + 1) - np.maximum(cy - half, ys), 0, 1)
    cov = np.outer(cov_y, cov_x)[None, :, :]
    return bg * (1.0 - cov) + color[:, None, None] * cov


def _textured_background(rng, h, w):
    # low-amplitude blotches: smoothed noise so DIs see non-trivial statics
    noise = rng.uniform(0.0, 1.0, (h, w))
    for _ in range(2):
        noise = (
            noise
            + np.roll(noise, 1, 0)
            + np.roll(noise, -1, 0)
            + np.roll(noise, 1, 1)
            + np.roll(noise, -1, 1)
        ) / 5.0
    base = 0.18 + 0.14 * noise
    tint = np.array([1.0, 0.95, 0.9])
    return (tint[:, None, None] * base[None, :, :]).astype(np.float64)


def gen_synthetic(script, height=32, width=40):
    """Render a labeled multi-action video from a script.

    Each action class moves the square in its own way (translate right,
    left, down, or grow in place); gap frames hold it still and are labeled
    GAP.  The square starts each action where the previous one left it when
    the motion fits, otherwise it is re-placed inside the feasible box.
    """
    if height % 8 or width % 8:
        raise VideoError(f"height and width must be divisible by 8, got {height}x{width}")
    rng = np.random.default_rng(script.seed)
    bg = _textured_background(rng, height, width)
    color = np.array([0.95, 0.85, 0.55])
    margin = MARGIN

    frames, labels = [], []
    cx = cy = None
    for cid, duration, gap in script.entries:
        half = script.shape_size
        travel = script.speed * duration
        if cid == ACTION_IDS["grow"]:
            grow = min(script.grow_rate, (min(height, width) / 2 - margin - half) / duration)
            lo_x, hi_x = margin + half + grow * duration, width - margin - half - grow * duration
            lo_y, hi_y = margin + half + grow * duration, height - margin - half - grow * duration
            dx = dy = 0.0
        else:
            dx = {0: 1.0, 1: -1.0, 2: 0.0}[cid] * script.speed
            dy = script.speed if cid == ACTION_IDS["down"] else 0.0
            lo_x = margin + half + (travel if dx < 0 else 0.0)
            hi_x = width - margin - half - (travel if dx > 0 else 0.0)
            lo_y = margin + half
            hi_y = height - margin - half - (travel if dy > 0 else 0.0)
            grow = 0.0
        if lo_x > hi_x or lo_y > hi_y:
            raise VideoError(
                f"action {ACTION_NAMES[cid]} with duration {duration} does not fit "
                f"a {height}x{width} frame at speed {script.speed}"
            )
        if cx is None or not (lo_x <= cx <= hi_x and lo_y <= cy <= hi_y):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
        for _ in range(duration):
            frames.append(_render(bg, cx, cy, half, color))
            labels.append(cid)
            cx += dx
            cy += dy
            half += grow
        still = _render(bg, cx, cy, half, color)
        for _ in range(gap):
            frames.append(still)
            labels.append(GAP)

    video = VideoSequence(
        np.clip(np.stack(frames), 0.0, 1.0).astype(np.float32),
        fps=30.0,
        labels=np.array(labels),
        name=f"synthetic-{script.seed}",
    )
    return video
