"""Walkthrough: from a synthetic clip to dynamic images.

Renders a short multi-action video, builds the rank-pooled summary of each
sliding window, and shows how the fitted vector concentrates on motion
while static background cancels out.  Writes PPM previews next to this
script under output/dynamic_images/.
"""

import os

import numpy as np

from dipred.rank_pooling import RankPoolConfig, di_sequence, rank_pool, running_means
from dipred.video_io import ActionScript, WindowSpec, gen_synthetic, write_pnm

OUT = os.path.join(os.path.dirname(__file__), "output", "dynamic_images")
os.makedirs(OUT, exist_ok=True)

# A square translates right for 40 frames, rests 10, then grows in place.
script = ActionScript(
    entries=[(0, 40, 10), (3, 35, 0)], speed=0.4, shape_size=4.0, seed=7
)
video = gen_synthetic(script, height=32, width=40)
print(f"rendered {len(video)} frames of {video.frame_shape[1]}x{video.frame_shape[2]}")
print(f"labels: {sorted(set(int(l) for l in video.labels))}  (-1 marks rest gaps)")

# One window up close: the ranking vector scores later frames higher.
window = video.frames[:30]
cfg = RankPoolConfig(lam=1.0)
d, trace = rank_pool(window, cfg, return_trace=True)
v = running_means(window)
scores = v @ d
print(f"\nsolver objective went {trace[0]:.4f} -> {trace[-1]:.4f} "
      f"over {len(trace)} accepted iterates")
print("frame scores (every 5th):", np.round(scores[::5], 2))
print("later frames score higher:", bool(np.all(np.diff(scores) > 0)))

# Static pixels cancel exactly: compare energy on vs off the motion path.
moving = video.frames[:30].std(axis=0).max(axis=0) > 1e-7
di_flat = np.abs(d.reshape(3, 32, 40))
print(f"peak |d| on moving pixels:  {di_flat[:, moving].max():.4f}")
print(f"peak |d| on static pixels:  {di_flat[:, ~moving].max():.4f}")

# The whole clip as a DI sequence, one image per 30-frame window, stride 5.
dis = di_sequence(video, WindowSpec(30, 5), cfg)
print(f"\n{len(dis)} dynamic images summarize {len(video)} frames")
for i, di in enumerate(dis[:3]):
    path = os.path.join(OUT, f"di_{di.source[1]:03d}.ppm")
    write_pnm(path, di.normalized())
    print(f"  window at frame {di.source[1]:3d} -> label {di.label}, "
          f"bounds ({di.norm_bounds[0]:.3f}, {di.norm_bounds[1]:.3f}), "
          f"preview {os.path.relpath(path)}")
print("...")
