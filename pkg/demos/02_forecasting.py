"""Walkthrough: training the recurrent forecaster on dynamic images.

Builds a small corpus of moving-square clips, turns each into a dynamic
image sequence, trains the predictive network to forecast the next image,
and compares its error against the copy-last-image baseline.  Desk-scale
settings keep this to a couple of minutes.
"""

import numpy as np

from dipred.evaluation import evaluate_prediction
from dipred.prednet import PredNetConfig, init_model, predict_rollout, train
from dipred.rank_pooling import RankPoolConfig, di_sequence
from dipred.video_io import WindowSpec, gen_synthetic, random_script

rng = np.random.default_rng(42)
spec = WindowSpec(30, 5)
rp = RankPoolConfig()

print("building 8 training videos and 2 held-out videos...")
train_dis, test_dis = [], []
for i in range(10):
    script = random_script(rng, 32, 40, actions=2, speed=0.3)
    video = gen_synthetic(script, 32, 40)
    dis = di_sequence(video, spec, rp)
    (train_dis if i < 8 else test_dis).append(dis)
print(f"  {sum(len(d) for d in train_dis)} training images, "
      f"{sum(len(d) for d in test_dis)} held-out")

cfg = PredNetConfig(
    channels=(3, 8, 16, 32),
    height=32,
    width=40,
    epochs=6,
    batch_size=4,
    sequence_length=10,
    seed=1,
)
sequences = []
for dis in train_dis:
    arrays = [di.normalized() for di in dis]
    sequences.extend(
        arrays[s : s + 10] for s in range(0, len(arrays) - 9, 2)
    )
print(f"\ntraining on {len(sequences)} ten-image subsequences...")
model = init_model(cfg)
history, _ = train(model, sequences, cfg)
for epoch, loss, lr in history.epochs:
    print(f"  epoch {epoch}: loss {loss:.4f} (lr {lr})")

print("\nforecast quality on held-out videos:")
report = evaluate_prediction(model, test_dis)
print(f"  model mse: {report.model_mse:.5f}")
print(f"  copy-last baseline mse: {report.prev_mse:.5f}")
print(f"  ratio: {report.model_mse / report.prev_mse:.3f} (below 1.0 means the "
      "forecast beats copying)")

context = test_dis[0][:10]
rollout = predict_rollout(model, context, horizon=5)
print("\nfive-step rollout from one context, per-step mse vs actual:")
for k, pred in enumerate(rollout, start=1):
    actual = test_dis[0][9 + k].normalized()
    print(f"  k={k}: {float(((pred.values - actual) ** 2).mean()):.5f}")
