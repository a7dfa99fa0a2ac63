"""Shared fixtures: the one expensive end-to-end trained pipeline."""

import json
import time

import pytest

from dipred.cli import main

# Desk-scale acceptance setup: 20 training videos at 32x40 with channel
# ladder (3, 8, 16, 32).  Motion is kept under ~1.5 px per window stride so
# the bottom prediction path's receptive field can track it.
ACCEPTANCE_SETTINGS = [
    "data.train_videos=20",
    "data.val_videos=2",
    "data.test_videos=4",
    "data.speed=0.3",
    "prednet.epochs=16",
    "prednet.subseq_stride=2",
    "prednet.finetune_epochs=4",
    "classifier.lr=0.01",
    "classifier.iterations=1200",
    "classifier.decay_interval=600",
]

ACCEPTANCE_SEED = 11


def run_stage(command, out, *extra, seed=ACCEPTANCE_SEED, settings=None):
    args = [command, "--out", str(out), "--seed", str(seed)]
    for s in (ACCEPTANCE_SETTINGS if settings is None else settings) + list(extra):
        args += ["--set", s]
    code = main(args)
    if code != 0:
        raise RuntimeError(f"stage {command} failed with exit code {code}")
    return out


@pytest.fixture(scope="session")
def trained_pipeline(tmp_path_factory):
    """gen -> di -> train -> finetune -> train-classifier, shared by the
    slow acceptance criteria.  Several minutes of CPU."""
    out = tmp_path_factory.mktemp("acceptance_run")
    times = {}
    for stage in ("gen", "di", "train", "finetune", "train-classifier"):
        t0 = time.time()
        run_stage(stage, out)
        times[stage] = time.time() - t0
    (out / "stage_times.json").write_text(json.dumps(times))
    return out
