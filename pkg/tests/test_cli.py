"""Pipeline stages end to end on a miniature corpus."""

import csv
import filecmp
import os

import numpy as np
import pytest

from dipred.cli import load_manifest, main

FAST_SETTINGS = [
    "data.train_videos=2",
    "data.val_videos=1",
    "data.test_videos=2",
    "data.actions_per_video=2",
    "data.min_duration=32",
    "data.max_duration=40",
    "data.min_gap=3",
    "data.max_gap=6",
    "rankpool.iters=100",
    "prednet.layers=3",
    "prednet.channels=3,6,12",
    "prednet.layer_weights=1,0,0",
    "prednet.sequence_length=6",
    "prednet.rollout_length=8",
    "prednet.context=4",
    "prednet.epochs=2",
    "prednet.subseq_stride=2",
    "prednet.finetune_epochs=1",
    "classifier.iterations=40",
    "classifier.lr=0.01",
    "classifier.decay_interval=30",
    "eval.horizon=2",
]


def run(command, out, *extra, seed=5):
    args = [command, "--out", str(out), "--seed", str(seed)]
    for s in FAST_SETTINGS + list(extra):
        args += ["--set", s]
    return main(args)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    assert run("gen", out) == 0
    assert run("di", out) == 0
    assert run("train", out) == 0
    assert run("finetune", out) == 0
    assert run("train-classifier", out) == 0
    assert run("eval", out) == 0
    return out


def tree_bytes(root, skip_names=()):
    """Map of relative path -> file bytes for the whole tree."""
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            if name in skip_names:
                continue
            path = os.path.join(base, name)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


class TestGen:
    def test_writes_three_splits_with_timelines(self, pipeline):
        for split, count in (("train", 2), ("val", 1), ("test", 2)):
            vids = sorted(os.listdir(pipeline / "data" / split))
            assert len(vids) == count
            for v in vids:
                vdir = pipeline / "data" / split / v
                assert (vdir / "timeline.csv").exists()
                assert (vdir / "script.cfg").exists()
                assert any(f.endswith(".ppm") for f in os.listdir(vdir))

    def test_refuses_overwrite_without_force(self, pipeline, capsys):
        assert run("gen", pipeline) == 1
        assert "force" in capsys.readouterr().err

    def test_zero_videos_rejected(self, tmp_path, capsys):
        code = run(
            "gen",
            tmp_path,
            "data.train_videos=0",
            "data.val_videos=0",
            "data.test_videos=0",
        )
        assert code == 1

    def test_rerun_with_force_is_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run("gen", out1) == 0
        assert run("gen", out2) == 0
        t1 = tree_bytes(out1 / "data")
        t2 = tree_bytes(out2 / "data")
        assert t1.keys() == t2.keys()
        assert all(t1[k] == t2[k] for k in t1)


class TestDi:
    def test_manifest_counts_match_window_arithmetic(self, pipeline):
        for split in ("train", "val", "test"):
            with open(pipeline / "di" / f"{split}_manifest.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            per_video = {}
            for row in rows:
                per_video.setdefault(row["video"], []).append(row)
            for video, vrows in per_video.items():
                frames = len(
                    [
                        f
                        for f in os.listdir(pipeline / "data" / split / video)
                        if f.endswith(".ppm")
                    ]
                )
                assert len(vrows) == (frames - 30) // 5 + 1

    def test_manifest_carries_labels_and_bounds(self, pipeline):
        videos = load_manifest(pipeline, "train")
        for dis in videos:
            for di in dis:
                assert di.label is not None
                assert di.next_label is not None
                lo, hi = di.norm_bounds
                assert lo <= hi

    def test_short_video_skipped_with_warning(self, tmp_path, capsys):
        out = tmp_path / "short"
        assert (
            run(
                "gen",
                out,
                "data.train_videos=1",
                "data.val_videos=0",
                "data.test_videos=0",
                "data.actions_per_video=1",
                "data.min_duration=16",
                "data.max_duration=20",
                "data.min_gap=0",
                "data.max_gap=0",
            )
            == 0
        )
        assert run("di", out) == 0
        assert "skipping" in capsys.readouterr().out

    def test_missing_inputs_error(self, tmp_path, capsys):
        assert run("di", tmp_path / "nowhere") == 1


class TestTrain:
    def test_loss_csv_one_row_per_epoch_with_lr(self, pipeline):
        with open(pipeline / "models" / "prednet_loss.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["epoch"] for r in rows] == ["0", "1"]
        assert rows[0]["lr"] == "0.001"
        assert rows[1]["lr"] == "0.0001"  # halving kicks in at epoch 1 of 2

    def test_missing_manifest_error(self, tmp_path):
        assert run("train", tmp_path / "empty") == 1

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        straight, resumed = tmp_path / "s", tmp_path / "r"
        for out in (straight, resumed):
            assert run("gen", out) == 0
            assert run("di", out) == 0
        assert run("train", straight, "prednet.epochs=2") == 0
        assert run("train", resumed, "prednet.epochs=2", "prednet.stop_epoch=1") == 0
        ckpt = resumed / "models" / "prednet.ckpt"
        assert (
            run(
                "train",
                resumed,
                "prednet.epochs=2",
                f"prednet.resume={ckpt}",
            )
            == 0
        )
        with open(straight / "models" / "prednet_loss.csv", newline="") as fh:
            straight_rows = list(csv.DictReader(fh))
        with open(resumed / "models" / "prednet_loss.csv", newline="") as fh:
            resumed_rows = list(csv.DictReader(fh))
        assert straight_rows[1] == resumed_rows[0]  # epoch-1 loss reproduced
        s = tree_bytes(straight / "models", skip_names=("prednet_loss.csv",))
        r = tree_bytes(resumed / "models", skip_names=("prednet_loss.csv",))
        assert s["prednet.ckpt"] == r["prednet.ckpt"]


class TestClassifierStage:
    def test_checkpoint_and_loss_written(self, pipeline):
        assert (pipeline / "models" / "classifier.ckpt").exists()
        with open(pipeline / "models" / "classifier_loss.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 40

    def test_original_window_mode(self, tmp_path):
        out = tmp_path / "orig"
        assert run("gen", out) == 0
        assert run("di", out) == 0
        assert (
            run(
                "train-classifier",
                out,
                "classifier.inputs=original",
                "classifier.label_mode=window",
            )
            == 0
        )
        assert (out / "models" / "classifier.ckpt").exists()


class TestEval:
    def test_report_exists_with_expected_rows(self, pipeline):
        from dipred.evaluation import read_report

        report = read_report(pipeline / "reports" / "metrics.csv")
        assert ("model_mse", "") in report
        assert ("prev_mse", "") in report
        assert report[("classifier", "")] == "present"
        assert ("accuracy", "k=1") in report
        assert ("accuracy", "k=2") in report
        assert ("avg_of_td", "0") in report or len(
            [k for k in report if k[0] == "avg_of_td"]
        ) > 0
        assert (pipeline / "reports" / "horizon_accuracy.csv").exists()

    def test_identical_rerun_gives_identical_report(self, pipeline):
        before = (pipeline / "reports" / "metrics.csv").read_bytes()
        assert run("eval", pipeline) == 0
        after = (pipeline / "reports" / "metrics.csv").read_bytes()
        assert before == after

    def test_eval_without_classifier_reports_mse_only(self, tmp_path, capsys):
        out = tmp_path / "noclf"
        assert run("gen", out) == 0
        assert run("di", out) == 0
        assert run("train", out, "prednet.epochs=1") == 0
        assert run("eval", out) == 0
        from dipred.evaluation import read_report

        report = read_report(out / "reports" / "metrics.csv")
        assert report[("classifier", "")] == "absent"
        assert ("model_mse", "") in report
        assert not any(k[0] == "accuracy" for k in report)

    def test_missing_checkpoint_error(self, tmp_path):
        out = tmp_path / "nockpt"
        assert run("gen", out) == 0
        assert run("di", out) == 0
        assert run("eval", out) == 1
