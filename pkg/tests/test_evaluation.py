"""Metric definitions: MSE pairs, horizon labels, temporal distance, reports."""

import numpy as np
import pytest

from dipred.classifier import next_action_labels
from dipred.evaluation import (
    MetricsReport,
    avg_of_td,
    evaluate_prediction,
    horizon_accuracy,
    mse,
    prev_baseline_mse,
    read_report,
    rollout_mse_by_horizon,
    write_horizon_csv,
    write_report,
)
from dipred.labels import GAP, LabelTimeline
from dipred.numerics import ShapeError
from dipred.prednet import PredNetConfig, init_model
from dipred.rank_pooling import DynamicImage


class TestMse:
    def test_identical_tensors(self):
        x = np.random.default_rng(0).uniform(0, 1, (3, 4, 4))
        assert mse(x, x) == 0.0

    def test_scalar_example(self):
        assert mse(np.array([0.4]), np.array([0.6])) == pytest.approx(0.04)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(0, 1, (2, 3)), rng.uniform(0, 1, (2, 3))
        assert mse(a, b) == mse(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_uses_normalized_view_of_dynamic_images(self):
        a = DynamicImage(np.array([[[0.0, 2.0]]], np.float32), norm_bounds=(0.0, 2.0))
        b = DynamicImage(np.array([[[2.0, 2.0]]], np.float32), norm_bounds=(0.0, 2.0))
        # normalized views are [0, 1] and [1, 1] -> mse 0.5
        assert mse(a, b) == pytest.approx(0.5)


class TestPrevBaseline:
    def test_constant_sequence_is_zero(self):
        dis = [np.full((2, 2), 0.3) for _ in range(8)]
        assert prev_baseline_mse(dis, 3) == 0.0

    def test_alternating_pair(self):
        u, v = np.zeros((2, 2)), np.full((2, 2), 0.5)
        dis = [u, v] * 4
        assert prev_baseline_mse(dis, 3) == pytest.approx(mse(u, v))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            prev_baseline_mse([np.zeros((2, 2))] * 3, 3)


TINY = PredNetConfig(
    num_layers=2,
    channels=(3, 4),
    height=8,
    width=8,
    layer_loss_weights=(1.0, 0.0),
    context_length=3,
)


def synthetic_di_video(n, seed, label_plan=None):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        values = rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
        di = DynamicImage(
            values, source=(f"vid{seed}", i * 5, 30), norm_bounds=(0.0, 1.0)
        )
        di.next_label = label_plan[i] if label_plan else 0
        out.append(di)
    return out


class TestEvaluatePrediction:
    def test_untrained_model_still_reports(self):
        model = init_model(TINY, seed=0)
        videos = [synthetic_di_video(8, seed=1), synthetic_di_video(7, seed=2)]
        report = evaluate_prediction(model, videos)
        assert report.model_mse is not None and report.prev_mse is not None
        assert report.position_count == (8 - 3) + (7 - 3)
        assert report.model_mse >= 0 and report.prev_mse >= 0
        assert len(report.per_video) == 2

    def test_short_videos_skipped_but_one_needed(self):
        model = init_model(TINY, seed=0)
        videos = [synthetic_di_video(2, seed=3)]
        with pytest.raises(ValueError):
            evaluate_prediction(model, videos)

    def test_identical_position_sets_for_both_mses(self):
        # a constant DI list: copy baseline is exactly zero on every position
        model = init_model(TINY, seed=0)
        frame = np.full((3, 8, 8), 0.4, np.float32)
        dis = [
            DynamicImage(frame, source=("v", i * 5, 30), norm_bounds=(0.0, 1.0))
            for i in range(9)
        ]
        report = evaluate_prediction(model, [dis])
        assert report.prev_mse == 0.0
        assert report.position_count == 6


class NearestClassifierStub:
    """Labels an image by the nearest of a fixed set of prototypes."""

    def __init__(self, prototypes):
        self.prototypes = prototypes  # class id -> array

    def logits(self, image):
        raise NotImplementedError


def stub_classify(stub):
    def _classify(_model, image):
        values = image.normalized() if isinstance(image, DynamicImage) else image
        best, best_d = None, np.inf
        for cid, proto in stub.prototypes.items():
            d = float(((values - proto) ** 2).mean())
            if d < best_d:
                best, best_d = cid, d
        return best, None

    return _classify


class TestHorizonAccuracy:
    def test_per_horizon_counts_shrink(self, monkeypatch):
        model = init_model(TINY, seed=0)
        video = synthetic_di_video(8, seed=4, label_plan=[0] * 8)
        import dipred.evaluation as ev

        monkeypatch.setattr(
            ev, "classify", lambda m, x: (0, None)
        )  # always right
        acc, counts = horizon_accuracy(model, None, [video], horizon=3)
        assert acc == {1: 1.0, 2: 1.0, 3: 1.0}
        # positions: i in 0..4 -> max_k = min(3, 7-(i+2)) = 3,3,3,2,1
        assert counts == {1: 5, 2: 4, 3: 3}

    def test_permutation_invariance(self, monkeypatch):
        import dipred.evaluation as ev

        model = init_model(TINY, seed=1)
        rng = np.random.default_rng(5)
        monkeypatch.setattr(
            ev, "classify", lambda m, x: (int(x.values.sum() * 100) % 2, None)
        )
        v1 = synthetic_di_video(7, seed=6, label_plan=[0, 1] * 4)
        v2 = synthetic_di_video(9, seed=7, label_plan=[1, 0] * 5)
        a1, c1 = horizon_accuracy(model, None, [v1, v2], horizon=2)
        a2, c2 = horizon_accuracy(model, None, [v2, v1], horizon=2)
        assert a1 == a2 and c1 == c2

    def test_missing_labels_rejected(self):
        model = init_model(TINY, seed=0)
        video = synthetic_di_video(6, seed=8)
        for di in video:
            di.next_label = None
        with pytest.raises(ValueError):
            horizon_accuracy(model, None, [video], horizon=1)

    def test_rollout_mse_reported_per_horizon(self):
        model = init_model(TINY, seed=2)
        video = synthetic_di_video(8, seed=9)
        out = rollout_mse_by_horizon(model, [video], horizon=3)
        assert sorted(out) == [1, 2, 3]
        assert all(v >= 0 for v in out.values())


class TestAvgOfTd:
    def test_stable_prediction_72_frames_early(self):
        t, s = 300, 200
        tl = LabelTimeline(np.concatenate([np.full(s, GAP), np.full(t - s, 3)]))
        predicted = [0] * t
        for f in range(s - 72, s):
            predicted[f] = 3
        predicted[s - 73] = 1
        means, counts = avg_of_td(predicted, tl)
        assert means == {3: 72.0}
        assert counts == {3: 1}

    def test_never_predicted_gives_zero(self):
        tl = LabelTimeline(np.concatenate([np.full(40, GAP), np.full(10, 2)]))
        predicted = [0] * 50
        means, _ = avg_of_td(predicted, tl)
        assert means == {2: 0.0}

    def test_stability_clause_ignores_broken_early_run(self):
        # predicted c on [40, 50], wrong on [51, 59], c on [60, 100); start 100
        tl = LabelTimeline(
            np.concatenate([np.full(100, GAP), np.full(20, 7)])
        )
        predicted = [0] * 120
        for f in range(40, 51):
            predicted[f] = 7
        for f in range(60, 100):
            predicted[f] = 7
        means, _ = avg_of_td(predicted, tl)
        assert means == {7: 40.0}

    def test_none_prefix_blocks_run(self):
        tl = LabelTimeline(np.concatenate([np.full(5, GAP), np.full(5, 1)]))
        predicted = [None, None, None, 1, 1, 1, 1, 1, 1, 1]
        means, _ = avg_of_td(predicted, tl)
        assert means == {1: 2.0}

    def test_shrinking_stable_window_reduces_distance(self):
        tl = LabelTimeline(np.concatenate([np.full(50, GAP), np.full(10, 4)]))
        base = [0] * 60
        for f in range(30, 50):
            base[f] = 4
        shorter = list(base)
        shorter[30] = 0  # break one frame off the front of the run
        d_long, _ = avg_of_td(base, tl)
        d_short, _ = avg_of_td(shorter, tl)
        assert d_short[4] < d_long[4]

    def test_multiple_instances_average_per_class(self):
        tl = LabelTimeline(
            np.concatenate(
                [np.full(10, GAP), np.full(10, 1), np.full(10, GAP), np.full(10, 1)]
            )
        )
        predicted = [0] * 40
        predicted[8] = predicted[9] = 1  # 2 frames before first start (10)
        for f in range(26, 30):
            predicted[f] = 1  # 4 frames before second start (30)
        means, counts = avg_of_td(predicted, tl)
        assert means == {1: 3.0}
        assert counts == {1: 2}


class TestReports:
    def make_report(self):
        return MetricsReport(
            model_mse=0.001234567891234,
            prev_mse=0.00234,
            model_mse_raw=0.1,
            prev_mse_raw=0.2,
            position_count=42,
            accuracy_by_horizon={1: 0.9, 2: 0.7},
            horizon_counts={1: 10, 2: 8},
            rollout_mse_by_horizon={1: 0.01, 2: 0.02},
            avg_of_td_per_class={0: 12.5, 1: 3.0},
            td_counts={0: 2, 1: 1},
            per_video={"vid": (0.001, 0.002, 21)},
            classifier_present=True,
        )

    def test_round_trip_recovers_scalars_exactly(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "metrics.csv"
        write_report(report, path)
        back = read_report(path)
        assert back[("model_mse", "")] == report.model_mse
        assert back[("accuracy", "k=2")] == 0.7
        assert back[("avg_of_td", "0")] == 12.5
        assert back[("classifier", "")] == "present"

    def test_deterministic_bytes(self, tmp_path):
        report = self.make_report()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report(report, p1)
        write_report(report, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_report_has_header_and_zero_count(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_report(MetricsReport(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "metric,name,value,count"
        assert lines[1] == "positions,,0,0"

    def test_horizon_csv(self, tmp_path):
        path = tmp_path / "h.csv"
        write_horizon_csv({1: 0.5, 2: 0.25}, path)
        lines = path.read_text().strip().splitlines()
        assert lines == ["horizon,accuracy", "1,0.5", "2,0.25"]


class TestNextActionLabelsIntegration:
    def test_labels_follow_windows(self):
        # 75 frames: action 0 on [0, 40), gap [40, 50), action 1 on [50, 75)
        frames = np.concatenate([np.full(40, 0), np.full(10, GAP), np.full(25, 1)])
        tl = LabelTimeline(frames)
        dis = [
            DynamicImage(
                np.zeros((3, 4, 4), np.float32), source=("v", s, 30)
            )
            for s in range(0, 50, 5)
        ]
        next_action_labels(dis, tl)
        # window [0,30) -> frame 30 is action 0; window [15,45) -> frame 45 is
        # a gap relabeled to 1; window [45,75) ends at the video end
        assert dis[0].next_label == 0
        assert dis[3].next_label == 1
        assert dis[-1].next_label == -2
