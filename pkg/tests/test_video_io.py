"""Frame IO round-trips, windowing arithmetic, synthetic generator checks."""

import numpy as np
import pytest

from dipred.labels import GAP, LabelTimeline
from dipred.video_io import (
    ActionScript,
    VideoError,
    VideoSequence,
    WindowSpec,
    gen_synthetic,
    load_frames,
    read_pnm,
    save_frames,
    sliding_windows,
    write_pnm,
)


def shape_centroid_x(frame, background_blue):
    """Independent oracle: blue-channel excess over the static background."""
    weights = np.clip(frame[2] - background_blue, 0.0, None)
    xs = np.arange(frame.shape[2])
    return float((weights.sum(axis=0) * xs).sum() / weights.sum())


class TestPnm:
    def test_ppm_round_trip_exact_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (6, 5, 3), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        write_pnm(path, img.transpose(2, 0, 1))
        assert np.array_equal(read_pnm(path), img)

    def test_pgm_round_trip(self, tmp_path):
        img = np.arange(20, dtype=np.uint8).reshape(4, 5)
        path = tmp_path / "x.pgm"
        write_pnm(path, img)
        assert np.array_equal(read_pnm(path), img)

    def test_comment_lines_skipped(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
        assert np.array_equal(read_pnm(path), [[0, 1], [2, 3]])

    def test_sixteen_bit_rejected(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x01")
        with pytest.raises(VideoError):
            read_pnm(path)


class TestFrameIO:
    def test_identical_frames_load_identically(self, tmp_path):
        frame = np.full((3, 4, 4), 0.5, dtype=np.float32)
        video = VideoSequence(np.stack([frame] * 3))
        save_frames(video, tmp_path)
        back = load_frames(tmp_path)
        assert len(back) == 3
        assert np.array_equal(back.frames[0], back.frames[1])
        assert np.array_equal(back.frames[1], back.frames[2])

    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(4)
        video = VideoSequence(rng.uniform(0, 1, (4, 3, 8, 8)).astype(np.float32))
        save_frames(video, tmp_path)
        back = load_frames(tmp_path)
        assert np.abs(back.frames - video.frames).max() <= 1.0 / 255.0

    def test_empty_directory_errors(self, tmp_path):
        with pytest.raises(VideoError, match="no frames"):
            load_frames(tmp_path)

    def test_grayscale_replicates_channels(self, tmp_path):
        write_pnm(tmp_path / "a.pgm", np.full((4, 4), 100, dtype=np.uint8))
        back = load_frames(tmp_path)
        assert back.frames.shape == (1, 3, 4, 4)
        assert np.array_equal(back.frames[0, 0], back.frames[0, 1])

    def test_inconsistent_dimensions_error(self, tmp_path):
        write_pnm(tmp_path / "a.ppm", np.zeros((3, 4, 4)))
        write_pnm(tmp_path / "b.ppm", np.zeros((3, 6, 4)))
        with pytest.raises(VideoError, match="differs"):
            load_frames(tmp_path)


class TestSlidingWindows:
    def test_paper_count_75_frames(self):
        video = VideoSequence(np.zeros((75, 3, 8, 8), dtype=np.float32))
        windows = sliding_windows(video, WindowSpec(30, 5))
        assert len(windows) == 10
        assert [s for s, _ in windows] == list(range(0, 50, 5))

    def test_exact_fit_single_window(self):
        video = VideoSequence(np.zeros((30, 3, 8, 8), dtype=np.float32))
        windows = sliding_windows(video, WindowSpec(30, 5))
        assert len(windows) == 1 and windows[0][0] == 0

    def test_tail_dropped(self):
        video = VideoSequence(np.zeros((34, 3, 8, 8), dtype=np.float32))
        assert len(sliding_windows(video, WindowSpec(30, 5))) == 1

    def test_every_window_full_length(self):
        video = VideoSequence(np.zeros((41, 3, 8, 8), dtype=np.float32))
        for start, window in sliding_windows(video, WindowSpec(7, 3)):
            assert window.shape[0] == 7

    def test_too_short_errors(self):
        video = VideoSequence(np.zeros((5, 3, 8, 8), dtype=np.float32))
        with pytest.raises(VideoError):
            sliding_windows(video, WindowSpec(30, 5))

    def test_bad_spec_rejected(self):
        with pytest.raises(VideoError):
            WindowSpec(1, 5)
        with pytest.raises(VideoError):
            WindowSpec(30, 0)


class TestSyntheticGenerator:
    def test_same_seed_bit_identical(self):
        script = ActionScript([(0, 20, 5), (2, 15, 0)], seed=42)
        v1 = gen_synthetic(script, 32, 40)
        v2 = gen_synthetic(script, 32, 40)
        assert np.array_equal(v1.frames, v2.frames)
        assert np.array_equal(v1.labels, v2.labels)

    def test_translate_right_centroid_increases(self):
        script = ActionScript([(0, 30, 0)], speed=0.5, seed=7)
        video = gen_synthetic(script, 32, 40)
        background_blue = np.median(video.frames[:, 2], axis=0)
        xs = [shape_centroid_x(f, background_blue) for f in video.frames]
        assert all(b > a for a, b in zip(xs, xs[1:]))

    def test_gap_frames_identical_and_labeled(self):
        script = ActionScript([(1, 10, 6)], seed=3)
        video = gen_synthetic(script, 32, 40)
        assert np.array_equal(video.labels[10:], np.full(6, GAP))
        for i in range(10, 15):
            assert np.array_equal(video.frames[i], video.frames[i + 1])

    def test_values_in_unit_range_and_label_count(self):
        script = ActionScript([(0, 12, 4), (3, 10, 2)], seed=5)
        video = gen_synthetic(script, 32, 40)
        assert len(video.labels) == len(video) == script.total_frames()
        assert video.frames.min() >= 0.0 and video.frames.max() <= 1.0

    def test_unknown_class_rejected(self):
        with pytest.raises(VideoError):
            ActionScript([(9, 10, 0)])

    def test_indivisible_size_rejected(self):
        with pytest.raises(VideoError):
            gen_synthetic(ActionScript([(0, 5, 0)]), 30, 40)

    def test_script_lines_round_trip(self):
        script = ActionScript([(0, 20, 5), (3, 15, 2)], speed=0.4, seed=11)
        back = ActionScript.from_lines(script.to_lines())
        assert back == script


class TestLabelTimeline:
    def test_segments_partition_frames(self):
        frames = np.array([0] * 5 + [GAP] * 3 + [1] * 4)
        tl = LabelTimeline(frames, {0: "right", 1: "left"})
        assert tl.segments() == [(0, 0, 5), (GAP, 5, 8), (1, 8, 12)]

    def test_action_starts_skip_gaps(self):
        tl = LabelTimeline(np.array([GAP, GAP, 0, 0, GAP, 1]))
        assert tl.action_starts() == [(0, 2), (1, 5)]

    def test_csv_round_trip(self, tmp_path):
        tl = LabelTimeline(np.array([0, 0, GAP, 1]), {0: "a", 1: "b"})
        path = tmp_path / "timeline.csv"
        tl.save_csv(path)
        back = LabelTimeline.load_csv(path, {0: "a", 1: "b"})
        assert np.array_equal(back.frames, tl.frames)
