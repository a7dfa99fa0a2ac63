"""Forecast-quality metrics: model vs copy-last MSE, accuracy over rollout
horizons, and how early the next action is (stably) predicted."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .classifier import classify
from .numerics import ShapeError
from .prednet import predict_next, predict_rollout
from .rank_pooling import DynamicImage


def _as_normalized(x):
    return x.normalized() if isinstance(x, DynamicImage) else np.asarray(x)


def mse(a, b):
    """Mean squared difference over all elements, on the normalized view."""
    a, b = _as_normalized(a), _as_normalized(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float((diff * diff).mean())


def prev_baseline_mse(dis, context_length):
    """Copy-last baseline: the last context image stands in as the forecast."""
    if len(dis) <= context_length:
        raise ValueError(
            f"need more than {context_length} images, got {len(dis)}"
        )
    vals = [
        mse(dis[i + context_length - 1], dis[i + context_length])
        for i in range(len(dis) - context_length)
    ]
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    """Everything the evaluation stage measures, with counts."""

    model_mse: float | None = None
    prev_mse: float | None = None
    model_mse_raw: float | None = None
    prev_mse_raw: float | None = None
    position_count: int = 0
    accuracy_by_horizon: dict = field(default_factory=dict)  # k -> fraction
    horizon_counts: dict = field(default_factory=dict)  # k -> evaluated pairs
    rollout_mse_by_horizon: dict = field(default_factory=dict)
    avg_of_td_per_class: dict = field(default_factory=dict)  # class -> frames
    td_counts: dict = field(default_factory=dict)  # class -> instances
    per_video: dict = field(default_factory=dict)  # name -> (model, prev, count)
    classifier_present: bool = False


def _raw_pair(pred_di, actual_di):
    lo, hi = actual_di.norm_bounds
    pred_raw = pred_di.values.astype(np.float64) * (hi - lo) + lo
    return float(((pred_raw - actual_di.values) ** 2).mean())


def evaluate_prediction(model, test_videos, context_length=None):
    """Model MSE against copy-last MSE over identical context positions.

    ``test_videos`` holds one DynamicImage list per video.  Videos without
    a full context plus one target are skipped.  MSE is computed on the
    normalized view; the raw-valued variant (forecast mapped through the
    target's normalization bounds) is reported alongside.
    """
    c = context_length if context_length is not None else model.cfg.context_length
    report = MetricsReport()
    model_sum = prev_sum = 0.0
    raw_model_sum = raw_prev_sum = 0.0
    raw_count = 0
    count = 0
    for video_index, dis in enumerate(test_videos):
        if len(dis) <= c:
            continue
        v_model = v_prev = 0.0
        v_count = 0
        name = ""
        for i in range(len(dis) - c):
            actual = dis[i + c]
            last = dis[i + c - 1]
            pred = predict_next(model, dis[i : i + c])
            m = mse(pred, actual)
            p = mse(last, actual)
            v_model += m
            v_prev += p
            v_count += 1
            model_sum += m
            prev_sum += p
            if isinstance(actual, DynamicImage) and isinstance(last, DynamicImage):
                raw_model_sum += _raw_pair(pred, actual)
                raw_prev_sum += float(((last.values - actual.values) ** 2).mean())
                raw_count += 1
                name = actual.source[0]
        count += v_count
        key = name or f"video{video_index}"
        report.per_video[key] = (v_model / v_count, v_prev / v_count, v_count)
    if count == 0:
        raise ValueError("no test video is long enough for context plus one target")
    report.model_mse = model_sum / count
    report.prev_mse = prev_sum / count
    if raw_count:
        report.model_mse_raw = raw_model_sum / raw_count
        report.prev_mse_raw = raw_prev_sum / raw_count
    report.position_count = count
    return report


def _rollout_positions(dis, c, horizon):
    for i in range(len(dis) - c):
        max_k = min(horizon, len(dis) - 1 - (i + c - 1))
        if max_k >= 1:
            yield i, max_k


def horizon_accuracy(model, classifier_model, test_videos, horizon=5):
    """Fraction of correct next-action labels per rollout depth.

    For each context position, the model rolls ``horizon`` images forward;
    the recognizer labels the k-th rollout image and the truth is the
    next-action label of the k-th future window.  The denominator at each
    k counts the (position, k) pairs that actually fit in the video.
    """
    c = model.cfg.context_length
    hits = {k: 0 for k in range(1, horizon + 1)}
    counts = {k: 0 for k in range(1, horizon + 1)}
    for dis in test_videos:
        for i, max_k in _rollout_positions(dis, c, horizon):
            rollout = predict_rollout(model, dis[i : i + c], horizon=max_k)
            for k in range(1, max_k + 1):
                truth = dis[i + c - 1 + k].next_label
                if truth is None:
                    raise ValueError("test images lack next-action labels")
                predicted, _ = classify(classifier_model, rollout[k - 1])
                hits[k] += int(predicted == truth)
                counts[k] += 1
    accuracy = {k: hits[k] / counts[k] for k in counts if counts[k] > 0}
    return accuracy, {k: n for k, n in counts.items() if n > 0}


def rollout_mse_by_horizon(model, test_videos, horizon=5):
    """Mean squared forecast error at each rollout depth k."""
    c = model.cfg.context_length
    sums = {k: 0.0 for k in range(1, horizon + 1)}
    counts = {k: 0 for k in range(1, horizon + 1)}
    for dis in test_videos:
        for i, max_k in _rollout_positions(dis, c, horizon):
            rollout = predict_rollout(model, dis[i : i + c], horizon=max_k)
            for k in range(1, max_k + 1):
                sums[k] += mse(rollout[k - 1], dis[i + c - 1 + k])
                counts[k] += 1
    return {k: sums[k] / counts[k] for k in counts if counts[k] > 0}


def predicted_label_timeline(model, classifier_model, dis, total_frames):
    """Per-frame next-action predictions from a causal scan of the video.

    After each window whose context is complete, the forecast image is
    classified and that label holds from the window's end frame until the
    next prediction point.  Frames before the first prediction stay None.
    """
    c = model.cfg.context_length
    labels = [None] * total_frames
    points = []
    for i in range(c - 1, len(dis)):
        _, start, window = dis[i].source
        at_frame = min(start + window, total_frames)
        pred = predict_next(model, dis[i - c + 1 : i + 1])
        cid, _ = classify(classifier_model, pred)
        points.append((at_frame, cid))
    for j, (at_frame, cid) in enumerate(points):
        until = points[j + 1][0] if j + 1 < len(points) else total_frames
        for f in range(at_frame, until):
            labels[f] = cid
    return labels


def avg_of_td(predicted_labels, timeline):
    """Mean temporal distance per class: how many frames before each action
    start the prediction already said that class, counting only the run
    that stays correct all the way to the start; no run means distance 0.
    """
    per_class_sums = {}
    per_class_counts = {}
    n = len(predicted_labels)
    for cid, start in timeline.action_starts():
        t_star = start
        f = start - 1
        while f >= 0 and f < n and predicted_labels[f] == cid:
            t_star = f
            f -= 1
        td = start - t_star
        per_class_sums[cid] = per_class_sums.get(cid, 0) + td
        per_class_counts[cid] = per_class_counts.get(cid, 0) + 1
    means = {c: per_class_sums[c] / per_class_counts[c] for c in per_class_sums}
    return means, per_class_counts


# ---------------------------------------------------------------------------
# report files


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report, path):
    """Stable-ordered CSV: metric,name,value,count — identical bytes for
    identical reports."""
    rows = [("positions", "", str(report.position_count), str(report.position_count))]
    for attr in ("model_mse", "prev_mse", "model_mse_raw", "prev_mse_raw"):
        value = getattr(report, attr)
        if value is not None:
            rows.append((attr, "", _fmt(value), str(report.position_count)))
    rows.append(
        (
            "classifier",
            "",
            "present" if report.classifier_present else "absent",
            "",
        )
    )
    for k in sorted(report.accuracy_by_horizon):
        rows.append(
            (
                "accuracy",
                f"k={k}",
                _fmt(report.accuracy_by_horizon[k]),
                str(report.horizon_counts.get(k, "")),
            )
        )
    for k in sorted(report.rollout_mse_by_horizon):
        rows.append(
            (
                "rollout_mse",
                f"k={k}",
                _fmt(report.rollout_mse_by_horizon[k]),
                str(report.horizon_counts.get(k, "")),
            )
        )
    for cid in sorted(report.avg_of_td_per_class):
        rows.append(
            (
                "avg_of_td",
                str(cid),
                _fmt(report.avg_of_td_per_class[cid]),
                str(report.td_counts.get(cid, "")),
            )
        )
    for name in sorted(report.per_video):
        v_model, v_prev, v_count = report.per_video[name]
        rows.append(("video_model_mse", name, _fmt(v_model), str(v_count)))
        rows.append(("video_prev_mse", name, _fmt(v_prev), str(v_count)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "name", "value", "count"])
        writer.writerows(rows)


def read_report(path):
    """Rows back as a {(metric, name): value} map, floats parsed exactly."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["metric", "name", "value", "count"]:
            raise ValueError(f"unexpected report header {header}")
        for metric, name, value, _count in reader:
            try:
                out[(metric, name)] = float(value)
            except ValueError:
                out[(metric, name)] = value
    return out


def write_horizon_csv(accuracy_by_horizon, path):
    """Two-column horizon,accuracy file for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["horizon", "accuracy"])
        for k in sorted(accuracy_by_horizon):
            writer.writerow([k, repr(accuracy_by_horizon[k])])
