"""Command-line pipeline: gen -> di -> train -> finetune -> train-classifier
-> eval, with file handoffs between stages.

Every stage resolves one flat configuration (file, then --set overrides,
then --seed), writes it next to its artifacts, and derives all randomness
from the single seed, so re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .classifier import (
    load_classifier,
    next_action_labels,
    save_classifier,
    train_classifier,
)
from .config import ConfigError, load_config
from .evaluation import (
    avg_of_td,
    evaluate_prediction,
    horizon_accuracy,
    predicted_label_timeline,
    rollout_mse_by_horizon,
    write_horizon_csv,
    write_report,
)
from .labels import END, GAP, LabelTimeline
from .numerics import read_ditf, write_ditf
from .prednet import (
    TrainHistory,
    finetune_rollout,
    init_model,
    load_checkpoint,
    predict_next,
    save_checkpoint,
    train,
)
from .rank_pooling import DynamicImage, di_sequence
from .video_io import (
    ACTION_NAMES,
    gen_synthetic,
    load_frames,
    random_script,
    save_frames,
    write_pnm,
)

SPLITS = ("train", "val", "test")


class StageError(RuntimeError):
    """A pipeline stage cannot run (missing inputs, occupied outputs)."""


def _write_resolved_config(cfg, out_dir, stage):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"resolved_{stage}.cfg")
    with open(path, "w") as fh:
        fh.write(cfg.dump())
    return path


# ---------------------------------------------------------------------------
# gen


def cmd_gen(cfg, out_dir, force=False):
    data_dir = os.path.join(out_dir, "data")
    if os.path.isdir(data_dir) and os.listdir(data_dir) and not force:
        raise StageError(f"{data_dir} exists and is not empty (use --force)")
    counts = {
        "train": cfg["data.train_videos"],
        "val": cfg["data.val_videos"],
        "test": cfg["data.test_videos"],
    }
    if sum(counts.values()) == 0 or min(counts.values()) < 0:
        raise StageError("no videos requested")
    _write_resolved_config(cfg, out_dir, "gen")
    for split_index, split in enumerate(SPLITS):
        for v in range(counts[split]):
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg["seed"], 53, split_index, v))
            )
            script = random_script(
                rng,
                cfg["data.height"],
                cfg["data.width"],
                actions=cfg["data.actions_per_video"],
                min_duration=cfg["data.min_duration"],
                max_duration=cfg["data.max_duration"],
                min_gap=cfg["data.min_gap"],
                max_gap=cfg["data.max_gap"],
                speed=cfg["data.speed"],
                shape_size=cfg["data.shape_size"],
                grow_rate=cfg["data.grow_rate"],
                order=cfg["data.order"],
            )
            video = gen_synthetic(script, cfg["data.height"], cfg["data.width"])
            video.fps = cfg["data.fps"]
            vdir = os.path.join(data_dir, split, f"video_{v:03d}")
            os.makedirs(vdir, exist_ok=True)
            save_frames(video, vdir)
            video.timeline().save_csv(os.path.join(vdir, "timeline.csv"))
            with open(os.path.join(vdir, "script.cfg"), "w") as fh:
                fh.write("\n".join(script.to_lines()) + "\n")
    print(f"gen: wrote {sum(counts.values())} videos under {data_dir}")
    return 0


# ---------------------------------------------------------------------------
# di


def _video_dirs(data_dir, split):
    split_dir = os.path.join(data_dir, split)
    if not os.path.isdir(split_dir):
        return []
    return sorted(
        os.path.join(split_dir, d)
        for d in os.listdir(split_dir)
        if os.path.isdir(os.path.join(split_dir, d))
    )


def cmd_di(cfg, out_dir):
    data_dir = os.path.join(out_dir, "data")
    if not os.path.isdir(data_dir):
        raise StageError(f"no input frames under {data_dir}; run gen first")
    _write_resolved_config(cfg, out_dir, "di")
    spec = cfg.window_spec()
    rp_cfg = cfg.rankpool_config()
    total = 0
    for split in SPLITS:
        rows = []
        for vdir in _video_dirs(data_dir, split):
            vname = os.path.basename(vdir)
            video = load_frames(vdir, fps=cfg["data.fps"], name=vname)
            timeline_path = os.path.join(vdir, "timeline.csv")
            timeline = (
                LabelTimeline.load_csv(timeline_path, ACTION_NAMES)
                if os.path.exists(timeline_path)
                else None
            )
            if timeline is not None:
                video.labels = timeline.frames
            if len(video) < spec.window:
                print(
                    f"di: skipping {split}/{vname}: {len(video)} frames < "
                    f"window {spec.window}"
                )
                continue
            dis = di_sequence(video, spec, rp_cfg)
            if timeline is not None:
                next_action_labels(dis, timeline)
            di_dir = os.path.join(out_dir, "di", split, vname)
            os.makedirs(di_dir, exist_ok=True)
            for di in dis:
                stem = f"di_{di.source[1]:05d}"
                path = os.path.join(di_dir, stem + ".ditf")
                write_ditf(path, di.values)
                write_pnm(os.path.join(di_dir, stem + ".ppm"), di.normalized())
                rows.append(
                    {
                        "video": vname,
                        "start_frame": di.source[1],
                        "window": di.source[2],
                        "di_path": os.path.relpath(path, out_dir),
                        "label": "" if di.label is None else di.label,
                        "next_label": "" if di.next_label is None else di.next_label,
                        "norm_min": repr(float(di.norm_bounds[0])),
                        "norm_max": repr(float(di.norm_bounds[1])),
                    }
                )
            total += len(dis)
        manifest = os.path.join(out_dir, "di", f"{split}_manifest.csv")
        os.makedirs(os.path.dirname(manifest), exist_ok=True)
        with open(manifest, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=[
                    "video",
                    "start_frame",
                    "window",
                    "di_path",
                    "label",
                    "next_label",
                    "norm_min",
                    "norm_max",
                ],
            )
            writer.writeheader()
            writer.writerows(rows)
    print(f"di: wrote {total} dynamic images under {os.path.join(out_dir, 'di')}")
    return 0


def load_manifest(out_dir, split):
    """Dynamic images grouped per video, in window order."""
    manifest = os.path.join(out_dir, "di", f"{split}_manifest.csv")
    if not os.path.exists(manifest):
        raise StageError(f"missing manifest {manifest}; run di first")
    videos = {}
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            values = read_ditf(os.path.join(out_dir, row["di_path"]))
            di = DynamicImage(
                values=values,
                source=(row["video"], int(row["start_frame"]), int(row["window"])),
                norm_bounds=(float(row["norm_min"]), float(row["norm_max"])),
                label=int(row["label"]) if row["label"] != "" else None,
            )
            di.next_label = (
                int(row["next_label"]) if row["next_label"] != "" else None
            )
            videos.setdefault(row["video"], []).append(di)
    for dis in videos.values():
        dis.sort(key=lambda d: d.source[1])
    return [videos[name] for name in sorted(videos)]


# ---------------------------------------------------------------------------
# train / finetune


def _subsequences(videos, length, stride):
    out = []
    for dis in videos:
        arrays = [di.normalized() for di in dis]
        for start in range(0, len(arrays) - length + 1, stride):
            out.append(arrays[start : start + length])
    return out


def _write_loss_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr"])
        for epoch, loss, lr in history.epochs:
            writer.writerow([epoch, repr(loss), repr(lr)])


def cmd_train(cfg, out_dir):
    videos = load_manifest(out_dir, "train")
    net_cfg = cfg.prednet_config()
    sequences = _subsequences(
        videos, net_cfg.sequence_length, cfg["prednet.subseq_stride"]
    )
    if not sequences:
        raise StageError("no training subsequences; videos too short?")
    _write_resolved_config(cfg, out_dir, "train")
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    ckpt = os.path.join(models_dir, "prednet.ckpt")

    resume = cfg["prednet.resume"]
    if resume:
        model, adam_state, start_epoch = load_checkpoint(resume)
        if start_epoch is None:
            start_epoch = 0
        net_cfg = replace(
            model.cfg, epochs=net_cfg.epochs, lr=net_cfg.lr, lr_final=net_cfg.lr_final
        )
    else:
        model, adam_state, start_epoch = init_model(net_cfg), None, 0

    stop_epoch = cfg["prednet.stop_epoch"]
    if stop_epoch < 0 or stop_epoch > net_cfg.epochs:
        stop_epoch = net_cfg.epochs
    records = []
    for epoch in range(start_epoch, stop_epoch):
        h, adam_state = train(
            model,
            sequences,
            net_cfg,
            start_epoch=epoch,
            stop_epoch=epoch + 1,
            adam_state=adam_state,
        )
        records.extend(h.epochs)
        save_checkpoint(ckpt, model, adam_state=adam_state, next_epoch=epoch + 1)
        e, loss, lr = h.epochs[-1]
        print(f"train: epoch {e} loss {loss:.6f} lr {lr}")
    if not records:
        raise StageError(
            f"nothing to train: resume checkpoint already at epoch {start_epoch}"
        )
    _write_loss_csv(os.path.join(models_dir, "prednet_loss.csv"), TrainHistory(records))
    print(f"train: checkpoint at {ckpt}")
    return 0


def cmd_finetune(cfg, out_dir):
    videos = load_manifest(out_dir, "train")
    base_ckpt = cfg["prednet.resume"] or os.path.join(
        out_dir, "models", "prednet.ckpt"
    )
    if not os.path.exists(base_ckpt):
        raise StageError(f"missing checkpoint {base_ckpt}; run train first")
    _write_resolved_config(cfg, out_dir, "finetune")
    model, _, _ = load_checkpoint(base_ckpt)
    net_cfg = replace(
        model.cfg,
        epochs=cfg["prednet.finetune_epochs"],
        lr=cfg["prednet.finetune_lr"],
        lr_final=cfg["prednet.finetune_lr"],
        rollout_target=cfg["prednet.rollout_target"],
        seed=cfg["seed"] + 1,
    )
    sequences = _subsequences(
        videos, net_cfg.rollout_length, cfg["prednet.subseq_stride"]
    )
    if not sequences:
        raise StageError("no rollout-length subsequences; videos too short?")
    history, _ = finetune_rollout(model, sequences, net_cfg)
    models_dir = os.path.join(out_dir, "models")
    ckpt = os.path.join(models_dir, "prednet_finetuned.ckpt")
    save_checkpoint(ckpt, model)
    _write_loss_csv(os.path.join(models_dir, "prednet_finetune_loss.csv"), history)
    for e, loss, lr in history.epochs:
        print(f"finetune: epoch {e} loss {loss:.6f} lr {lr}")
    print(f"finetune: checkpoint at {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# train-classifier


def _classifier_examples(cfg, out_dir, videos):
    mode = cfg["classifier.inputs"]
    label_mode = cfg["classifier.label_mode"]
    examples, labels = [], []
    if mode == "original":
        for dis in videos:
            for di in dis:
                label = di.label if label_mode == "window" else di.next_label
                if label is None or (label_mode == "window" and label < 0):
                    continue
                examples.append(di.normalized())
                labels.append(label)
    elif mode == "predicted":
        ckpt = os.path.join(out_dir, "models", "prednet.ckpt")
        if not os.path.exists(ckpt):
            raise StageError(f"missing checkpoint {ckpt}; run train first")
        model, _, _ = load_checkpoint(ckpt)
        c = model.cfg.context_length
        for dis in videos:
            for i in range(len(dis) - c):
                target = dis[i + c]
                label = target.label if label_mode == "window" else target.next_label
                if label is None or (label_mode == "window" and label < 0):
                    continue
                pred = predict_next(model, dis[i : i + c])
                examples.append(pred.values)
                labels.append(label)
    else:
        raise StageError(f"unknown classifier.inputs {mode!r}")
    return examples, labels


def cmd_train_classifier(cfg, out_dir):
    videos = load_manifest(out_dir, "train")
    _write_resolved_config(cfg, out_dir, "train_classifier")
    examples, labels = _classifier_examples(cfg, out_dir, videos)
    if not examples:
        raise StageError("no labeled examples for the classifier")
    clf_cfg = cfg.classifier_config()
    names = dict(ACTION_NAMES)
    names[GAP] = "gap"
    names[END] = "end"
    model, losses = train_classifier(examples, labels, clf_cfg, class_names=names)
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    ckpt = os.path.join(models_dir, "classifier.ckpt")
    save_classifier(ckpt, model)
    loss_csv = os.path.join(models_dir, "classifier_loss.csv")
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(loss)])
    print(
        f"train-classifier: {len(examples)} examples, classes "
        f"{model.classes}, final loss {losses[-1]:.4f}"
    )
    print(f"train-classifier: checkpoint at {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _eval_checkpoint(cfg, out_dir):
    if cfg["eval.checkpoint"]:
        return cfg["eval.checkpoint"]
    finetuned = os.path.join(out_dir, "models", "prednet_finetuned.ckpt")
    if os.path.exists(finetuned):
        return finetuned
    return os.path.join(out_dir, "models", "prednet.ckpt")


def cmd_eval(cfg, out_dir):
    videos = load_manifest(out_dir, "test")
    ckpt = _eval_checkpoint(cfg, out_dir)
    if not os.path.exists(ckpt):
        raise StageError(f"missing checkpoint {ckpt}; run train first")
    _write_resolved_config(cfg, out_dir, "eval")
    model, _, _ = load_checkpoint(ckpt)
    report = evaluate_prediction(model, videos)

    clf_path = os.path.join(out_dir, "models", "classifier.ckpt")
    reports_dir = os.path.join(out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    horizon = cfg["eval.horizon"]
    if os.path.exists(clf_path):
        clf = load_classifier(clf_path)
        report.classifier_present = True
        acc, counts = horizon_accuracy(model, clf, videos, horizon=horizon)
        report.accuracy_by_horizon = acc
        report.horizon_counts = counts
        report.rollout_mse_by_horizon = rollout_mse_by_horizon(
            model, videos, horizon=horizon
        )
        td_sums, td_counts = {}, {}
        data_dir = os.path.join(out_dir, "data")
        for dis in videos:
            vname = dis[0].source[0]
            timeline_path = os.path.join(data_dir, "test", vname, "timeline.csv")
            if not os.path.exists(timeline_path):
                continue
            timeline = LabelTimeline.load_csv(timeline_path, ACTION_NAMES)
            predicted = predicted_label_timeline(model, clf, dis, len(timeline))
            means, counts_v = avg_of_td(predicted, timeline)
            for cid, mean_td in means.items():
                td_sums[cid] = td_sums.get(cid, 0.0) + mean_td * counts_v[cid]
                td_counts[cid] = td_counts.get(cid, 0) + counts_v[cid]
        report.avg_of_td_per_class = {
            cid: td_sums[cid] / td_counts[cid] for cid in sorted(td_sums)
        }
        report.td_counts = td_counts
        write_horizon_csv(acc, os.path.join(reports_dir, "horizon_accuracy.csv"))
    else:
        report.classifier_present = False
        print("eval: classifier checkpoint absent, reporting MSE only")

    metrics_path = os.path.join(reports_dir, "metrics.csv")
    write_report(report, metrics_path)
    print(
        f"eval: model_mse {report.model_mse:.6f} prev_mse {report.prev_mse:.6f} "
        f"({report.position_count} positions)"
    )
    if report.accuracy_by_horizon:
        pretty = ", ".join(
            f"k={k}: {v:.3f}" for k, v in sorted(report.accuracy_by_horizon.items())
        )
        print(f"eval: horizon accuracy {pretty}")
    print(f"eval: report at {metrics_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--out", default="runs", help="artifact directory")
    parser.add_argument(
        "--force", action="store_true", help="overwrite non-empty outputs"
    )


COMMANDS = {
    "gen": cmd_gen,
    "di": cmd_di,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "train-classifier": cmd_train_classifier,
    "eval": cmd_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dipred",
        description="dynamic-image forecasting pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        if args.command == "gen":
            return cmd_gen(cfg, args.out, force=args.force)
        return COMMANDS[args.command](cfg, args.out)
    except (ConfigError, StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
