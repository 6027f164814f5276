"""Command-line entry point wiring the pipeline end to end.

Subcommands: ``slic`` (superpixel inspection), ``loss-eval`` (loss
breakdown for a prediction), ``synth`` (two-modality dataset generation),
``train``, ``eval``, and ``gridsearch``. Every command resolves its full
configuration (defaults, then ``--config`` file, then flag overrides),
echoes it to ``<out>/config.json`` before doing any work, and derives all
randomness from the single ``--seed`` value.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from slicseg import gridsearch, imgcore, metrics
from slicseg.config import (
    ConfigError,
    build_model_config,
    build_loss_config,
    build_slic_params,
    build_synth_config,
    build_train_config,
    load_config_file,
    resolve_config,
)
from slicseg.data import load_dataset, split, synth_generate, synth_manifest, write_dataset
from slicseg.loss import hard_consistency, hard_slic_loss, slic_loss
from slicseg.net import load_weights, save_weights
from slicseg.slic import boundary_overlay, grid_spacing, save_label_map, segment
from slicseg.train import TrainingDiverged, train


class UsageError(Exception):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(args, cfg: dict) -> str:
    """Create the output directory and echo the effective config into it."""
    out = os.fspath(args.out)
    os.makedirs(out, exist_ok=True)
    _write_json(cfg, os.path.join(out, "config.json"))
    return out


def _resolve(args) -> dict:
    overrides = load_config_file(args.config) if args.config else {}
    return resolve_config(overrides, seed=args.seed)


def _dataset_from_root(root: str, modality: str):
    return load_dataset(os.path.join(root, "images"), os.path.join(root, "masks"), modality)


def cmd_slic(args) -> int:
    cfg = _resolve(args)
    if args.k is not None:
        cfg["slic"]["k"] = args.k
    if args.m is not None:
        cfg["slic"]["m"] = args.m
    params = build_slic_params(cfg)
    out = _prepare_out(args, cfg)

    image = imgcore.load_png(args.image)
    label_map = segment(imgcore.rgb_to_lab(image), params)
    imgcore.save_png(boundary_overlay(label_map, image), os.path.join(out, "overlay.png"))
    save_label_map(label_map, os.path.join(out, "labels.splm"))
    h, w = label_map.labels.shape
    summary = {
        "num_segments": label_map.num_segments,
        "S": grid_spacing(h, w, params.k),
        "mean_segment_area": h * w / label_map.num_segments,
    }
    _write_json(summary, os.path.join(out, "summary.json"))
    print(
        f"{args.image}: {label_map.num_segments} segments "
        f"(k={params.k}, m={params.m}, S={summary['S']:.2f}) -> {out}"
    )
    return 0


def cmd_loss_eval(args) -> int:
    cfg = _resolve(args)
    slic_params = build_slic_params(cfg)
    loss_cfg = build_loss_config(cfg)
    out = _prepare_out(args, cfg)

    image = imgcore.load_png(args.image)
    gt = imgcore.load_mask_png(args.gt_mask)
    probs = imgcore.load_prob_png(args.pred)
    imgcore.ensure_same_shape(image, gt)
    imgcore.ensure_same_shape(image, probs)

    label_map = segment(imgcore.rgb_to_lab(image), slic_params)
    soft, _ = slic_loss(probs, gt, label_map, loss_cfg)
    hard = hard_slic_loss(probs, gt, label_map, loss_cfg, t=0.5)
    pred_mask = imgcore.threshold(probs, 0.5)
    consistency = hard_consistency(label_map, pred_mask, loss_cfg.tau)
    counts, edges = np.histogram(
        consistency.per_segment_occupancy, bins=10, range=(0.5, 1.0)
    )
    report = {
        "num_segments": label_map.num_segments,
        "soft": soft.as_dict(),
        "hard": hard.as_dict(),
        "hard_consistency": {
            "consistent_fraction": consistency.consistent_fraction,
            "penalty": consistency.penalty,
        },
        "occupancy_histogram": {
            "bin_edges": [float(e) for e in edges],
            "counts": [int(c) for c in counts],
        },
    }
    _write_json(report, os.path.join(out, "loss_report.json"))
    print(
        f"soft total={soft.total:.6f} (bce={soft.bce:.6f}, consistency={soft.consistency:.6f}, "
        f"lambda={soft.lambda_}) -> {out}/loss_report.json"
    )
    return 0


def cmd_synth(args) -> int:
    cfg = _resolve(args)
    if args.count is not None:
        cfg["synth"]["count"] = args.count
    synth_cfg = build_synth_config(cfg)
    out = _prepare_out(args, cfg)

    source, target = synth_generate(synth_cfg)
    write_dataset(source, os.path.join(out, "source"), manifest=synth_manifest(synth_cfg, source))
    write_dataset(target, os.path.join(out, "target"), manifest=synth_manifest(synth_cfg, target))
    print(f"wrote {len(source)} source and {len(target)} target pairs -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args)
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.loss is not None:
        cfg["train"]["loss"] = args.loss
    if args.data is not None:
        cfg["data"]["train_root"] = os.fspath(args.data)
    if not cfg["data"]["train_root"]:
        raise ConfigError("training requires data.train_root (or the --data flag)")
    train_cfg = build_train_config(cfg)
    model_cfg = build_model_config(cfg)
    out = _prepare_out(args, cfg)

    dataset = _dataset_from_root(cfg["data"]["train_root"], "source")
    train_ds, val_ds = split(dataset, cfg["data"]["train_frac"], cfg["seed"])
    try:
        params, report = train(train_ds, val_ds, model_cfg, train_cfg)
    except TrainingDiverged as exc:
        _write_json(exc.report.as_dict(), os.path.join(out, "report.partial.json"))
        raise
    save_weights(params, model_cfg, os.path.join(out, "weights.json"), cfg["seed"])
    _write_json(report.as_dict(), os.path.join(out, "report.json"))
    print(
        f"trained {train_cfg.epochs} epochs on {len(train_ds)} images "
        f"(loss={train_cfg.loss}); best epoch {report.best_epoch} "
        f"val dice {report.val_dice[report.best_epoch - 1]:.4f} -> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    out = _prepare_out(args, cfg)

    params, model_cfg, _ = load_weights(args.weights)
    dataset = _dataset_from_root(os.fspath(args.data), "eval")
    result = metrics.evaluate(params, model_cfg, dataset, threshold=args.threshold)
    _write_json(result.as_dict(), os.path.join(out, "eval.json"))
    if args.save_predictions:
        pred_dir = os.path.join(out, "predictions")
        os.makedirs(pred_dir, exist_ok=True)
        from slicseg.net import predict

        for item in dataset:
            probs = predict(params, model_cfg, item.image)
            imgcore.save_png(probs, os.path.join(pred_dir, item.id + ".png"))
    print(
        f"evaluated {result.n} images at threshold {args.threshold}: "
        f"mean IoU {result.mean_iou:.4f}, mean Dice {result.mean_dice:.4f} -> {out}/eval.json"
    )
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _resolve(args)
    if args.train_data is not None:
        cfg["data"]["train_root"] = os.fspath(args.train_data)
    if args.target_data is not None:
        cfg["data"]["target_root"] = os.fspath(args.target_data)
    out = _prepare_out(args, cfg)

    report = gridsearch.run_grid(cfg, threads=args.threads)
    _write_json(report, os.path.join(out, "grid.json"))
    with open(os.path.join(out, "grid.md"), "w", encoding="utf-8") as fh:
        fh.write(gridsearch.render_markdown(report))
    ok = sum(1 for row in report["cells"] if row["status"] == "ok")
    print(
        f"{len(report['cells'])} cells ({ok} ok), best per axis: "
        f"{json.dumps(report['best'], sort_keys=True)} -> {out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="JSON", help="configuration file (JSON)")
    common.add_argument("--seed", type=int, metavar="N", help="master random seed (default from config: 0)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes for gridsearch cells (default: 1)")

    parser = _Parser(prog="slicseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("slic", parents=[common], help="superpixel an image; write label map, overlay, summary")
    p.add_argument("image", help="input RGB PNG")
    p.add_argument("--k", type=int, help="target superpixel count (default from config)")
    p.add_argument("--m", type=float, help="compactness weight (default from config)")
    p.set_defaults(func=cmd_slic)

    p = sub.add_parser("loss-eval", parents=[common], help="loss breakdown for a prediction against ground truth")
    p.add_argument("image", help="input RGB PNG (superpixels are computed from it)")
    p.add_argument("gt_mask", help="ground-truth mask PNG")
    p.add_argument("pred", help="predicted mask or probability-map PNG")
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("synth", parents=[common], help="generate the paired two-modality synthetic dataset")
    p.add_argument("--count", type=int, help="images per modality (default from config)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a segmentation model")
    p.add_argument("--data", metavar="DIR", help="dataset root with images/ and masks/ (overrides data.train_root)")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--loss", choices=("bce", "slicloss"), help="override train.loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate saved weights on a dataset")
    p.add_argument("weights", help="weights manifest JSON")
    p.add_argument("data", help="dataset root with images/ and masks/")
    p.add_argument("--threshold", type=float, default=0.5, help="foreground threshold (default 0.5)")
    p.add_argument("--save-predictions", action="store_true", help="also write per-image probability PNGs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", parents=[common], help="hyperparameter sweep with per-axis best marking")
    p.add_argument("--train-data", metavar="DIR", help="source-domain dataset root (overrides data.train_root)")
    p.add_argument("--target-data", metavar="DIR", help="target-domain dataset root (overrides data.target_root)")
    p.set_defaults(func=cmd_gridsearch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help prints and exits 0
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 — CLI boundary maps errors to exit codes
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
