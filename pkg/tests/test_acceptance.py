"""End-to-end acceptance gate: one test per shipped guarantee.

Each test pins a headline contract of the package — loss algebra,
superpixel geometry, gradient correctness, metric identities, the
domain-shift comparison, and bitwise reproducibility — at explicit
tolerances and runtime budgets. `pytest -v tests/test_acceptance.py`
prints one pass/fail line per guarantee.
"""

import json
import math
import os
import subprocess
import sys
import time
import warnings
from fractions import Fraction

import numpy as np
import skimage.measure

from fd import central_diff, relative_error
from slicseg import cli, imgcore, net
from slicseg.config import resolve_config
from slicseg.data import Dataset, SynthConfig, split, synth_generate, write_dataset
from slicseg.gridsearch import render_markdown, run_grid
from slicseg.loss import (
    LossConfig,
    SuperpixelLabelMap,
    bce,
    hard_consistency,
    slic_loss,
    soft_consistency,
)
from slicseg.metrics import dice, evaluate, iou
from slicseg.net import ModelConfig
from slicseg.slic import SlicParams, grid_spacing, segment, segment_report, slic_distance
from slicseg.train import TrainConfig, train


NO_AUG_SECTION = {
    "hflip": False,
    "rotation_frac": 0.0,
    "shift_frac": 0.0,
    "shear_frac": 0.0,
    "zoom_frac": 0.0,
}


def _voronoi_label_map(rng, h, w, n_segments):
    sites = rng.uniform(0, [h, w], size=(n_segments, 2))
    ys, xs = np.mgrid[0:h, 0:w]
    d = (ys[:, :, None] - sites[:, 0]) ** 2 + (xs[:, :, None] - sites[:, 1]) ** 2
    labels = np.argmin(d, axis=2)
    uniq, inverse = np.unique(labels, return_inverse=True)
    return SuperpixelLabelMap(inverse.reshape(h, w).astype(np.int32), len(uniq))


def test_01_compound_loss_identity():
    """total == (bce + lambda*consistency)/(1 + lambda), and lambda=0 is BCE."""
    rng = np.random.default_rng(20)
    start = time.perf_counter()
    for trial in range(1000):
        lm = _voronoi_label_map(rng, 6, 6, int(rng.integers(1, 5)))
        probs = rng.uniform(0.02, 0.98, size=(6, 6))
        target = (rng.random((6, 6)) < rng.random()).astype(np.uint8)
        lam = 0.0 if trial % 4 == 0 else float(rng.uniform(0.0, 4.0))
        cfg = LossConfig(lambda_=lam)

        breakdown, grad = slic_loss(probs, target, lm, cfg)
        b_val, b_grad = bce(probs, target)
        c_val, _ = soft_consistency(lm, probs, cfg)
        expected = (b_val + lam * c_val) / (1.0 + lam)
        assert abs(breakdown.total - expected) <= 1e-12 * max(1.0, abs(expected))
        assert abs(breakdown.bce - b_val) <= 1e-12 * max(1.0, abs(b_val))
        assert abs(breakdown.consistency - c_val) <= 1e-12

        if lam == 0.0:
            assert abs(breakdown.total - b_val) <= 1e-12 * max(1.0, abs(b_val))
            assert np.max(np.abs(grad - b_grad)) <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"identity sweep took {elapsed:.2f}s"


def test_02_superpixel_property_suite():
    """Label-map invariants, boundary adherence, objective descent, compactness."""
    start = time.perf_counter()
    rng = np.random.default_rng(21)

    def constant(h, w, color):
        lab = np.zeros((h, w, 3))
        lab[:] = color
        return lab

    def two_tone(h, w, c1, c2):
        img = np.zeros((h, w, 3), dtype=np.uint8)
        img[:, : w // 2] = c1
        img[:, w // 2 :] = c2
        return imgcore.rgb_to_lab(img)

    def noisy(h, w, seed):
        local = np.random.default_rng(seed)
        return imgcore.rgb_to_lab(local.integers(0, 256, size=(h, w, 3), dtype=np.uint8))

    def blob_noise(h, w, seed):
        from scipy.ndimage import gaussian_filter

        local = np.random.default_rng(seed)
        img = np.stack(
            [gaussian_filter(local.normal(size=(h, w)), 3.0) for _ in range(3)], axis=2
        )
        img = (img - img.min()) / (img.max() - img.min() + 1e-12)
        return imgcore.rgb_to_lab((img * 255).astype(np.uint8))

    images = [
        constant(48, 48, (50.0, 0.0, 0.0)),
        constant(64, 48, (20.0, 30.0, -20.0)),
        constant(48, 64, (80.0, -10.0, 10.0)),
        constant(56, 56, (0.0, 0.0, 0.0)),
    ]
    two_tones = []
    while len(two_tones) < 8:
        c1 = rng.integers(0, 256, 3, dtype=np.uint8)
        c2 = rng.integers(0, 256, 3, dtype=np.uint8)
        lab = two_tone(48, 48, c1, c2)
        gap = float(np.linalg.norm(lab[0, 0] - lab[0, -1]))
        if gap > 40:
            two_tones.append(lab)
    images += two_tones
    images += [noisy(48, 48, s) for s in range(4)]
    images += [blob_noise(64, 64, s) for s in range(100, 104)]
    assert len(images) == 20

    for lab in images:
        out = segment(lab, SlicParams(k=9, m=20.0))
        labels = out.labels
        assert labels.shape == lab.shape[:2]
        assert labels.min() >= 0 and labels.max() < out.num_segments
        assert len(np.unique(labels)) == out.num_segments
        components = skimage.measure.label(labels, connectivity=1, background=-1).max()
        assert components == out.num_segments

    for lab in two_tones:
        for m in (5.0, 12.0, 20.0):
            out = segment(lab, SlicParams(k=9, m=m))
            left = set(np.unique(out.labels[:, :24]))
            right = set(np.unique(out.labels[:, 24:]))
            assert not left & right, f"straddling segments at m={m}"

    for lab in (images[0], two_tones[0], images[12]):
        _, objectives = segment_report(lab, SlicParams(k=9, m=20.0))
        for earlier, later in zip(objectives, objectives[1:]):
            assert later <= earlier * (1 + 1e-6)

    def mean_isoperimetric(label_map):
        labels = label_map.labels
        padded = np.pad(labels, 1, constant_values=-1)
        exposed = np.zeros(labels.shape, dtype=np.int64)
        for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            neighbor = padded[1 + dy : 1 + dy + labels.shape[0], 1 + dx : 1 + dx + labels.shape[1]]
            exposed += neighbor != labels
        areas = np.bincount(labels.ravel(), minlength=label_map.num_segments)
        perims = np.bincount(labels.ravel(), weights=exposed.ravel(), minlength=label_map.num_segments)
        return float(np.mean(4 * np.pi * areas / np.maximum(perims, 1) ** 2))

    blob = images[-1]
    q5 = mean_isoperimetric(segment(blob, SlicParams(k=16, m=5.0)))
    q50 = mean_isoperimetric(segment(blob, SlicParams(k=16, m=50.0)))
    assert q50 > q5, f"compactness not monotone in m: {q50:.4f} <= {q5:.4f}"

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"superpixel suite took {elapsed:.1f}s"


def test_03_distance_and_spacing_values():
    """Hand-checked joint-distance and seed-spacing values."""
    d = slic_distance((0.0, 0.0, 0.0, 0.0, 0.0), (10.0, 0.0, 0.0, 3.0, 4.0), S=20.0, m=40.0)
    assert abs(d - math.sqrt(200.0)) <= 1e-9

    s = grid_spacing(512, 512, 500)
    assert abs(s - math.sqrt(512 * 512 / 500)) <= 1e-9
    assert abs(s - 22.89) < 0.01


def test_04_gradient_checks():
    """Central finite differences over every layer and loss op, kinks excluded."""
    start = time.perf_counter()
    rng = np.random.default_rng(23)
    instances = 0

    for _ in range(6):
        x = rng.normal(size=(2, 6, 6))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        r = rng.normal(size=(3, 6, 6))
        dx, dw, db = net.conv3_backward(x, w, r)
        assert relative_error(dx, central_diff(lambda v: (net.conv3_forward(v, w, b) * r).sum(), x)) < 1e-3
        assert relative_error(dw, central_diff(lambda v: (net.conv3_forward(x, v, b) * r).sum(), w)) < 1e-3
        assert relative_error(db, central_diff(lambda v: (net.conv3_forward(x, w, v) * r).sum(), b)) < 1e-3
        instances += 3

    for _ in range(6):
        x = rng.normal(size=(4, 5, 5))
        w = rng.normal(size=(2, 4))
        b = rng.normal(size=2)
        r = rng.normal(size=(2, 5, 5))
        dx, dw, db = net.conv1_backward(x, w, r)
        assert relative_error(dx, central_diff(lambda v: (net.conv1_forward(v, w, b) * r).sum(), x)) < 1e-3
        assert relative_error(dw, central_diff(lambda v: (net.conv1_forward(x, v, b) * r).sum(), w)) < 1e-3
        assert relative_error(db, central_diff(lambda v: (net.conv1_forward(x, w, v) * r).sum(), b)) < 1e-3
        instances += 3

    for _ in range(8):
        x = rng.normal(size=(2, 6, 6))
        x[np.abs(x) < 1e-2] = 0.1
        r = rng.normal(size=x.shape)
        assert relative_error(net.relu_backward(x, r), central_diff(lambda v: (net.relu_forward(v) * r).sum(), x)) < 1e-3
        instances += 1

    for _ in range(8):
        x = rng.normal(size=(2, 6, 6)) + np.linspace(0, 1, 72).reshape(2, 6, 6)
        r = rng.normal(size=(2, 3, 3))
        _, idx = net.maxpool2_forward(x)
        dx = net.maxpool2_backward(idx, x.shape, r)
        assert relative_error(dx, central_diff(lambda v: (net.maxpool2_forward(v)[0] * r).sum(), x)) < 1e-3
        instances += 1

    for _ in range(8):
        x = rng.normal(size=(2, 3, 3))
        r = rng.normal(size=(2, 6, 6))
        assert relative_error(net.upsample2_backward(r), central_diff(lambda v: (net.upsample2_forward(v) * r).sum(), x)) < 1e-3
        instances += 1

    for _ in range(8):
        skip = rng.normal(size=(2, 4, 4))
        up = rng.normal(size=(3, 4, 4))
        r = rng.normal(size=(5, 4, 4))
        ds, du = net.concat_backward(r, 2)
        assert relative_error(ds, central_diff(lambda v: (net.concat_forward(v, up) * r).sum(), skip)) < 1e-3
        assert relative_error(du, central_diff(lambda v: (net.concat_forward(skip, v) * r).sum(), up)) < 1e-3
        instances += 2

    for _ in range(8):
        z = rng.normal(size=(5, 5))
        r = rng.normal(size=(5, 5))
        y = net.sigmoid_forward(z)
        assert relative_error(net.sigmoid_backward(y, r), central_diff(lambda v: (net.sigmoid_forward(v) * r).sum(), z)) < 1e-3
        instances += 1

    for _ in range(15):
        probs = rng.uniform(0.05, 0.95, size=(7, 7))
        target = (rng.random((7, 7)) < rng.random()).astype(np.uint8)
        _, grad = bce(probs, target)
        assert relative_error(grad, central_diff(lambda p: bce(p, target)[0], probs, eps=1e-5)) < 1e-4
        instances += 1

    cfg = LossConfig()
    checked_soft = 0
    while checked_soft < 15:
        lm = _voronoi_label_map(rng, 10, 10, int(rng.integers(2, 6)))
        probs = rng.uniform(0.05, 0.95, size=(10, 10))
        pbar = np.array([probs[lm.labels == j].mean() for j in range(lm.num_segments)])
        ohat = np.maximum(pbar, 1 - pbar)
        near_kink = (
            (np.abs(ohat - cfg.tau) < 1e-3)
            | (np.abs(ohat - cfg.soft_ramp_low) < 1e-3)
            | (np.abs(pbar - 0.5) < 1e-3)
        )
        if near_kink.any():
            continue
        _, grad = soft_consistency(lm, probs, cfg)
        assert relative_error(grad, central_diff(lambda p: soft_consistency(lm, p, cfg)[0], probs, eps=1e-5)) < 1e-4
        checked_soft += 1
        instances += 1

    checked_compound = 0
    while checked_compound < 15:
        lm = _voronoi_label_map(rng, 8, 8, int(rng.integers(2, 5)))
        probs = rng.uniform(0.1, 0.9, size=(8, 8))
        target = (rng.random((8, 8)) < rng.random()).astype(np.uint8)
        lam = float(rng.uniform(0.1, 2.0))
        cfg2 = LossConfig(lambda_=lam)
        pbar = np.array([probs[lm.labels == j].mean() for j in range(lm.num_segments)])
        ohat = np.maximum(pbar, 1 - pbar)
        near_kink = (
            (np.abs(ohat - cfg2.tau) < 1e-3)
            | (np.abs(ohat - cfg2.soft_ramp_low) < 1e-3)
            | (np.abs(pbar - 0.5) < 1e-3)
        )
        if near_kink.any():
            continue
        _, grad = slic_loss(probs, target, lm, cfg2)
        numeric = central_diff(lambda p: slic_loss(p, target, lm, cfg2)[0].total, probs, eps=1e-5)
        assert relative_error(grad, numeric) < 1e-4
        checked_compound += 1
        instances += 1

    assert instances >= 100, f"only {instances} gradient instances checked"
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0, f"gradient checks took {elapsed:.1f}s"


def test_05_hard_consistency_brute_force():
    """Vectorized occupancy tally agrees exactly with a per-pixel loop."""
    rng = np.random.default_rng(24)
    for _ in range(200):
        h = int(rng.integers(2, 33))
        w = int(rng.integers(2, 33))
        lm = _voronoi_label_map(rng, h, w, int(rng.integers(1, 13)))
        mask = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        tau = float(rng.uniform(0.55, 1.0))

        consistent = 0
        occupancies = []
        for j in range(lm.num_segments):
            pixels = mask[lm.labels == j]
            f = pixels.sum() / len(pixels)
            o = max(f, 1 - f)
            occupancies.append(o)
            if o >= tau:
                consistent += 1

        report = hard_consistency(lm, mask, tau)
        assert report.consistent_fraction == consistent / lm.num_segments
        assert report.penalty == 1.0 - consistent / lm.num_segments
        assert report.per_segment_occupancy.tolist() == occupancies


EXPERIMENT = {
    "size": 128,
    "source_train": 60,
    "target_test": 40,
    "seeds": [0, 1, 2, 3, 4],
    "generator_seed": 100,
    "lambda": 0.75,
    "tau": 0.8,
    "soft_ramp_low": 0.2,
    "m": 50.0,
    "bce_epochs": 15,
    "slicloss_epochs": 30,
}


def _domain_shift_report():
    side = EXPERIMENT["size"]
    k = round(side * side / grid_spacing(512, 512, 500) ** 2)
    count = EXPERIMENT["source_train"] + EXPERIMENT["target_test"]
    full_src, full_tgt = synth_generate(
        SynthConfig(count=count, size=(side, side), seed=EXPERIMENT["generator_seed"])
    )
    source = Dataset(full_src.items[: EXPERIMENT["source_train"]])
    target = Dataset(full_tgt.items[EXPERIMENT["source_train"] :])

    loss_cfg = LossConfig(
        lambda_=EXPERIMENT["lambda"],
        tau=EXPERIMENT["tau"],
        soft_ramp_low=EXPERIMENT["soft_ramp_low"],
    )
    slic_params = SlicParams(k=k, m=EXPERIMENT["m"])
    model_cfg = ModelConfig()

    rows = []
    for seed in EXPERIMENT["seeds"]:
        tr, va = split(source, 0.75, seed=seed)
        row = {"seed": seed}
        for loss, epochs in (
            ("bce", EXPERIMENT["bce_epochs"]),
            ("slicloss", EXPERIMENT["slicloss_epochs"]),
        ):
            cfg = TrainConfig(
                epochs=epochs, seed=seed, loss=loss,
                loss_config=loss_cfg, slic_params=slic_params,
            )
            params, _ = train(tr, va, model_cfg, cfg)
            row[f"{loss}_sd_iou"] = evaluate(params, model_cfg, va).mean_iou
            row[f"{loss}_td_iou"] = evaluate(params, model_cfg, target).mean_iou
        rows.append(row)

    mean = lambda key: float(np.mean([r[key] for r in rows]))
    means = {key: mean(key) for key in ("bce_sd_iou", "bce_td_iou", "slicloss_sd_iou", "slicloss_td_iou")}
    td_gain = means["slicloss_td_iou"] - means["bce_td_iou"]
    sd_drop = means["bce_sd_iou"] - means["slicloss_sd_iou"]
    claim = {
        "td_not_worse": means["slicloss_td_iou"] >= means["bce_td_iou"],
        "td_gain": td_gain,
        "sd_drop": sd_drop,
        "gain_exceeds_drop": td_gain > sd_drop,
    }
    claim["holds"] = claim["td_not_worse"] and claim["gain_exceeds_drop"]
    return {"protocol": {**EXPERIMENT, "k": k}, "per_seed": rows, "means": means, "claim": claim}


def _render_domain_shift_markdown(report):
    lines = [
        "# Cross-modality generalization: compound loss vs plain BCE",
        "",
        f"Protocol: {report['protocol']['source_train']} source images "
        f"(75/25 train/val split), {report['protocol']['target_test']} held-out "
        f"target-modality images, {report['protocol']['size']}x{report['protocol']['size']} px, "
        f"lambda={report['protocol']['lambda']}, tau={report['protocol']['tau']}, "
        f"m={report['protocol']['m']}, k={report['protocol']['k']}, "
        f"{len(report['per_seed'])} seeds.",
        "",
        "| seed | BCE SD IoU | BCE TD IoU | compound SD IoU | compound TD IoU |",
        "|-----:|-----------:|-----------:|----------------:|----------------:|",
    ]
    for row in report["per_seed"]:
        lines.append(
            f"| {row['seed']} | {row['bce_sd_iou']:.4f} | {row['bce_td_iou']:.4f} "
            f"| {row['slicloss_sd_iou']:.4f} | {row['slicloss_td_iou']:.4f} |"
        )
    m = report["means"]
    lines.append(
        f"| mean | {m['bce_sd_iou']:.4f} | {m['bce_td_iou']:.4f} "
        f"| {m['slicloss_sd_iou']:.4f} | {m['slicloss_td_iou']:.4f} |"
    )
    claim = report["claim"]
    lines += [
        "",
        f"Target-domain gain: {claim['td_gain']:+.4f} IoU; "
        f"source-domain cost: {claim['sd_drop']:+.4f} IoU.",
        f"Directional claim (TD not worse, gain exceeds SD cost): "
        f"{'HOLDS' if claim['holds'] else 'FLAGGED - does not hold'}.",
        "",
    ]
    return "\n".join(lines)


def test_06_domain_shift_comparison():
    """Compound-loss model vs BCE across the modality gap, 5 seeds."""
    start = time.perf_counter()
    report = _domain_shift_report()
    elapsed = time.perf_counter() - start

    reports_dir = os.path.join(os.path.dirname(__file__), os.pardir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    with open(os.path.join(reports_dir, "domain_shift.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    markdown = _render_domain_shift_markdown(report)
    with open(os.path.join(reports_dir, "domain_shift.md"), "w") as fh:
        fh.write(markdown)

    print()
    print(markdown)
    assert elapsed < 45 * 60, f"comparison took {elapsed / 60:.1f} min"

    claim = report["claim"]
    if not claim["holds"]:
        warnings.warn(
            "FLAGGED: directional domain-shift claim does not hold under the "
            f"default generator (TD gain {claim['td_gain']:+.4f}, "
            f"SD cost {claim['sd_drop']:+.4f}); see reports/domain_shift.md",
            stacklevel=1,
        )


def test_07_gridsearch_harness(tmp_path):
    """Axis sweep yields exactly 10 runs and a table-shaped report."""
    start = time.perf_counter()
    side = 48
    full_src, full_tgt = synth_generate(SynthConfig(count=5, size=(side, side), seed=50))
    src_root = tmp_path / "src"
    tgt_root = tmp_path / "tgt"
    write_dataset(full_src, src_root)
    write_dataset(Dataset(full_tgt.items[:3]), tgt_root)

    cfg = resolve_config(
        {
            "train": {"epochs": 2},
            "augment": NO_AUG_SECTION,
            "slic": {"k": 12},
            "data": {"train_root": str(src_root), "target_root": str(tgt_root)},
        },
        seed=0,
    )
    report = run_grid(cfg, threads=1)

    rows = report["cells"]
    assert len(rows) == 10
    axes = {(r["axis"], r["value"]) for r in rows}
    assert axes == {
        ("lambda", 0.5), ("lambda", 0.75), ("lambda", 1.0),
        ("k", 50), ("k", 150), ("k", 500), ("k", 1000),
        ("m", 20.0), ("m", 30.0), ("m", 50.0),
    }
    assert all(r["status"] == "ok" for r in rows)
    assert set(report["best"]) == {"lambda", "k", "m"}

    markdown = render_markdown(report)
    assert markdown.count("## ") == 3
    assert "*" in markdown

    elapsed = time.perf_counter() - start
    assert elapsed < 15 * 60, f"grid sweep took {elapsed / 60:.1f} min"


def test_08_metric_identities():
    """dice == 2*iou/(1+iou) exactly, plus the half-overlap hand case."""
    rng = np.random.default_rng(26)
    for _ in range(1000):
        h = int(rng.integers(1, 33))
        w = int(rng.integers(1, 33))
        a = (rng.random((h, w)) < rng.uniform(0, 1)).astype(np.uint8)
        b = (rng.random((h, w)) < rng.uniform(0, 1)).astype(np.uint8)
        i = iou(a, b)
        d = dice(a, b)

        inter = int(np.count_nonzero(a.astype(bool) & b.astype(bool)))
        union = int(np.count_nonzero(a.astype(bool) | b.astype(bool)))
        if union == 0:
            assert i == 1.0 and d == 1.0
            continue
        exact_iou = Fraction(inter, union)
        assert d == float(2 * exact_iou / (1 + exact_iou))
        assert abs(d - 2 * i / (1 + i)) <= 1e-12

    a = np.array([[1, 1]], dtype=np.uint8)
    b = np.array([[1, 0]], dtype=np.uint8)
    assert abs(iou(a, b) - 0.5) <= 1e-12
    assert abs(dice(a, b) - 2 / 3) <= 1e-12


def test_09_determinism(tmp_path):
    """Byte-identical training reruns; label maps invariant to thread count."""
    data_root = tmp_path / "data"
    synth_cfg = tmp_path / "synth.json"
    synth_cfg.write_text(json.dumps({"synth": {"size": [32, 32]}}))
    code = cli.main(["synth", "--out", str(data_root), "--count", "6",
                     "--config", str(synth_cfg), "--seed", "7"])
    assert code == 0

    train_cfg = tmp_path / "train.json"
    train_cfg.write_text(json.dumps({
        "train": {"epochs": 2, "loss": "slicloss"},
        "augment": NO_AUG_SECTION,
        "slic": {"k": 8},
        "data": {"train_root": str(data_root / "source")},
    }))
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        code = cli.main(["train", "--config", str(train_cfg),
                         "--seed", "3", "--out", str(out)])
        assert code == 0
        outs.append(out)
    for artifact in ("report.json", "weights.json", "weights.bin"):
        a = (outs[0] / artifact).read_bytes()
        b = (outs[1] / artifact).read_bytes()
        assert a == b, f"{artifact} differs between identical reruns"

    image_path = str(data_root / "source" / "images" / "img_0000.png")
    splms = []
    for threads in ("1", "4"):
        out = tmp_path / f"slic_t{threads}"
        env = dict(os.environ)
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            env[var] = threads
        proc = subprocess.run(
            [sys.executable, "-m", "slicseg", "slic", image_path,
             "--threads", threads, "--out", str(out)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        splms.append((out / "labels.splm").read_bytes())
    assert splms[0] == splms[1], "label map bytes differ across thread counts"
