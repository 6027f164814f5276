"""Hyperparameter sweep over the compound loss: weight, superpixel count, compactness.

The default axis-sweep varies one hyperparameter at a time around a fixed
base point (lambda=0.25, k=100, m=40), training one model per cell and
scoring every cell on both the source-domain validation split and the
held-out target domain. Cell selection uses target-domain IoU —
deliberately peeking at the target domain, which is the tuning protocol
this harness exists to reproduce; treat the chosen values accordingly.
A full-cross mode over the cartesian product is available as well.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from slicseg import config as configmod
from slicseg import metrics
from slicseg.data import load_dataset, split
from slicseg.train import TrainingDiverged, train

GRID_BASE = {"lambda": 0.25, "k": 100, "m": 40.0}

GRID_MODES = ("axis-sweep", "full-cross")

_AXIS_LABELS = {
    "lambda": "Loss weight (lambda)",
    "k": "Superpixel count (k)",
    "m": "Compactness (m)",
}


@dataclass(frozen=True)
class GridSpec:
    lambda_values: tuple = (0.5, 0.75, 1.0)
    k_values: tuple = (50, 150, 500, 1000)
    m_values: tuple = (20.0, 30.0, 50.0)
    mode: str = "axis-sweep"

    def __post_init__(self) -> None:
        for name in ("lambda_values", "k_values", "m_values"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if len(values) == 0:
                raise ValueError(f"{name} must be non-empty")
        if self.mode not in GRID_MODES:
            raise ValueError(f"mode must be one of {GRID_MODES}, got {self.mode!r}")


def build_grid_spec(cfg: dict) -> GridSpec:
    section = cfg["grid"]
    try:
        return GridSpec(
            lambda_values=tuple(section["lambda_values"]),
            k_values=tuple(section["k_values"]),
            m_values=tuple(section["m_values"]),
            mode=section["mode"],
        )
    except (TypeError, ValueError) as exc:
        raise configmod.ConfigError(f"invalid grid configuration: {exc}") from exc


def grid_cells(spec: GridSpec) -> list:
    """One dict per training run: swept axis, its value, and the full point."""
    cells = []
    if spec.mode == "axis-sweep":
        for value in spec.lambda_values:
            cells.append({"axis": "lambda", "value": value, **GRID_BASE, "lambda": value})
        for value in spec.k_values:
            cells.append({"axis": "k", "value": value, **GRID_BASE, "k": value})
        for value in spec.m_values:
            cells.append({"axis": "m", "value": value, **GRID_BASE, "m": value})
    else:
        for lam in spec.lambda_values:
            for k in spec.k_values:
                for m in spec.m_values:
                    cells.append(
                        {"axis": "cross", "value": [lam, k, m], "lambda": lam, "k": k, "m": m}
                    )
    return cells


def run_cell(payload: tuple) -> dict:
    """Train and score one grid cell; failures are recorded, not raised."""
    cfg, cell = payload
    result = {"axis": cell["axis"], "value": cell["value"], "lambda": cell["lambda"],
              "k": cell["k"], "m": cell["m"], "status": "ok", "error": None,
              "sd_iou": None, "td_iou": None, "sd_dice": None, "td_dice": None,
              "best_epoch": None}
    try:
        cell_cfg = json.loads(json.dumps(cfg))
        cell_cfg["loss"]["lambda"] = cell["lambda"]
        cell_cfg["slic"]["k"] = cell["k"]
        cell_cfg["slic"]["m"] = cell["m"]
        cell_cfg["train"]["loss"] = "slicloss"

        data_cfg = cell_cfg["data"]
        source = load_dataset(
            os.path.join(data_cfg["train_root"], "images"),
            os.path.join(data_cfg["train_root"], "masks"),
            "source",
        )
        target = load_dataset(
            os.path.join(data_cfg["target_root"], "images"),
            os.path.join(data_cfg["target_root"], "masks"),
            "target",
        )
        train_ds, val_ds = split(source, data_cfg["train_frac"], cell_cfg["seed"])
        model_cfg = configmod.build_model_config(cell_cfg)
        params, report = train(train_ds, val_ds, model_cfg, configmod.build_train_config(cell_cfg))
        sd = metrics.evaluate(params, model_cfg, val_ds, threshold=0.5)
        td = metrics.evaluate(params, model_cfg, target, threshold=0.5)
        result.update(
            sd_iou=sd.mean_iou,
            td_iou=td.mean_iou,
            sd_dice=sd.mean_dice,
            td_dice=td.mean_dice,
            best_epoch=report.best_epoch,
        )
    except (ValueError, OSError, RuntimeError, TrainingDiverged) as exc:
        result["status"] = "failed"
        result["error"] = f"{type(exc).__name__}: {exc}"
    return result


def _best_cell(rows: list):
    """Highest TD IoU; ties go to the lower hyperparameter value."""
    ok = [row for row in rows if row["status"] == "ok"]
    if not ok:
        return None
    def sort_key(row):
        value = row["value"]
        return (-row["td_iou"], tuple(value) if isinstance(value, list) else value)
    return min(ok, key=sort_key)


def run_grid(cfg: dict, threads: int = 1) -> dict:
    """Train/evaluate every cell and assemble the sweep report."""
    if not cfg["data"]["train_root"] or not cfg["data"]["target_root"]:
        raise configmod.ConfigError("gridsearch requires data.train_root and data.target_root")
    spec = build_grid_spec(cfg)
    cells = grid_cells(spec)
    payloads = [(cfg, cell) for cell in cells]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, payloads))
    else:
        rows = [run_cell(payload) for payload in payloads]

    best = {}
    if spec.mode == "axis-sweep":
        for axis in ("lambda", "k", "m"):
            top = _best_cell([row for row in rows if row["axis"] == axis])
            best[axis] = None if top is None else top["value"]
    else:
        top = _best_cell(rows)
        best["cross"] = None if top is None else top["value"]

    return {"mode": spec.mode, "base": dict(GRID_BASE), "cells": rows, "best": best}


def render_markdown(report: dict) -> str:
    """Human-readable sweep table: one block per axis, best row starred."""
    lines = ["# Hyperparameter sweep", ""]
    lines.append(f"Mode: {report['mode']}; base point: "
                 f"lambda={report['base']['lambda']}, k={report['base']['k']}, m={report['base']['m']}")
    lines.append("")
    if report["mode"] == "axis-sweep":
        groups = [(axis, [r for r in report["cells"] if r["axis"] == axis])
                  for axis in ("lambda", "k", "m")]
    else:
        groups = [("cross", report["cells"])]
    for axis, rows in groups:
        title = _AXIS_LABELS.get(axis, "Full cross product")
        lines.append(f"## {title}")
        lines.append("")
        lines.append("| Value | SD IoU | TD IoU | SD Dice | TD Dice |")
        lines.append("|---|---|---|---|---|")
        best_value = report["best"].get(axis)
        for row in rows:
            star = "*" if row["status"] == "ok" and row["value"] == best_value else ""
            if row["status"] == "ok":
                cells = [f"{row[key]:.4f}" for key in ("sd_iou", "td_iou", "sd_dice", "td_dice")]
            else:
                cells = ["failed"] * 4
            lines.append(f"| {row['value']}{star} | " + " | ".join(cells) + " |")
        lines.append("")
    lines.append("Best cell per axis chosen by TD IoU (ties favor the lower value).")
    lines.append("")
    return "\n".join(lines)
