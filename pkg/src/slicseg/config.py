"""Run configuration: one JSON document covering every pipeline knob.

A config file may set any subset of the documented keys; everything else
falls back to the defaults below. Unknown keys are rejected so typos fail
loudly instead of silently running with defaults. The fully resolved
("effective") configuration is what commands echo into their output
directory before doing any work.
"""

from __future__ import annotations

import json

from slicseg.augment import AugConfig
from slicseg.data import Palette, SynthConfig
from slicseg.loss import LossConfig
from slicseg.net import ModelConfig
from slicseg.slic import SlicParams
from slicseg.train import TrainConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


DEFAULTS: dict = {
    "seed": 0,
    "data": {
        # Dataset roots each contain images/ and masks/ subdirectories.
        "train_root": None,   # trained-on modality; split into train/val
        "target_root": None,  # held-out modality for cross-domain evaluation
        "train_frac": 0.75,
    },
    "slic": {
        "k": 100,
        "m": 40.0,
        "iterations": 10,
        "connectivity_min_frac": 0.25,
    },
    "loss": {
        "lambda": 0.75,
        "tau": 0.8,
        "soft_ramp_low": 0.5,
    },
    "model": {
        "depth": 2,
        "base_channels": 8,
    },
    "train": {
        "learning_rate": 1e-4,
        "epochs": 15,
        "batch_size": 1,
        "loss": "bce",
    },
    "augment": {
        "hflip": True,
        "rotation_frac": 0.20,
        "shift_frac": 0.05,
        "shear_frac": 0.05,
        "zoom_frac": 0.05,
    },
    "synth": {
        "count": 20,
        "size": [128, 128],
        "blob_count_range": [2, 5],
        "blob_smoothness": 4.0,
        "noise_sigma": 3.0,
        "source_blotch_sigma": 4.0,
        "target_blotch_sigma": 12.0,
        "blotch_scale": 3.0,
        "source_palette": {
            "lesion": [38.0, 24.0, 12.0],
            "background": [73.0, 24.0, 12.0],
            "jitter": [6.0, 4.0, 4.0],
        },
        "target_palette": {
            "lesion": [38.0, -16.0, -10.0],
            "background": [73.0, -16.0, -10.0],
            "jitter": [6.0, 4.0, 4.0],
        },
    },
    "grid": {
        "lambda_values": [0.5, 0.75, 1.0],
        "k_values": [50, 150, 500, 1000],
        "m_values": [20.0, 30.0, 50.0],
        "mode": "axis-sweep",
    },
}


def _merge_section(name: str, defaults: dict, override: dict) -> dict:
    merged = {}
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in config section {name!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {name}.{key} must be an object")
            merged[key] = _merge_section(f"{name}.{key}", defaults[key], value)
        else:
            merged[key] = value
    for key, value in defaults.items():
        if key not in merged:
            merged[key] = json.loads(json.dumps(value))  # deep copy
    return merged


def resolve_config(overrides: dict | None = None, seed: int | None = None) -> dict:
    """Merge ``overrides`` onto the defaults; optionally force the seed."""
    overrides = overrides or {}
    if not isinstance(overrides, dict):
        raise ConfigError("config document must be a JSON object")
    merged = {"seed": DEFAULTS["seed"]}
    for key, value in overrides.items():
        if key == "seed":
            merged["seed"] = value
            continue
        if key not in DEFAULTS or not isinstance(DEFAULTS[key], dict):
            raise ConfigError(f"unknown top-level config key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {key!r} must be an object")
        merged[key] = _merge_section(key, DEFAULTS[key], value)
    for key, value in DEFAULTS.items():
        if key not in merged:
            merged[key] = json.loads(json.dumps(value))
    if seed is not None:
        merged["seed"] = seed
    if not isinstance(merged["seed"], int) or merged["seed"] < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {merged['seed']!r}")
    return merged


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path!r} must contain a JSON object")
    return document


def _build(factory, section: dict, rename: dict | None = None, **extra):
    kwargs = dict(section)
    for json_key, py_key in (rename or {}).items():
        if json_key in kwargs:
            kwargs[py_key] = kwargs.pop(json_key)
    kwargs.update(extra)
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {factory.__name__} configuration: {exc}") from exc


def build_slic_params(cfg: dict) -> SlicParams:
    return _build(SlicParams, cfg["slic"])


def build_loss_config(cfg: dict) -> LossConfig:
    return _build(LossConfig, cfg["loss"], rename={"lambda": "lambda_"})


def build_model_config(cfg: dict) -> ModelConfig:
    return _build(ModelConfig, cfg["model"])


def build_aug_config(cfg: dict) -> AugConfig:
    return _build(AugConfig, cfg["augment"])


def build_train_config(cfg: dict) -> TrainConfig:
    return _build(
        TrainConfig,
        cfg["train"],
        loss_config=build_loss_config(cfg),
        slic_params=build_slic_params(cfg),
        seed=cfg["seed"],
        augment=build_aug_config(cfg),
    )


def _build_palette(section: dict) -> Palette:
    try:
        return Palette(
            lesion=tuple(section["lesion"]),
            background=tuple(section["background"]),
            jitter=tuple(section["jitter"]),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid palette configuration: {exc}") from exc


def build_synth_config(cfg: dict) -> SynthConfig:
    section = dict(cfg["synth"])
    section["source_palette"] = _build_palette(section["source_palette"])
    section["target_palette"] = _build_palette(section["target_palette"])
    section["size"] = tuple(section["size"])
    section["blob_count_range"] = tuple(section["blob_count_range"])
    return _build(SynthConfig, section, seed=cfg["seed"])
