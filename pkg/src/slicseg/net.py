"""Minimal U-shaped segmentation network with hand-written backprop.

A reduced stand-in for a full U-Net, sized to train on a CPU in
minutes: ``depth`` encoder levels of (conv3x3 + ReLU) x2 followed by
2x2 max-pooling, a bottleneck double-conv, then mirrored decoder levels
of nearest-neighbor upsampling, skip concatenation, and double-conv,
closed by a 1x1 conv + sigmoid head. All levels share a constant
channel width (``base_channels``), which keeps the default model at
about 6.6k parameters.

Arrays are plain numpy: activations are (channels, height, width)
float64, parameters live in name-keyed dicts. Layer primitives are
exposed in forward/backward pairs so each one can be checked against
finite differences in isolation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from slicseg import imgcore
from slicseg.data import pad_to_multiple

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class MissingActivationsError(RuntimeError):
    """backward() was called without (or with mismatched) cached activations."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs: pool depth and the constant channel width.

    Kernel size (3), activation (ReLU), and output head (1x1 conv +
    sigmoid) are fixed.
    """

    depth: int = 2
    base_channels: int = 8

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")


@dataclass
class ParamSet:
    """Named parameter tensors with their Adam moments and step counter."""

    params: dict
    m: dict
    v: dict
    step: int = 0

    def copy(self) -> "ParamSet":
        return ParamSet(
            params={k: v.copy() for k, v in self.params.items()},
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
            step=self.step,
        )


def parameter_shapes(cfg: ModelConfig) -> list:
    """Ordered (name, shape) pairs; this order is the weights-file order."""
    c = cfg.base_channels
    shapes = []

    def block(prefix: str, in_ch: int) -> None:
        shapes.append((f"{prefix}.conv1.w", (c, in_ch, 3, 3)))
        shapes.append((f"{prefix}.conv1.b", (c,)))
        shapes.append((f"{prefix}.conv2.w", (c, c, 3, 3)))
        shapes.append((f"{prefix}.conv2.b", (c,)))

    in_ch = 3
    for lv in range(cfg.depth):
        block(f"enc{lv}", in_ch)
        in_ch = c
    block("bottleneck", c)
    for lv in reversed(range(cfg.depth)):
        block(f"dec{lv}", 2 * c)
    shapes.append(("out.w", (1, c)))
    shapes.append(("out.b", (1,)))
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in parameter_shapes(cfg))


def init_params(cfg: ModelConfig, seed: int) -> ParamSet:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg):
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return ParamSet(
        params=params,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
    )


# --- layer primitives ------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * w)


def conv3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1 (spatial shape preserved)."""
    out_ch = w.shape[0]
    _, h, width = x.shape
    cols = _im2col(x)
    y = w.reshape(out_ch, -1) @ cols + b[:, None]
    return y.reshape(out_ch, h, width)


def conv3_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    out_ch = w.shape[0]
    in_ch, h, width = x.shape
    cols = _im2col(x)
    dy_flat = dy.reshape(out_ch, -1)
    dw = (dy_flat @ cols.T).reshape(w.shape)
    db = dy_flat.sum(axis=1)
    dcols = (w.reshape(out_ch, -1).T @ dy_flat).reshape(in_ch, 3, 3, h, width)
    dx_padded = np.zeros((in_ch, h + 2, width + 2))
    for ky in range(3):
        for kx in range(3):
            dx_padded[:, ky : ky + h, kx : kx + width] += dcols[:, ky, kx]
    return dx_padded[:, 1 : h + 1, 1 : width + 1], dw, db


def conv1_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1x1 convolution: per-pixel linear map over channels."""
    return np.tensordot(w, x, axes=([1], [0])) + b[:, None, None]


def conv1_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dw = np.tensordot(dy, x, axes=([1, 2], [1, 2]))
    db = dy.sum(axis=(1, 2))
    dx = np.tensordot(w, dy, axes=([0], [0]))
    return dx, dw, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, dy, 0.0)


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; ties resolved to the first element in
    row-major window order."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max-pool input must have even spatial dims, got {h}x{w}")
    tiles = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = tiles.argmax(axis=3)
    y = np.take_along_axis(tiles, idx[:, :, :, None], axis=3)[:, :, :, 0]
    return y, idx


def maxpool2_backward(idx: np.ndarray, in_shape: tuple, dy: np.ndarray) -> np.ndarray:
    c, h, w = in_shape
    tiles = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(tiles, idx[:, :, :, None], dy[:, :, :, None], axis=3)
    return tiles.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    c, h, w = dy.shape
    return dy.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


def concat_forward(skip: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Channel concatenation, skip connection first."""
    return np.concatenate([skip, up], axis=0)


def concat_backward(dy: np.ndarray, skip_channels: int):
    return dy[:skip_channels], dy[skip_channels:]


def sigmoid_forward(z: np.ndarray) -> np.ndarray:
    return expit(z)


def sigmoid_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


# --- network ---------------------------------------------------------------


def _check_image(cfg: ModelConfig, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) input, got shape {image.shape}")
    h, w = image.shape[1:]
    divisor = 2**cfg.depth
    if h % divisor or w % divisor:
        raise ValueError(f"spatial dims {h}x{w} must be divisible by {divisor}")
    return image


def _block_forward(params: dict, prefix: str, x: np.ndarray):
    z1 = conv3_forward(x, params[f"{prefix}.conv1.w"], params[f"{prefix}.conv1.b"])
    a1 = relu_forward(z1)
    z2 = conv3_forward(a1, params[f"{prefix}.conv2.w"], params[f"{prefix}.conv2.b"])
    a2 = relu_forward(z2)
    return a2, (x, z1, a1, z2)


def _block_backward(params: dict, prefix: str, block_cache, da2: np.ndarray, grads: dict):
    x, z1, a1, z2 = block_cache
    dz2 = relu_backward(z2, da2)
    da1, dw2, db2 = conv3_backward(a1, params[f"{prefix}.conv2.w"], dz2)
    dz1 = relu_backward(z1, da1)
    dx, dw1, db1 = conv3_backward(x, params[f"{prefix}.conv1.w"], dz1)
    grads[f"{prefix}.conv1.w"] = dw1
    grads[f"{prefix}.conv1.b"] = db1
    grads[f"{prefix}.conv2.w"] = dw2
    grads[f"{prefix}.conv2.b"] = db2
    return dx


def forward_with_cache(params: ParamSet, cfg: ModelConfig, image: np.ndarray):
    """Forward pass returning (probabilities, activation cache for backward)."""
    image = _check_image(cfg, image)
    p = params.params
    cache = {"image": image, "enc": [], "skips": [], "dec": []}

    h = image
    for lv in range(cfg.depth):
        h, block_cache = _block_forward(p, f"enc{lv}", h)
        cache["skips"].append(h)
        pooled, idx = maxpool2_forward(h)
        cache["enc"].append((block_cache, idx, h.shape))
        h = pooled

    h, cache["bottleneck"] = _block_forward(p, "bottleneck", h)

    for lv in reversed(range(cfg.depth)):
        up = upsample2_forward(h)
        cat = concat_forward(cache["skips"][lv], up)
        h, block_cache = _block_forward(p, f"dec{lv}", cat)
        cache["dec"].append((lv, block_cache))

    cache["head_in"] = h
    logits = conv1_forward(h, p["out.w"], p["out.b"])
    probs = sigmoid_forward(logits)[0]
    cache["probs"] = probs
    return probs, cache


def forward(params: ParamSet, cfg: ModelConfig, image: np.ndarray) -> np.ndarray:
    """Predicted foreground probabilities, shape (H, W), values in (0, 1)."""
    probs, _ = forward_with_cache(params, cfg, image)
    return probs


def image_to_input(image: np.ndarray) -> np.ndarray:
    """RGB (H, W, 3) uint8 -> standardized network input (3, H, W) float64.

    Each channel is z-scored per image, so global brightness and color
    casts are removed before the first convolution and the network sees
    within-image contrast only; a constant channel maps to all zeros.
    """
    imgcore.ensure_rgb(image)
    x = image.astype(np.float64).transpose(2, 0, 1) / 255.0
    mean = x.mean(axis=(1, 2), keepdims=True)
    std = x.std(axis=(1, 2), keepdims=True)
    return (x - mean) / (std + 1e-6)


def predict(params: ParamSet, cfg: ModelConfig, image: np.ndarray) -> np.ndarray:
    """Forward an RGB image of any valid size, reflect-padding as needed.

    The padded margin is cropped away, so the returned probability map
    matches the input's spatial shape exactly.
    """
    x = image_to_input(image)
    h, w = x.shape[1], x.shape[2]
    padded = pad_to_multiple(x, 2 ** cfg.depth)
    probs = forward(params, cfg, padded)
    return probs[:h, :w]


def backward(params: ParamSet, cfg: ModelConfig, image: np.ndarray, loss_grad: np.ndarray, cache) -> dict:
    """Parameter gradients for d(loss)/d(probs) = ``loss_grad``.

    ``cache`` must come from :func:`forward_with_cache` on the same
    image; anything else raises :class:`MissingActivationsError`.
    """
    if cache is None:
        raise MissingActivationsError("no cached activations; run forward_with_cache first")
    if cache["image"].shape != np.shape(image) or not np.array_equal(cache["image"], image):
        raise MissingActivationsError("cached activations belong to a different image")
    p = params.params
    c = cfg.base_channels
    grads = {}

    probs = cache["probs"]
    dlogits = sigmoid_backward(probs, np.asarray(loss_grad, dtype=np.float64))[None]
    dh, dw_out, db_out = conv1_backward(cache["head_in"], p["out.w"], dlogits)
    grads["out.w"] = dw_out
    grads["out.b"] = db_out

    dskips = [None] * cfg.depth
    for lv, block_cache in reversed(cache["dec"]):
        dcat = _block_backward(p, f"dec{lv}", block_cache, dh, grads)
        dskip, dup = concat_backward(dcat, c)
        dskips[lv] = dskip
        dh = upsample2_backward(dup)

    dh = _block_backward(p, "bottleneck", cache["bottleneck"], dh, grads)

    for lv in reversed(range(cfg.depth)):
        block_cache, idx, skip_shape = cache["enc"][lv]
        dpool_in = maxpool2_backward(idx, skip_shape, dh)
        dpool_in += dskips[lv]
        dh = _block_backward(p, f"enc{lv}", block_cache, dpool_in, grads)

    return grads


def adam_step(params: ParamSet, grads: dict, lr: float) -> None:
    """One in-place Adam update with bias correction."""
    if not lr >= 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    for name, p in params.params.items():
        if name not in grads:
            raise ValueError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != p.shape:
            raise ValueError(
                f"gradient shape {grads[name].shape} does not match parameter "
                f"{name!r} shape {p.shape}"
            )
    params.step += 1
    t = params.step
    correct1 = 1.0 - ADAM_BETA1**t
    correct2 = 1.0 - ADAM_BETA2**t
    for name, p in params.params.items():
        g = grads[name]
        m = params.m[name]
        v = params.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


# --- weights file ----------------------------------------------------------

WEIGHTS_FORMAT = "slicseg-weights-v1"


def save_weights(params: ParamSet, cfg: ModelConfig, manifest_path, seed: int) -> None:
    """Write a JSON manifest plus a float32 little-endian binary blob.

    The blob file sits next to the manifest and holds every tensor's
    raw bytes concatenated in manifest order.
    """
    manifest_path = os.fspath(manifest_path)
    blob_name = os.path.splitext(os.path.basename(manifest_path))[0] + ".bin"
    tensors = []
    chunks = []
    for name, shape in parameter_shapes(cfg):
        value = params.params[name]
        if tuple(value.shape) != tuple(shape):
            raise ValueError(f"parameter {name!r} has shape {value.shape}, expected {shape}")
        tensors.append({"name": name, "shape": list(shape)})
        chunks.append(value.astype("<f4").tobytes())
    manifest = {
        "format": WEIGHTS_FORMAT,
        "dtype": "float32",
        "seed": seed,
        "model": {"depth": cfg.depth, "base_channels": cfg.base_channels},
        "blob": blob_name,
        "tensors": tensors,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(os.path.dirname(manifest_path), blob_name), "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(manifest_path):
    """Read a weights manifest; returns (ParamSet, ModelConfig, seed).

    Values are upcast to float64 and the Adam state starts fresh.
    """
    manifest_path = os.fspath(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"{manifest_path}: unrecognized weights format {manifest.get('format')!r}")
    cfg = ModelConfig(**manifest["model"])
    expected = parameter_shapes(cfg)
    listed = [(t["name"], tuple(t["shape"])) for t in manifest["tensors"]]
    if listed != [(name, tuple(shape)) for name, shape in expected]:
        raise ValueError(f"{manifest_path}: tensor list does not match the declared model")
    blob_path = os.path.join(os.path.dirname(manifest_path), manifest["blob"])
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    total = sum(int(np.prod(shape)) for _, shape in expected)
    if len(blob) != 4 * total:
        raise ValueError(f"{blob_path}: expected {4 * total} bytes, got {len(blob)}")
    params = {}
    offset = 0
    for name, shape in expected:
        n = int(np.prod(shape))
        flat = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        params[name] = flat.reshape(shape).astype(np.float64)
        offset += 4 * n
    param_set = ParamSet(
        params=params,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
    )
    return param_set, cfg, int(manifest["seed"])
