"""Grid-seeded, locality-windowed k-means over (L, a, b, x, y) superpixels.

The clustering follows the classic SLIC recipe: seed cluster centers on a
regular grid with spacing ``S = sqrt(N / k)``, nudge each seed to the
lowest-gradient pixel in its 3x3 neighborhood, then iterate {assign pixels
to the best center among those within a 2S x 2S window, recompute centers
as means}. A post-pass merges undersized connected components so every
final segment is 4-connected.

Everything here is deterministic: ties in assignment go to the lowest
center index, ties in seeding keep the original grid position, and the
merge order is fixed by component size then component id.
"""

from __future__ import annotations

import heapq
import os
import struct
from dataclasses import dataclass

import numpy as np
import skimage.measure


@dataclass(frozen=True)
class SlicParams:
    """Knobs for superpixel generation.

    ``k`` is the requested superpixel count (the realized count differs
    due to grid rounding and connectivity merging); ``m`` trades color
    proximity against spatial compactness, higher meaning more compact.
    """

    k: int
    m: float
    iterations: int = 10
    connectivity_min_frac: float = 0.25

    def __post_init__(self) -> None:
        if not isinstance(self.k, (int, np.integer)) or self.k < 4:
            raise ValueError(f"k must be an integer >= 4, got {self.k!r}")
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m!r}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations!r}")
        if not 0.0 < self.connectivity_min_frac < 1.0:
            raise ValueError(
                f"connectivity_min_frac must lie in (0, 1), got {self.connectivity_min_frac!r}"
            )


@dataclass(frozen=True)
class ClusterCenter:
    """One k-means center: Lab color plus sub-pixel image position."""

    l: float
    a: float
    b: float
    x: float
    y: float
    count: int = 0


@dataclass
class SuperpixelLabelMap:
    """A compacted per-pixel segment assignment.

    Labels are row-major int32 in ``[0, num_segments)`` and every label
    value occurs at least once.
    """

    labels: np.ndarray
    num_segments: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
        self.labels = labels.astype(np.int32, copy=False)
        if self.num_segments < 1:
            raise ValueError(f"num_segments must be >= 1, got {self.num_segments}")
        counts = np.bincount(self.labels.ravel(), minlength=self.num_segments)
        if self.labels.min() < 0 or self.labels.max() >= self.num_segments:
            raise ValueError("label values outside [0, num_segments)")
        if len(counts) > self.num_segments or not counts.all():
            raise ValueError("labels are not compacted: some value in range never occurs")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def grid_spacing(height: int, width: int, k: int) -> float:
    """Seed grid spacing S = sqrt(N / k) for an image of N = height * width pixels."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return float(np.sqrt(height * width / k))


def _validate_lab(lab: np.ndarray) -> np.ndarray:
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) Lab image, got shape {lab.shape}")
    return lab


def seed_centers(lab: np.ndarray, k: int) -> list[ClusterCenter]:
    """Place initial centers on a regular grid, perturbed away from edges.

    The grid has ``round(W/S) * round(H/S)`` cells; rounding (rather than
    flooring) each dimension keeps the seeded count within [k/2, 2k] even
    when both W/S and H/S have fractional parts near one. Each seed moves
    to the lowest-gradient pixel in its 3x3 neighborhood, where the
    gradient is the squared Lab distance between horizontal neighbors plus
    the squared Lab distance between vertical neighbors; ties keep the
    original spot.
    """
    lab = _validate_lab(lab)
    h, w = lab.shape[:2]
    if not 4 <= k <= h * w:
        raise ValueError(f"k must lie in [4, {h * w}] for a {w}x{h} image, got {k}")
    s = grid_spacing(h, w, k)
    nx = max(1, int(np.floor(w / s + 0.5)))
    ny = max(1, int(np.floor(h / s + 0.5)))

    xp = np.clip(np.arange(w) + 1, 0, w - 1)
    xm = np.clip(np.arange(w) - 1, 0, w - 1)
    yp = np.clip(np.arange(h) + 1, 0, h - 1)
    ym = np.clip(np.arange(h) - 1, 0, h - 1)
    grad = ((lab[:, xp] - lab[:, xm]) ** 2).sum(axis=2) + (
        (lab[yp, :] - lab[ym, :]) ** 2
    ).sum(axis=2)

    centers = []
    for j in range(ny):
        for i in range(nx):
            px = min(w - 1, int(np.floor((i + 0.5) * w / nx)))
            py = min(h - 1, int(np.floor((j + 0.5) * h / ny)))
            best = grad[py, px]
            bx, by = px, py
            for ddy in (-1, 0, 1):
                for ddx in (-1, 0, 1):
                    qx = min(w - 1, max(0, px + ddx))
                    qy = min(h - 1, max(0, py + ddy))
                    if grad[qy, qx] < best:
                        best = grad[qy, qx]
                        bx, by = qx, qy
            color = lab[by, bx]
            centers.append(
                ClusterCenter(float(color[0]), float(color[1]), float(color[2]), float(bx), float(by))
            )
    return centers


def slic_distance(center, pixel, S: float, m: float) -> float:
    """Joint color-space distance D = sqrt(d_c^2 + (d_s / S)^2 * m^2).

    ``d_c`` is the Euclidean distance in Lab, ``d_s`` the Euclidean
    distance in pixel coordinates; ``center`` may be a ClusterCenter or
    any (l, a, b, x, y) sequence.
    """
    if not S > 0:
        raise ValueError(f"S must be positive, got {S}")
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    if isinstance(center, ClusterCenter):
        cl, ca, cb, cx, cy = center.l, center.a, center.b, center.x, center.y
    else:
        cl, ca, cb, cx, cy = center
    pl, pa, pb, px, py = pixel
    dc2 = (pl - cl) ** 2 + (pa - ca) ** 2 + (pb - cb) ** 2
    ds2 = (px - cx) ** 2 + (py - cy) ** 2
    return float(np.sqrt(dc2 + ds2 / (S * S) * m * m))


def cluster_pixels(lab: np.ndarray, params: SlicParams):
    """Run the windowed k-means loop; no connectivity cleanup.

    As in the published algorithm, each pixel's best distance is
    initialized to infinity once and carried across iterations: a pixel
    changes hands only when some center beats its stored distance.
    That makes the recorded objective (sum of stored distances, taken
    after each assignment pass) non-increasing by construction.

    Returns ``(labels, centers, objectives)`` where ``labels`` maps each
    pixel to a seed index and ``centers`` is the final (K, 5) array of
    (l, a, b, x, y) values.
    """
    lab = _validate_lab(lab)
    h, w = lab.shape[:2]
    if params.k > h * w:
        raise ValueError(f"k={params.k} exceeds pixel count {h * w}")
    s = grid_spacing(h, w, params.k)
    seeds = seed_centers(lab, params.k)
    centers = np.array([[c.l, c.a, c.b, c.x, c.y] for c in seeds])
    n_centers = len(centers)
    weight = (params.m / s) ** 2

    ys, xs = np.mgrid[0:h, 0:w]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    labels = np.full((h, w), -1, dtype=np.int32)
    best = np.full((h, w), np.inf)
    objectives = []

    for it in range(params.iterations):
        for ci in range(n_centers):
            cl, ca, cb, cx, cy = centers[ci]
            x0 = max(0, int(np.floor(cx - s)))
            x1 = min(w, int(np.ceil(cx + s)) + 1)
            y0 = max(0, int(np.floor(cy - s)))
            y1 = min(h, int(np.ceil(cy + s)) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            win = lab[y0:y1, x0:x1]
            dc2 = (win[:, :, 0] - cl) ** 2 + (win[:, :, 1] - ca) ** 2 + (win[:, :, 2] - cb) ** 2
            ds2 = (xs[y0:y1, x0:x1] - cx) ** 2 + (ys[y0:y1, x0:x1] - cy) ** 2
            d = np.sqrt(dc2 + ds2 * weight)
            view = best[y0:y1, x0:x1]
            upd = d < view
            view[upd] = d[upd]
            labels[y0:y1, x0:x1][upd] = ci

        # The seed grid's windows cover the image, so this fallback only
        # fires for degenerate geometries; it runs once, keeping the
        # stored distances monotone afterwards.
        if it == 0 and (labels < 0).any():
            my, mx = np.nonzero(labels < 0)
            dx = xs[my, mx, None] - centers[None, :, 3]
            dy = ys[my, mx, None] - centers[None, :, 4]
            nearest = np.argmin(dx * dx + dy * dy, axis=1)
            labels[my, mx] = nearest
            diff_c = lab[my, mx] - centers[nearest, :3]
            diff_s = np.stack([xs[my, mx], ys[my, mx]], axis=1) - centers[nearest, 3:]
            best[my, mx] = np.sqrt((diff_c**2).sum(axis=1) + (diff_s**2).sum(axis=1) * weight)
        objectives.append(float(best.sum()))

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n_centers)
        nonempty = counts > 0
        for dim, values in enumerate([lab[:, :, 0], lab[:, :, 1], lab[:, :, 2], xs, ys]):
            sums = np.bincount(flat, weights=values.ravel(), minlength=n_centers)
            centers[nonempty, dim] = sums[nonempty] / counts[nonempty]

    return labels, centers, objectives


def _compact_first_occurrence(flat: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel values to 0..n-1 ordered by first appearance in ``flat``."""
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int32)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq), dtype=np.int32)
    return rank[inverse], len(uniq)


def enforce_connectivity(label_map: SuperpixelLabelMap, S: float, min_frac: float) -> SuperpixelLabelMap:
    """Merge undersized 4-connected components into their largest neighbor.

    Components smaller than ``min_frac * S**2`` pixels are absorbed,
    smallest first, each into the largest component touching it (ties go
    to the lower component id). Output labels are recompacted in
    row-major first-occurrence order, so every final label is one
    4-connected region.
    """
    if not S > 0:
        raise ValueError(f"S must be positive, got {S}")
    labels = label_map.labels
    comp = skimage.measure.label(labels, connectivity=1, background=-1) - 1
    n_comp = int(comp.max()) + 1
    flat_comp = comp.ravel()
    sizes = np.bincount(flat_comp, minlength=n_comp).astype(np.int64)

    right = (comp[:, :-1] != comp[:, 1:])
    down = (comp[:-1, :] != comp[1:, :])
    pairs = np.concatenate(
        [
            np.stack([comp[:, :-1][right], comp[:, 1:][right]], axis=1),
            np.stack([comp[:-1, :][down], comp[1:, :][down]], axis=1),
        ]
    )
    adjacency = [set() for _ in range(n_comp)]
    if len(pairs):
        lo = pairs.min(axis=1).astype(np.int64)
        hi = pairs.max(axis=1).astype(np.int64)
        for a, b in zip(*np.unique([lo, hi], axis=1)):
            adjacency[a].add(int(b))
            adjacency[b].add(int(a))

    threshold = min_frac * S * S
    parent = np.arange(n_comp)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return int(i)

    heap = [(int(sizes[i]), i) for i in range(n_comp) if sizes[i] < threshold]
    heapq.heapify(heap)
    while heap:
        size, root = heapq.heappop(heap)
        if parent[root] != root or sizes[root] != size or size >= threshold:
            continue
        if not adjacency[root]:
            continue
        target = max(adjacency[root], key=lambda n: (sizes[n], -n))
        parent[root] = target
        sizes[target] += sizes[root]
        for n in adjacency[root]:
            adjacency[n].discard(root)
            if n != target:
                adjacency[n].add(target)
                adjacency[target].add(n)
        adjacency[root] = set()
        adjacency[target].discard(target)
        if sizes[target] < threshold:
            heapq.heappush(heap, (int(sizes[target]), target))

    roots = np.array([find(i) for i in range(n_comp)], dtype=np.int64)
    merged_flat = roots[flat_comp]
    new_flat, n_segments = _compact_first_occurrence(merged_flat)
    return SuperpixelLabelMap(new_flat.reshape(labels.shape), n_segments)


def segment(lab: np.ndarray, params: SlicParams, seed: int = 0) -> SuperpixelLabelMap:
    """Full superpixel pipeline: cluster, then connectivity cleanup.

    ``seed`` is accepted for interface stability but currently unused;
    the algorithm is fully deterministic.
    """
    label_map, _ = segment_report(lab, params, seed)
    return label_map


def segment_report(lab: np.ndarray, params: SlicParams, seed: int = 0):
    """Like :func:`segment`, but also returns per-iteration objectives."""
    del seed
    lab = _validate_lab(lab)
    h, w = lab.shape[:2]
    raw, _, objectives = cluster_pixels(lab, params)
    compact_flat, n_raw = _compact_first_occurrence(raw.ravel())
    pre = SuperpixelLabelMap(compact_flat.reshape(h, w), n_raw)
    s = grid_spacing(h, w, params.k)
    return enforce_connectivity(pre, s, params.connectivity_min_frac), objectives


def boundary_overlay(label_map: SuperpixelLabelMap, image: np.ndarray) -> np.ndarray:
    """Recolor pixels that touch a different segment to (255, 255, 0)."""
    image = np.asarray(image)
    if image.shape[:2] != label_map.labels.shape:
        raise ValueError(
            f"dimension mismatch: image {image.shape[:2]} vs labels {label_map.labels.shape}"
        )
    labels = label_map.labels
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    out = image.copy()
    out[edge] = (255, 255, 0)
    return out


_MAGIC = b"SPLM"


def save_label_map(label_map: SuperpixelLabelMap, path) -> None:
    """Write the binary label-map format: magic, u32le w/h/count, u32le labels."""
    header = _MAGIC + struct.pack(
        "<III", label_map.width, label_map.height, label_map.num_segments
    )
    body = label_map.labels.astype("<u4").tobytes()
    with open(os.fspath(path), "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_label_map(path) -> SuperpixelLabelMap:
    """Read the binary label-map format written by :func:`save_label_map`."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a label-map file (bad header)")
    w, h, num = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * w * h
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {w}x{h} labels, got {len(data)}")
    labels = np.frombuffer(data, dtype="<u4", offset=16).reshape(h, w).astype(np.int32)
    return SuperpixelLabelMap(labels, int(num))
