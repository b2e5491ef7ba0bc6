"""Locate completely visible modules in multi-module EL measurements.

The pipeline runs entirely in a downscaled frame: box-filter downscale,
Otsu binarization, 8-connected component labeling, tight region proposal,
then plausibility filtering (border rejection and minimum relative area).
Surviving boxes are mapped back to original-resolution coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import Image16, downscale

__all__ = [
    "BoundingBox",
    "DetectionParams",
    "BinaryMask",
    "otsu_threshold",
    "connected_components",
    "propose_regions",
    "filter_regions",
    "detect_modules",
    "synth_scene",
    "load_boxes_json",
    "save_boxes_json",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left inclusive, bottom-right exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class DetectionParams:
    """Pipeline hyperparameters: processing scale and minimum relative area.

    The defaults are the tuned operating point for on-site measurements.
    """

    scale: float = 0.23
    min_area_ratio: float = 0.42

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")
        if not (0.0 < self.min_area_ratio <= 1.0):
            raise ValueError(f"min_area_ratio must be in (0, 1], got {self.min_area_ratio}")


@dataclass(frozen=True)
class BinaryMask:
    """Boolean foreground mask, data[row, col]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.dtype != np.bool_:
            raise ValueError("mask must be a 2-d boolean array")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def otsu_threshold(img: Image16) -> int:
    """Threshold maximizing between-class variance over the 65536-bin histogram.

    Foreground is `pixels > T`. When a plateau of thresholds attains the
    maximum, the midpoint of the plateau interval [lo, hi+1) is returned.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=65536).astype(np.float64)
    n = img.pixels.size
    p = hist / n
    omega0 = np.cumsum(p)
    m0 = np.cumsum(p * np.arange(65536, dtype=np.float64))
    mu_total = m0[-1]
    omega1 = 1.0 - omega0
    valid = (omega0 > 0) & (omega1 > 0)
    if not valid.any():
        raise ValueError("constant image: Otsu threshold is undefined")
    sigma_b = np.zeros(65536)
    num = mu_total * omega0[valid] - m0[valid]
    sigma_b[valid] = num * num / (omega0[valid] * omega1[valid])
    best = sigma_b.max()
    ties = np.flatnonzero(sigma_b == best)
    return int((ties[0] + ties[-1] + 1) // 2)


def connected_components(mask: BinaryMask) -> tuple[np.ndarray, int]:
    """8-connected labeling; labels follow raster order of first pixel, background 0."""
    labels, count = ndimage.label(mask.data, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return labels.astype(np.int32), 0
    # Relabel so component k is the k-th to appear in a raster scan.
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    fg = values > 0
    order = np.argsort(first[fg])
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[values[fg][order]] = np.arange(1, count + 1, dtype=np.int32)
    return remap[labels], count


def propose_regions(labels: np.ndarray, count: int) -> list[BoundingBox]:
    """Tight bounding box of every labeled component, ordered by label."""
    boxes = []
    for sl in ndimage.find_objects(labels, max_label=count):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append(BoundingBox(x0=xs.start, y0=ys.start, x1=xs.stop, y1=ys.stop))
    return boxes


def filter_regions(
    boxes: list[BoundingBox], mask_width: int, mask_height: int, params: DetectionParams
) -> list[BoundingBox]:
    """Reject border-touching boxes, then boxes smaller than min_area_ratio * a_max.

    a_max is taken over the border survivors only: a module clipped by the
    image edge must not set the area reference for the rest of the scene.
    """
    interior = [
        b
        for b in boxes
        if b.x0 > 0 and b.y0 > 0 and b.x1 < mask_width and b.y1 < mask_height
    ]
    if not interior:
        return []
    a_max = max(b.area() for b in interior)
    return [b for b in interior if b.area() >= params.min_area_ratio * a_max]


def detect_modules(img: Image16, params: DetectionParams = DetectionParams()) -> list[BoundingBox]:
    """Run the full detection pipeline, returning original-resolution boxes.

    Raises ValueError("no modules found: ...") when the scene cannot be
    binarized (constant image).
    """
    small = downscale(img, params.scale)
    try:
        t = otsu_threshold(small)
    except ValueError as e:
        raise ValueError(f"no modules found: {e}") from e
    mask = BinaryMask(small.pixels > t)
    labels, count = connected_components(mask)
    proposals = propose_regions(labels, count)
    kept = filter_regions(proposals, mask.width, mask.height, params)
    # Map back with the effective per-axis ratios, rounding outward so the
    # module content is never truncated.
    rx = img.width / small.width
    ry = img.height / small.height
    out: list[BoundingBox] = []
    for b in kept:
        up = BoundingBox(
            x0=max(0, int(np.floor(b.x0 * rx))),
            y0=max(0, int(np.floor(b.y0 * ry))),
            x1=min(img.width, int(np.ceil(b.x1 * rx))),
            y1=min(img.height, int(np.ceil(b.y1 * ry))),
        )
        if up not in out:
            out.append(up)
    return out


def _draw_module(pix, rng, box, fg_level, grid, cell_rows, cell_cols):
    """Fill one module footprint with bright cells, grid lines and busbars."""
    h = box.y1 - box.y0
    w = box.x1 - box.x0
    block = np.full((h, w), float(fg_level))
    if grid:
        # Slight per-cell brightness variation, as in real measurements.
        ys = [round(r * h / cell_rows) for r in range(cell_rows + 1)]
        xs = [round(c * w / cell_cols) for c in range(cell_cols + 1)]
        for r in range(cell_rows):
            for c in range(cell_cols):
                gain = rng.uniform(0.95, 1.05)
                block[ys[r] : ys[r + 1], xs[c] : xs[c + 1]] *= gain
        # Cell gaps and busbars darken the module texture without ever
        # dropping below a plausible Otsu threshold at any processing scale.
        for r in range(1, cell_rows):
            y = round(r * h / cell_rows)
            block[max(0, y - 1) : y + 1, :] = 0.55 * fg_level
        for c in range(1, cell_cols):
            x = round(c * w / cell_cols)
            block[:, max(0, x - 1) : x + 1] = 0.55 * fg_level
        for k in range(1, 4):
            x = round((k - 0.5) * w / 3)
            block[:, max(0, x - 1) : x + 1] = 0.75 * fg_level
    pix[box.y0 : box.y1, box.x0 : box.x1] = block


def synth_scene(
    n_modules: int,
    width: int = 2048,
    height: int = 2048,
    *,
    bg_level: int = 400,
    fg_level: int = 28000,
    noise_sigma: float = 150.0,
    gridlines: bool = True,
    cell_rows: int = 10,
    cell_cols: int = 6,
    margin: int = 24,
    border_module: bool = False,
    seed: int = 0,
) -> tuple[Image16, list[BoundingBox]]:
    """Render a deterministic multi-module scene with known ground truth.

    Modules are placed in randomly chosen cells of a 3x3 slot grid, jittered
    within their slot, so scenes with up to nine modules are always feasible.
    With border_module=True one extra module straddles the canvas edge; it is
    drawn but excluded from the returned ground truth (it is not completely
    visible). Ground-truth boxes never touch the canvas border when margin > 0.
    """
    if n_modules < 0 or n_modules > 9:
        raise ValueError("n_modules must be in [0, 9] for the 3x3 slot layout")
    rng = np.random.default_rng(seed)
    slots_per_side = 3
    slot_w = width // slots_per_side
    slot_h = height // slots_per_side
    # Narrow size spread keeps every intra-scene area ratio above ~0.94, so
    # the relative-area constraint never rejects a completely visible module.
    mod_w_lo, mod_w_hi = int(0.63 * slot_w), int(0.65 * slot_w)
    mod_h_lo, mod_h_hi = int(0.79 * slot_h), int(0.81 * slot_h)
    if mod_w_lo <= 2 or mod_h_lo <= 2 or mod_w_hi + 2 * margin >= slot_w or mod_h_hi + 2 * margin >= slot_h:
        raise ValueError(f"infeasible layout for canvas {width}x{height} with margin {margin}")

    pix = np.full((height, width), float(bg_level))
    slots = np.arange(slots_per_side * slots_per_side)
    if border_module:
        # The border module straddles the middle of the left edge; keep the
        # middle-left slot free so it cannot merge with a real module.
        slots = slots[slots != slots_per_side]
        if n_modules > slots.size:
            raise ValueError("at most 8 interior modules with border_module=True")
    chosen = rng.choice(slots, size=n_modules, replace=False)
    gt = []
    for slot in chosen:
        sy, sx = divmod(int(slot), slots_per_side)
        w = int(rng.integers(mod_w_lo, mod_w_hi + 1))
        h = int(rng.integers(mod_h_lo, mod_h_hi + 1))
        x0 = sx * slot_w + int(rng.integers(margin, slot_w - w - margin + 1))
        y0 = sy * slot_h + int(rng.integers(margin, slot_h - h - margin + 1))
        box = BoundingBox(x0, y0, x0 + w, y0 + h)
        _draw_module(pix, rng, box, fg_level, gridlines, cell_rows, cell_cols)
        gt.append(box)
    if border_module:
        w = int(rng.integers(mod_w_lo, mod_w_hi + 1))
        h = int(rng.integers(mod_h_lo, mod_h_hi + 1))
        y0 = (height - h) // 2
        box = BoundingBox(0, y0, max(2, w // 2), y0 + h)  # clipped at the left edge
        _draw_module(pix, rng, box, fg_level, gridlines, cell_rows, cell_cols)
    if noise_sigma > 0:
        pix += rng.normal(0.0, noise_sigma, size=pix.shape)
    return Image16(np.clip(np.rint(pix), 0, 65535).astype(np.uint16)), gt


def load_boxes_json(path: str | Path) -> list[BoundingBox]:
    """Read `{"boxes": [[x0,y0,x1,y1], ...]}` annotations."""
    payload = json.loads(Path(path).read_text())
    return [BoundingBox(*map(int, b)) for b in payload["boxes"]]


def save_boxes_json(
    boxes: list[BoundingBox], path: str | Path, params: DetectionParams | None = None
) -> None:
    """Write boxes in the annotation schema; detections echo their params."""
    payload: dict = {"boxes": [b.as_list() for b in boxes]}
    if params is not None:
        payload["params"] = {"scale": params.scale, "min_area_ratio": params.min_area_ratio}
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")
