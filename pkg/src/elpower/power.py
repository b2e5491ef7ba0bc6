"""Power bookkeeping, inactive-area estimation and per-cell loss attribution.

A LossMap holds nonpositive per-pixel relative-power losses; summing it and
adding one recovers the module's relative power. Cell-level losses come from
integrating the map over the cell grid and converting to watts-peak with the
nominal power.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect import otsu_threshold
from .imagecore import Image16
from .rectify import ModuleImage

__all__ = [
    "PowerEstimate",
    "LossMap",
    "CellGrid",
    "AreaModel",
    "to_watts",
    "inactive_fraction",
    "fit_area_model",
    "predict_area_model",
    "total_loss_from_map",
    "debias_maps",
    "cell_losses",
    "save_loss_map",
    "load_loss_map",
    "synth_loss_map",
    "synth_module",
]

PLM_MAGIC = b"PLM1"
NONPOS_TOL = 1e-9
PREDICTION_CAP = 1.1


@dataclass(frozen=True)
class PowerEstimate:
    """Relative and absolute power estimate tied to a nominal power."""

    p_rel_hat: float
    p_nom: float

    def __post_init__(self):
        if self.p_nom <= 0:
            raise ValueError("p_nom must be positive")

    @property
    def p_mpp_hat(self) -> float:
        return self.p_rel_hat * self.p_nom


def to_watts(p_rel_hat: float, p_nom: float) -> float:
    """Absolute power from relative power and nameplate power."""
    if p_nom <= 0:
        raise ValueError("p_nom must be positive")
    return p_rel_hat * p_nom


@dataclass(frozen=True)
class LossMap:
    """Per-pixel relative power loss; entries must not exceed +1e-9."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.size == 0:
            raise ValueError("loss map must be a non-empty 2-d array")
        if not np.all(np.isfinite(d)):
            raise ValueError("loss map contains non-finite values")
        if d.max() > NONPOS_TOL:
            raise ValueError(f"loss map has positive entry {d.max()}")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class CellGrid:
    """Cell layout over a map; remainder pixels go to the last row/column."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must be at least 1x1")

    def cell_slices(self, height: int, width: int) -> list[list[tuple[slice, slice]]]:
        if height < self.rows or width < self.cols:
            raise ValueError(f"{height}x{width} map cannot host a {self.rows}x{self.cols} grid")
        ch = height // self.rows
        cw = width // self.cols
        out = []
        for r in range(self.rows):
            row = []
            y1 = (r + 1) * ch if r < self.rows - 1 else height
            for c in range(self.cols):
                x1 = (c + 1) * cw if c < self.cols - 1 else width
                row.append((slice(r * ch, y1), slice(c * cw, x1)))
            out.append(row)
        return out


@dataclass(frozen=True)
class AreaModel:
    """Linear relative-power model: p_rel ~= intercept - slope * inactive_fraction."""

    slope: float
    intercept: float

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("slope must be nonnegative")


def inactive_fraction(
    m: ModuleImage, method: str = "otsu", threshold: int | None = None
) -> float:
    """Fraction of module pixels at or below the inactivity threshold.

    method="otsu" derives the threshold from the module itself;
    method="fixed" uses the supplied count threshold.
    """
    if method == "otsu":
        t = otsu_threshold(m.image)
    elif method == "fixed":
        if threshold is None:
            raise ValueError("fixed method needs a threshold")
        t = int(threshold)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float((m.image.pixels <= t).mean())


def fit_area_model(fractions, p_rel, intercept: float | None = None) -> AreaModel:
    """Least-squares fit of p_rel against inactive-area fraction.

    Fits a free intercept by default; pass intercept to pin it (for example
    to 1.0). A positive fitted trend is clamped to slope 0: more inactive
    area never predicts more power.
    """
    f = np.asarray(fractions, dtype=np.float64)
    p = np.asarray(p_rel, dtype=np.float64)
    if f.shape != p.shape or f.ndim != 1 or f.size < 2:
        raise ValueError("need matching 1-d arrays with at least 2 samples")
    if np.ptp(f) == 0:
        raise ValueError("constant fractions make the fit singular")
    if intercept is None:
        slope_ls, icpt = np.polyfit(f, p, 1)
        k = -float(slope_ls)
        if k < 0:
            return AreaModel(slope=0.0, intercept=float(p.mean()))
        return AreaModel(slope=k, intercept=float(icpt))
    k = float((f * (intercept - p)).sum() / (f * f).sum())
    return AreaModel(slope=max(k, 0.0), intercept=float(intercept))


def predict_area_model(m: AreaModel, fraction: float) -> float:
    """Predicted relative power, clamped to the physically plausible range."""
    return float(np.clip(m.intercept - m.slope * fraction, 0.0, PREDICTION_CAP))


def total_loss_from_map(lm: LossMap) -> float:
    """Relative power implied by a loss map: 1 + sum of all entries."""
    if lm.data.max() > NONPOS_TOL:
        raise ValueError("corrupt map: positive entries")
    return float(1.0 + lm.data.sum())


def debias_maps(maps: list[LossMap], healthy_maps: list[LossMap]) -> list[LossMap]:
    """Subtract the per-pixel median of healthy-module maps, re-clamped to <= 0."""
    if not healthy_maps:
        raise ValueError("need at least one healthy map")
    shape = healthy_maps[0].data.shape
    for lm in list(maps) + list(healthy_maps):
        if lm.data.shape != shape:
            raise ValueError(f"dimension mismatch: {lm.data.shape} vs {shape}")
    med = np.median(np.stack([h.data for h in healthy_maps]), axis=0)
    return [LossMap(np.minimum(lm.data - med, 0.0)) for lm in maps]


def cell_losses(lm: LossMap, grid: CellGrid, p_nom: float) -> np.ndarray:
    """Per-cell absolute power loss in watts-peak (nonnegative, rows x cols)."""
    if p_nom <= 0:
        raise ValueError("p_nom must be positive")
    slices = grid.cell_slices(lm.height, lm.width)
    out = np.zeros((grid.rows, grid.cols))
    for r in range(grid.rows):
        for c in range(grid.cols):
            ys, xs = slices[r][c]
            out[r, c] = -lm.data[ys, xs].sum() * p_nom + 0.0  # +0.0 folds -0.0 away
    return out


def save_loss_map(lm: LossMap, path: str | Path) -> None:
    """PLM file: magic, u32le width/height, then float64le row-major values."""
    with open(path, "wb") as f:
        f.write(PLM_MAGIC)
        f.write(struct.pack("<II", lm.width, lm.height))
        f.write(lm.data.astype("<f8").tobytes())


def load_loss_map(path: str | Path) -> LossMap:
    raw = Path(path).read_bytes()
    if raw[:4] != PLM_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise ValueError(f"{path}: truncated header")
    width, height = struct.unpack("<II", raw[4:12])
    if width == 0 or height == 0 or width * height > 2**28:
        raise ValueError(f"{path}: implausible dimensions {width}x{height}")
    expected = 12 + width * height * 8
    if len(raw) < expected:
        raise ValueError(f"{path}: truncated payload ({len(raw)} of {expected} bytes)")
    data = np.frombuffer(raw[12:expected], dtype="<f8").reshape(height, width)
    return LossMap(data.copy())


def synth_loss_map(m: ModuleImage, area_model: AreaModel, method: str = "otsu",
                   threshold: int | None = None) -> LossMap:
    """Loss map from the thresholding estimator: inactive pixels share the loss.

    The map totals predict_area_model(fraction) - 1 (capped at zero loss), so
    per-cell attribution can run without a learned model. With no inactive
    pixels the map is identically zero.
    """
    if method == "otsu":
        t = otsu_threshold(m.image)
    elif method == "fixed":
        if threshold is None:
            raise ValueError("fixed method needs a threshold")
        t = int(threshold)
    else:
        raise ValueError(f"unknown method {method!r}")
    inactive = m.image.pixels <= t
    n_inactive = int(inactive.sum())
    data = np.zeros(m.image.pixels.shape)
    if n_inactive:
        fraction = n_inactive / inactive.size
        total = min(predict_area_model(area_model, fraction), 1.0) - 1.0
        data[inactive] = total / n_inactive
    return LossMap(data)


def synth_module(
    rows: int = 10,
    cols: int = 6,
    cell_px: int = 12,
    fraction: float = 0.0,
    *,
    active_level: int = 30000,
    inactive_level: int = 600,
    noise_sigma: float = 60.0,
    placement: str = "corner",
    seed: int = 0,
) -> tuple[ModuleImage, np.ndarray]:
    """Deterministic rectified-module image with a pixel-exact inactive region.

    placement="corner" grows the inactive region from the bottom-right
    corner; placement="center" fills the centered half-size window instead
    (fraction <= 0.25), keeping the module outline intact for corner-based
    rectification. The planted fraction is exact to the pixel. Returns the
    module image and the boolean inactive mask.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    h, w = rows * cell_px, cols * cell_px
    pix = np.full((h, w), float(active_level))
    gains = rng.uniform(0.95, 1.05, size=(rows, cols))
    for r in range(rows):
        for c in range(cols):
            pix[r * cell_px : (r + 1) * cell_px, c * cell_px : (c + 1) * cell_px] *= gains[r, c]
    n_inactive = round(fraction * h * w)
    mask = np.zeros((h, w), dtype=bool)
    if n_inactive:
        if placement == "corner":
            mask.reshape(-1)[h * w - n_inactive :] = True
        elif placement == "center":
            window = np.zeros((h, w), dtype=bool)
            window[h // 4 : h // 4 + h // 2, w // 4 : w // 4 + w // 2] = True
            idx = np.flatnonzero(window.reshape(-1))
            if n_inactive > idx.size:
                raise ValueError("center placement supports fractions up to 0.25")
            mask.reshape(-1)[idx[:n_inactive]] = True
        else:
            raise ValueError(f"unknown placement {placement!r}")
        pix[mask] = inactive_level
    if noise_sigma > 0:
        pix += rng.normal(0.0, noise_sigma, size=pix.shape)
    img = Image16(np.clip(np.rint(pix), 0, 65535).astype(np.uint16))
    return ModuleImage(image=img, rows=rows, cols=cols), mask
