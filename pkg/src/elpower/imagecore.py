"""16-bit image containers, PGM I/O, box-filter downscaling and global normalization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import sparse

__all__ = [
    "Image16",
    "NormalizedImage",
    "GlobalStats",
    "load_pgm16",
    "save_pgm16",
    "downscale",
    "normalize_global",
    "compute_global_stats",
]


@dataclass(frozen=True)
class Image16:
    """A single-channel 16-bit measurement, pixels[row, col] as uint16."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise ValueError(f"expected 2-d pixel array, got shape {p.shape}")
        if p.dtype != np.uint16:
            raise ValueError(f"expected uint16 pixels, got {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class NormalizedImage:
    """Zero-mean/unit-variance view of a measurement, float64 per pixel."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected non-empty 2-d array, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("normalized image contains non-finite values")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class GlobalStats:
    """Pooled photon-count mean and standard deviation of a corpus."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


_PGM_HEADER = re.compile(rb"^P5\s+(?:#.*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def load_pgm16(path: str | Path) -> Image16:
    """Read a binary 16-bit PGM (type P5, big-endian samples)."""
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval <= 255:
        raise ValueError(f"{path}: unsupported bit depth (maxval {maxval}, need 16-bit)")
    if maxval > 65535:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    payload = raw[m.end():]
    expected = width * height * 2
    if len(payload) < expected:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    data = np.frombuffer(payload[:expected], dtype=">u2").astype(np.uint16)
    return Image16(data.reshape(height, width))


def save_pgm16(img: Image16, path: str | Path) -> None:
    """Write an Image16 as binary PGM with maxval 65535 and canonical header."""
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.astype(">u2").tobytes())


@lru_cache(maxsize=64)
def _box_weights(n_in: int, n_out: int) -> sparse.csr_matrix:
    """Sparse (n_out, n_in) matrix whose rows average each output pixel's footprint."""
    ratio = n_in / n_out
    rows, cols, vals = [], [], []
    for j in range(n_out):
        lo = j * ratio
        hi = (j + 1) * ratio
        first = int(np.floor(lo))
        last = min(int(np.ceil(hi)), n_in)
        w = np.minimum(np.arange(first, last) + 1.0, hi) - np.maximum(np.arange(first, last), lo)
        w = w / w.sum()
        rows.extend([j] * (last - first))
        cols.extend(range(first, last))
        vals.extend(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n_out, n_in))


def downscale(img: Image16, scale: float) -> Image16:
    """Area-average (box filter) downscale; output dims are floor(scale * dim).

    Averaged intensities are quantized back to uint16 with round-half-up,
    so constant images survive any valid scale unchanged. An axis that
    would collapse below one pixel is clamped to a single pixel.
    """
    if not (0.0 < scale <= 1.0):
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    out_h = max(1, int(np.floor(scale * img.height)))
    out_w = max(1, int(np.floor(scale * img.width)))
    if out_h == img.height and out_w == img.width:
        return Image16(img.pixels.copy())
    wr = _box_weights(img.height, out_h)
    wc = _box_weights(img.width, out_w)
    avg = wr @ img.pixels.astype(np.float64) @ wc.T
    return Image16(np.floor(avg + 0.5).astype(np.uint16))


def normalize_global(img: Image16, stats: GlobalStats) -> NormalizedImage:
    """Standardize a measurement with corpus-level statistics: (x - mu) / sigma."""
    if not (stats.sigma > 0):
        raise ValueError("sigma must be positive")
    return NormalizedImage((img.pixels.astype(np.float64) - stats.mu) / stats.sigma)


def compute_global_stats(images: list[Image16]) -> GlobalStats:
    """Pooled pixel mean and population standard deviation over a corpus.

    Accumulates integer sums exactly, so the result does not drift with
    corpus size or image order.
    """
    if not images:
        raise ValueError("need at least one image")
    n = 0
    s1 = 0
    s2 = 0
    for img in images:
        p = img.pixels.astype(np.uint64)
        n += p.size
        s1 += int(p.sum())
        s2 += int((p * p).sum())
    var_num = n * s2 - s1 * s1  # n^2 * population variance, exact
    if var_num == 0:
        raise ValueError("constant corpus: pooled standard deviation is zero")
    mu = s1 / n
    sigma = float(np.sqrt(var_num)) / n
    return GlobalStats(mu=mu, sigma=sigma)
