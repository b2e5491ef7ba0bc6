"""Perspective rectification of detected module crops.

A module crop is binarized, the four extremal corners of its largest
component are located, and a homography maps them onto a canonical
fronto-parallel rectangle sized by the module's cell grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect import BinaryMask, BoundingBox, connected_components, otsu_threshold
from .imagecore import Image16

__all__ = [
    "Quad",
    "Homography",
    "ModuleGeometry",
    "ModuleImage",
    "estimate_corners",
    "homography_dlt",
    "warp",
    "rectify_module",
]


@dataclass(frozen=True)
class Quad:
    """Four (x, y) corners ordered top-left, top-right, bottom-right, bottom-left."""

    corners: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise ValueError(f"expected 4 corner points, got shape {c.shape}")
        # Convexity and consistent winding: cross products of consecutive
        # edges must all share one sign.
        crosses = []
        for i in range(4):
            a = c[(i + 1) % 4] - c[i]
            b = c[(i + 2) % 4] - c[(i + 1) % 4]
            crosses.append(a[0] * b[1] - a[1] * b[0])
        crosses = np.asarray(crosses)
        if np.any(crosses == 0) or not (np.all(crosses > 0) or np.all(crosses < 0)):
            raise ValueError("corners must form a convex quadrilateral with positive area")
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so that H[2, 2] == 1 when nonzero."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
        if m[2, 2] != 0:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValueError("homography is not invertible")
        object.__setattr__(self, "matrix", m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (n, 2) array of (x, y) points."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        h = (self.matrix @ np.hstack([pts, ones]).T).T
        return h[:, :2] / h[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


@dataclass(frozen=True)
class ModuleGeometry:
    """Cell-grid shape of a module type plus the canonical cell edge in pixels."""

    rows: int = 10
    cols: int = 6
    cell_px: int = 100

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.cell_px < 2:
            raise ValueError("invalid module geometry")

    @property
    def out_width(self) -> int:
        return self.cols * self.cell_px

    @property
    def out_height(self) -> int:
        return self.rows * self.cell_px


@dataclass(frozen=True)
class ModuleImage:
    """Rectified single-module measurement with its cell-grid shape."""

    image: Image16
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("cell grid must be at least 1x1")
        aspect = self.image.width / self.image.height
        target = self.cols / self.rows
        if abs(aspect - target) > 0.01 * target:
            raise ValueError(
                f"image aspect {aspect:.4f} does not match cell grid {self.cols}/{self.rows}"
            )


def estimate_corners(crop: Image16) -> Quad:
    """Locate the module corners in a crop holding one dominant module.

    The crop is Otsu-binarized, the largest component kept, and its four
    extremal pixels (maximizing -x-y, x-y, x+y and -x+y) taken as the
    top-left, top-right, bottom-right and bottom-left corners.
    """
    t = otsu_threshold(crop)
    mask = BinaryMask(crop.pixels > t)
    labels, count = connected_components(mask)
    if count == 0:
        raise ValueError("no foreground component in crop")
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    largest = int(np.argmax(sizes[1:])) + 1
    ys, xs = np.nonzero(labels == largest)
    s = xs + ys
    d = xs - ys
    idx = (np.argmin(s), np.argmax(d), np.argmax(s), np.argmin(d))
    corners = np.array([[xs[i], ys[i]] for i in idx], dtype=np.float64)
    return Quad(corners)  # raises for degenerate (collinear) corner sets


def homography_dlt(src: Quad, dst: Quad) -> Homography:
    """Direct linear transform from four point correspondences.

    Each correspondence contributes two rows of the 8x9 system A h = 0;
    the solution is the nullspace vector from the SVD. Points are
    Hartley-normalized first so the result stays accurate for coordinates
    in the thousands of pixels.
    """

    def normalizer(pts: np.ndarray) -> np.ndarray:
        centroid = pts.mean(axis=0)
        rms = np.sqrt(((pts - centroid) ** 2).sum(axis=1).mean())
        s = np.sqrt(2.0) / rms if rms > 0 else 1.0
        return np.array(
            [[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1]]
        )

    ts = normalizer(src.corners)
    td = normalizer(dst.corners)
    sp = (ts @ np.hstack([src.corners, np.ones((4, 1))]).T).T
    dp = (td @ np.hstack([dst.corners, np.ones((4, 1))]).T).T

    a = []
    for (x, y, _), (u, v, _) in zip(sp, dp):
        a.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        a.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(np.asarray(a))
    if sv[-1] < 1e-10:
        raise ValueError("rank-deficient correspondences (collinear points)")
    hn = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(td) @ hn @ ts)


def warp(img: Image16, h: Homography, out_w: int, out_h: int) -> Image16:
    """Inverse-mapping warp with bilinear interpolation; outside samples are 0."""
    hinv = h.inverse().matrix
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    src = img.pixels.astype(np.float64)
    out = np.zeros((out_h, out_w))
    # Small tolerance so points mapped exactly onto the source border are
    # not lost to floating-point round-off.
    eps = 1e-6
    valid = (sx >= -eps) & (sx <= img.width - 1 + eps) & (sy >= -eps) & (sy <= img.height - 1 + eps)
    x0c = np.clip(x0, 0, img.width - 1)
    y0c = np.clip(y0, 0, img.height - 1)
    x1c = np.clip(x0 + 1, 0, img.width - 1)
    y1c = np.clip(y0 + 1, 0, img.height - 1)
    interp = (
        src[y0c, x0c] * (1 - fx) * (1 - fy)
        + src[y0c, x1c] * fx * (1 - fy)
        + src[y1c, x0c] * (1 - fx) * fy
        + src[y1c, x1c] * fx * fy
    )
    out[valid] = interp[valid]
    return Image16(np.floor(out + 0.5).astype(np.uint16))


def _canonical_quad(w: int, h: int) -> Quad:
    return Quad(np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64))


def rectify_module(img: Image16, box: BoundingBox, cfg: ModuleGeometry) -> ModuleImage:
    """Crop a detected module and warp it onto the canonical cell grid.

    When the located quad is landscape but the canonical grid is portrait
    (or vice versa), the correspondence is rotated by one corner so the
    long module axis always maps to the long canvas axis.
    """
    if box.x0 < 0 or box.y0 < 0 or box.x1 > img.width or box.y1 > img.height:
        raise ValueError("box extends outside the image")
    crop = Image16(img.pixels[box.y0 : box.y1, box.x0 : box.x1].copy())
    quad = estimate_corners(crop)
    c = quad.corners
    src_w = 0.5 * (np.linalg.norm(c[1] - c[0]) + np.linalg.norm(c[2] - c[3]))
    src_h = 0.5 * (np.linalg.norm(c[3] - c[0]) + np.linalg.norm(c[2] - c[1]))
    dst_landscape = cfg.out_width >= cfg.out_height
    if (src_w >= src_h) != dst_landscape:
        c = np.roll(c, -1, axis=0)
    h = homography_dlt(Quad(c), _canonical_quad(cfg.out_width, cfg.out_height))
    warped = warp(crop, h, cfg.out_width, cfg.out_height)
    return ModuleImage(image=warped, rows=cfg.rows, cols=cfg.cols)
