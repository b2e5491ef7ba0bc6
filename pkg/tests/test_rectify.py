import numpy as np
import pytest

from elpower.detect import BoundingBox
from elpower.imagecore import Image16
from elpower.rectify import (
    Homography,
    ModuleGeometry,
    Quad,
    estimate_corners,
    homography_dlt,
    rectify_module,
    warp,
)


def quad(pts):
    return Quad(np.asarray(pts, dtype=np.float64))


def random_quad(rng, lo=0.0, hi=100.0):
    """Convex quad built by jittering a rectangle's corners inward."""
    w = rng.uniform(30, hi - lo)
    h = rng.uniform(30, hi - lo)
    x0 = rng.uniform(lo, hi - w)
    y0 = rng.uniform(lo, hi - h)
    j = 0.2 * min(w, h)
    return quad(
        [
            [x0 + rng.uniform(0, j), y0 + rng.uniform(0, j)],
            [x0 + w - rng.uniform(0, j), y0 + rng.uniform(0, j)],
            [x0 + w - rng.uniform(0, j), y0 + h - rng.uniform(0, j)],
            [x0 + rng.uniform(0, j), y0 + h - rng.uniform(0, j)],
        ]
    )


UNIT_SQUARE = [[0, 0], [1, 0], [1, 1], [0, 1]]


class TestQuad:
    def test_rejects_collinear(self):
        with pytest.raises(ValueError):
            quad([[0, 0], [1, 0], [2, 0], [3, 0]])

    def test_rejects_nonconvex(self):
        with pytest.raises(ValueError):
            quad([[0, 0], [10, 0], [3, 3], [0, 10]])


class TestHomographyDlt:
    def test_identity(self):
        h = homography_dlt(quad(UNIT_SQUARE), quad(UNIT_SQUARE))
        assert np.allclose(h.matrix, np.eye(3), atol=1e-9)

    def test_pure_scale(self):
        h = homography_dlt(quad(UNIT_SQUARE), quad(np.asarray(UNIT_SQUARE) * 2.0))
        assert np.allclose(h.matrix, np.diag([2.0, 2.0, 1.0]), atol=1e-9)

    def test_random_pairs_reproject_below_1e6(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            src = random_quad(rng, 0, 2000)
            dst = random_quad(rng, 0, 2000)
            h = homography_dlt(src, dst)
            err = np.abs(h.apply(src.corners) - dst.corners).max()
            assert err < 1e-6

    def test_identity_for_every_quad(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            q = random_quad(rng)
            h = homography_dlt(q, q)
            assert np.allclose(h.matrix, np.eye(3), atol=1e-9)


class TestWarp:
    def test_identity_returns_input(self):
        rng = np.random.default_rng(2)
        img = Image16(rng.integers(0, 65536, size=(12, 17), dtype=np.uint16))
        out = warp(img, Homography(np.eye(3)), img.width, img.height)
        assert np.array_equal(out.pixels, img.pixels)

    def test_scale_of_constant_image(self):
        img = Image16(np.full((8, 8), 1234, dtype=np.uint16))
        out = warp(img, Homography(np.diag([2.0, 2.0, 1.0])), 14, 14)
        assert np.all(out.pixels == 1234)

    def test_round_trip_property(self):
        # Smooth image so interpolation error stays small away from borders.
        yy, xx = np.mgrid[0:64, 0:64]
        img = Image16(
            (20000 + 3000 * np.sin(xx / 16.0) * np.cos(yy / 19.0)).astype(np.uint16)
        )
        h = homography_dlt(
            quad([[0, 0], [63, 0], [63, 63], [0, 63]]),
            quad([[1.5, 0.7], [62.2, 1.1], [61.8, 62.4], [0.9, 61.7]]),
        )
        there = warp(img, h, 64, 64)
        back = warp(there, h.inverse(), 64, 64)
        inner = (slice(6, 58), slice(6, 58))
        dev = np.abs(back.pixels[inner].astype(float) - img.pixels[inner].astype(float))
        assert dev.mean() < 2.0

    def test_composition(self):
        yy, xx = np.mgrid[0:48, 0:48]
        img = Image16((30000 + 2500 * np.sin((xx + 2 * yy) / 24.0)).astype(np.uint16))
        g = Homography(np.array([[1.02, 0.01, 1.0], [0.0, 0.99, 2.0], [0.0, 0.0, 1.0]]))
        h = Homography(np.array([[0.98, 0.0, -1.5], [0.015, 1.01, 0.5], [0.0, 0.0, 1.0]]))
        two_step = warp(warp(img, h, 48, 48), g, 48, 48)
        one_step = warp(img, Homography(g.matrix @ h.matrix), 48, 48)
        inner = (slice(6, 42), slice(6, 42))
        dev = np.abs(two_step.pixels[inner].astype(float) - one_step.pixels[inner].astype(float))
        assert dev.mean() < 2.0


def paint_module(canvas_h, canvas_w, x0, y0, w, h, level=30000):
    pix = np.full((canvas_h, canvas_w), 500, dtype=np.uint16)
    pix[y0 : y0 + h, x0 : x0 + w] = level
    return Image16(pix)


class TestEstimateCorners:
    def test_axis_aligned_rectangle_exact(self):
        img = paint_module(50, 40, 7, 5, 20, 35)
        q = estimate_corners(img)
        assert np.array_equal(q.corners, [[7, 5], [26, 5], [26, 39], [7, 39]])

    def test_rotated_rectangle_within_2px(self):
        # Render a 10-degree rotated rectangle by inverse-warping a canonical one.
        w, h = 120, 180
        canonical = paint_module(h + 80, w + 80, 40, 40, w, h)
        theta = np.deg2rad(10)
        cx, cy = (w + 80) / 2, (h + 80) / 2
        rot = np.array(
            [
                [np.cos(theta), -np.sin(theta), cx - np.cos(theta) * cx + np.sin(theta) * cy],
                [np.sin(theta), np.cos(theta), cy - np.sin(theta) * cx - np.cos(theta) * cy],
                [0, 0, 1],
            ]
        )
        hg = Homography(rot)
        rotated = warp(canonical, hg, w + 80, h + 80)
        expected = hg.apply(np.array([[40, 40], [159, 40], [159, 219], [40, 219]], dtype=float))
        q = estimate_corners(rotated)
        assert np.abs(q.corners - expected).max() <= 2.0

    def test_all_background(self):
        with pytest.raises(ValueError):
            estimate_corners(Image16(np.zeros((10, 10), dtype=np.uint16)))


class TestRectifyModule:
    def test_fronto_parallel_near_identity(self):
        cfg = ModuleGeometry(rows=5, cols=3, cell_px=20)
        # Module exactly canonical-sized inside a margin.
        img = paint_module(140, 100, 20, 20, cfg.out_width, cfg.out_height)
        out = rectify_module(img, BoundingBox(10, 10, 95, 135), cfg)
        assert out.image.width == cfg.out_width and out.image.height == cfg.out_height
        crop = img.pixels[20 : 20 + cfg.out_height, 20 : 20 + cfg.out_width]
        dev = np.abs(out.image.pixels.astype(float) - crop.astype(float))
        assert dev.mean() < 2.0

    def test_known_projective_distortion(self):
        cfg = ModuleGeometry(rows=6, cols=4, cell_px=25)
        w, h = cfg.out_width, cfg.out_height
        # Canonical module with dark grid lines at cell boundaries.
        pix = np.full((h + 60, w + 60), 500, dtype=np.uint16)
        pix[30 : 30 + h, 30 : 30 + w] = 30000
        for r in range(1, cfg.rows):
            pix[30 + r * cfg.cell_px, 30 : 30 + w] = 18000
        for c in range(1, cfg.cols):
            pix[30 : 30 + h, 30 + c * cfg.cell_px] = 18000
        flat = Image16(pix)
        corners = np.array(
            [[30, 30], [30 + w - 1, 30], [30 + w - 1, 30 + h - 1], [30, 30 + h - 1]], float
        )
        skewed = np.array(
            [[37, 34], [30 + w - 3, 31], [30 + w - 6, 30 + h - 2], [33, 30 + h - 8]], float
        )
        hg = homography_dlt(Quad(corners), Quad(skewed))
        distorted = warp(flat, hg, w + 60, h + 60)
        out = rectify_module(
            distorted, BoundingBox(0, 0, distorted.width, distorted.height), cfg
        )
        # Grid lines must land within 2 px of canonical positions: scan for
        # dark rows/cols near each expected boundary.
        for r in range(1, cfg.rows):
            band = out.image.pixels[r * cfg.cell_px - 2 : r * cfg.cell_px + 3, 10 : w - 10]
            assert band.min() < 24000
        for c in range(1, cfg.cols):
            band = out.image.pixels[10 : h - 10, c * cfg.cell_px - 2 : c * cfg.cell_px + 3]
            assert band.min() < 24000

    def test_paper_geometry_output_size(self):
        cfg = ModuleGeometry(rows=10, cols=6, cell_px=100)
        img = paint_module(1200, 800, 60, 80, 620, 1020)
        out = rectify_module(img, BoundingBox(40, 60, 720, 1140), cfg)
        assert (out.image.width, out.image.height) == (600, 1000)

    def test_orientation_rule_landscape_input(self):
        cfg = ModuleGeometry(rows=5, cols=3, cell_px=20)
        # Landscape module (wide) must still map onto the portrait canvas.
        img = paint_module(90, 140, 15, 20, 100, 60)
        out = rectify_module(img, BoundingBox(5, 10, 130, 85), cfg)
        assert out.image.height == cfg.out_height > out.image.width

    def test_deterministic(self):
        cfg = ModuleGeometry(rows=4, cols=3, cell_px=15)
        img = paint_module(120, 100, 25, 30, 45, 60)
        box = BoundingBox(20, 25, 80, 100)
        a = rectify_module(img, box, cfg)
        b = rectify_module(img, box, cfg)
        assert np.array_equal(a.image.pixels, b.image.pixels)

    def test_box_outside_image(self):
        cfg = ModuleGeometry()
        img = paint_module(50, 50, 10, 10, 20, 20)
        with pytest.raises(ValueError):
            rectify_module(img, BoundingBox(0, 0, 60, 50), cfg)
