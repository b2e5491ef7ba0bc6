import numpy as np
import pytest

from elpower.power import (
    AreaModel,
    CellGrid,
    LossMap,
    PowerEstimate,
    cell_losses,
    debias_maps,
    fit_area_model,
    inactive_fraction,
    load_loss_map,
    predict_area_model,
    save_loss_map,
    synth_loss_map,
    synth_module,
    to_watts,
    total_loss_from_map,
)


def loss_map(arr):
    return LossMap(np.asarray(arr, dtype=np.float64))


def random_loss_map(rng, h=None, w=None):
    h = h or int(rng.integers(4, 40))
    w = w or int(rng.integers(4, 40))
    return LossMap(-rng.random(size=(h, w)) * 1e-4)


class TestToWatts:
    def test_identity_at_nominal(self):
        assert to_watts(1.0, 230.0) == 230.0

    def test_ninety_percent(self):
        assert to_watts(0.9, 230.0) == pytest.approx(207.0)

    def test_zero(self):
        assert to_watts(0.0, 175.0) == 0.0

    def test_nonpositive_nominal(self):
        with pytest.raises(ValueError):
            to_watts(1.0, 0.0)

    def test_estimate_bookkeeping_exact(self):
        e = PowerEstimate(p_rel_hat=0.8649, p_nom=230.0)
        assert e.p_mpp_hat == e.p_rel_hat * 230.0  # bitwise, derived not stored


class TestInactiveFraction:
    def test_fully_bright_fixed_threshold(self):
        m, _ = synth_module(5, 3, 8, fraction=0.0, seed=1)
        assert inactive_fraction(m, method="fixed", threshold=5000) == 0.0

    def test_fully_dark_fixed_threshold(self):
        m, _ = synth_module(5, 3, 8, fraction=1.0, seed=2)
        assert inactive_fraction(m, method="fixed", threshold=5000) == 1.0

    def test_planted_ten_percent_otsu(self):
        m, mask = synth_module(10, 6, 10, fraction=0.10, seed=3)
        assert mask.mean() == pytest.approx(0.10, abs=1e-9)
        assert inactive_fraction(m, method="otsu") == pytest.approx(0.10, abs=0.005)

    def test_constant_image_under_otsu(self):
        m, _ = synth_module(4, 2, 6, fraction=0.0, noise_sigma=0.0, seed=0)
        flat = synth_module(4, 2, 6, fraction=1.0, noise_sigma=0.0, seed=0)[0]
        with pytest.raises(ValueError):
            inactive_fraction(flat, method="otsu")
        assert inactive_fraction(m, method="fixed", threshold=100) == 0.0

    def test_unknown_method(self):
        m, _ = synth_module(4, 2, 6, seed=0)
        with pytest.raises(ValueError):
            inactive_fraction(m, method="quantile")


class TestAreaModel:
    def test_exact_linear_recovery(self):
        f = np.linspace(0.0, 0.5, 20)
        p = 1.0 - f
        m = fit_area_model(f, p)
        assert m.slope == pytest.approx(1.0, abs=1e-9)
        assert m.intercept == pytest.approx(1.0, abs=1e-9)
        assert predict_area_model(m, 0.0) == pytest.approx(1.0)

    def test_noisy_recovery_within_three_se(self):
        rng = np.random.default_rng(0)
        hits = 0
        for trial in range(20):
            f = rng.uniform(0.0, 0.5, size=60)
            noise = rng.normal(0, 0.02, size=60)
            m = fit_area_model(f, 1.0 - 1.3 * f + noise)
            # Standard error of the OLS slope with known sigma.
            se = 0.02 / np.sqrt(((f - f.mean()) ** 2).sum())
            if abs(m.slope - 1.3) <= 3 * se:
                hits += 1
        assert hits >= 18  # 3-sigma misses should be rare

    def test_positive_trend_clamped(self):
        f = np.array([0.0, 0.1, 0.2, 0.3])
        p = np.array([0.5, 0.6, 0.7, 0.8])  # power rising with inactive area
        m = fit_area_model(f, p)
        assert m.slope == 0.0
        assert predict_area_model(m, 0.0) == predict_area_model(m, 0.3)

    def test_fixed_intercept(self):
        f = np.linspace(0.01, 0.4, 15)
        m = fit_area_model(f, 1.0 - 0.8 * f, intercept=1.0)
        assert m.intercept == 1.0
        assert m.slope == pytest.approx(0.8, abs=1e-9)

    def test_constant_fractions_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            fit_area_model([0.1, 0.1, 0.1], [0.9, 0.8, 0.7])

    def test_prediction_clamped(self):
        m = AreaModel(slope=3.0, intercept=1.2)
        assert predict_area_model(m, 0.0) == 1.1
        assert predict_area_model(m, 1.0) == 0.0


class TestLossMapArithmetic:
    def test_zero_map_is_healthy(self):
        assert total_loss_from_map(loss_map(np.zeros((5, 4)))) == 1.0

    def test_direct_sum(self):
        data = np.zeros((10, 10))
        data[2, 3] = -0.04
        data[7, 7] = -0.06
        assert total_loss_from_map(loss_map(data)) == pytest.approx(0.9)

    def test_positive_entries_rejected(self):
        with pytest.raises(ValueError):
            loss_map([[0.1, 0.0], [0.0, 0.0]])

    def test_conservation_with_cells(self):
        rng = np.random.default_rng(55)
        for _ in range(20):
            lm = random_loss_map(rng)
            grid = CellGrid(int(rng.integers(1, 7)), int(rng.integers(1, 7)))
            if lm.height < grid.rows or lm.width < grid.cols:
                continue
            rel = cell_losses(lm, grid, p_nom=1.0)
            assert rel.sum() == pytest.approx(1.0 - total_loss_from_map(lm), abs=1e-12)


class TestCellLosses:
    def test_zero_map(self):
        out = cell_losses(loss_map(np.zeros((100, 60))), CellGrid(10, 6), 230.0)
        assert out.shape == (10, 6)
        assert np.all(out == 0.0)

    def test_uniform_split(self):
        data = np.full((100, 60), -0.06 / 6000.0)
        out = cell_losses(loss_map(data), CellGrid(10, 6), 230.0)
        assert np.allclose(out, 0.23, atol=1e-9)

    def test_concentrated_loss(self):
        data = np.zeros((80, 48))
        data[4:8, 4:8] = -0.002  # inside cell (0, 0)
        out = cell_losses(loss_map(data), CellGrid(10, 6), 230.0)
        assert out[0, 0] >= 0.99 * out.sum()

    def test_remainder_pixels_to_last_row_col(self):
        data = np.zeros((7, 5))
        data[6, 4] = -0.01  # remainder corner
        out = cell_losses(loss_map(data), CellGrid(3, 2), 100.0)
        assert out[2, 1] == pytest.approx(1.0)
        assert out.sum() == pytest.approx(1.0)

    def test_grid_too_large(self):
        with pytest.raises(ValueError):
            cell_losses(loss_map(np.zeros((3, 3))), CellGrid(5, 5), 100.0)


class TestDebias:
    def test_constant_bias_removed(self):
        healthy = [loss_map(np.full((4, 4), -0.001)) for _ in range(3)]
        out = debias_maps(healthy, healthy)
        for lm in out:
            assert np.all(lm.data == 0.0)

    def test_single_healthy_map_is_its_own_median(self):
        h = loss_map(-np.ones((3, 3)) * 0.002)
        (out,) = debias_maps([h], [h])
        assert np.all(out.data == 0.0)

    def test_idempotent_with_debiased_healthy(self):
        rng = np.random.default_rng(99)
        healthy = [random_loss_map(rng, 6, 6) for _ in range(5)]  # odd count
        maps = [random_loss_map(rng, 6, 6) for _ in range(4)]
        once = debias_maps(maps, healthy)
        healthy_db = debias_maps(healthy, healthy)
        twice = debias_maps(once, healthy_db)
        for a, b in zip(once, twice):
            assert np.array_equal(a.data, b.data)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            debias_maps([loss_map(np.zeros((2, 2)))], [loss_map(np.zeros((3, 3)))])

    def test_nonpositive_after_debias(self):
        rng = np.random.default_rng(31)
        healthy = [random_loss_map(rng, 5, 5) for _ in range(4)]
        maps = [random_loss_map(rng, 5, 5) for _ in range(6)]
        for lm in debias_maps(maps, healthy):
            assert lm.data.max() <= 1e-9


class TestPlmFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(13)
        for k in range(5):
            lm = random_loss_map(rng)
            p = tmp_path / f"m{k}.plm"
            save_loss_map(lm, p)
            back = load_loss_map(p)
            assert back.data.tobytes() == lm.data.tobytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.plm"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_loss_map(p)

    def test_truncated(self, tmp_path):
        lm = loss_map(np.zeros((4, 4)))
        p = tmp_path / "t.plm"
        save_loss_map(lm, p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_loss_map(p)

    def test_implausible_dimensions(self, tmp_path):
        p = tmp_path / "d.plm"
        p.write_bytes(b"PLM1" + (2**31 - 1).to_bytes(4, "little") * 2)
        with pytest.raises(ValueError, match="implausible"):
            load_loss_map(p)


class TestSynthLossMap:
    def test_no_inactive_pixels_zero_map(self):
        m, _ = synth_module(5, 3, 8, fraction=0.0, seed=4)
        model = AreaModel(slope=1.0, intercept=1.0)
        lm = synth_loss_map(m, model, method="fixed", threshold=5000)
        assert np.all(lm.data == 0.0)

    def test_ten_percent_sums_to_prediction(self):
        m, _ = synth_module(10, 6, 10, fraction=0.10, seed=5)
        model = AreaModel(slope=1.0, intercept=1.0)
        lm = synth_loss_map(m, model, method="fixed", threshold=5000)
        assert total_loss_from_map(lm) == pytest.approx(0.90, abs=1e-12)

    def test_closure_property(self):
        model = AreaModel(slope=0.85, intercept=0.99)
        for frac, seed in [(0.05, 1), (0.21, 2), (0.4, 3)]:
            m, _ = synth_module(8, 4, 9, fraction=frac, seed=seed)
            lm = synth_loss_map(m, model, method="fixed", threshold=5000)
            measured = inactive_fraction(m, method="fixed", threshold=5000)
            assert total_loss_from_map(lm) == pytest.approx(
                predict_area_model(model, measured), abs=1e-12
            )


class TestSynthModule:
    def test_deterministic(self):
        a, _ = synth_module(6, 4, 8, fraction=0.2, seed=9)
        b, _ = synth_module(6, 4, 8, fraction=0.2, seed=9)
        assert np.array_equal(a.image.pixels, b.image.pixels)

    def test_exact_fraction(self):
        for frac in (0.0, 0.07, 0.33, 1.0):
            m, mask = synth_module(10, 6, 10, fraction=frac, seed=2)
            assert mask.sum() == round(frac * m.image.pixels.size)
