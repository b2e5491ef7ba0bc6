import numpy as np
import pytest

from elpower.imagecore import Image16
from elpower.rectify import ModuleImage
from elpower.regress import (
    FeatureNormalizer,
    SvrModel,
    apply_normalizer,
    extract_mean_std,
    fit_normalizer,
    load_features_csv,
    load_svr_json,
    qp_oracle,
    rbf_kernel,
    save_features_csv,
    save_svr_json,
    svr_fit,
    svr_predict,
)

from oracles import two_pass_mean_std


def module_image(arr):
    a = np.asarray(arr, dtype=np.uint16)
    return ModuleImage(image=Image16(a), rows=a.shape[0], cols=a.shape[1])


def random_problem(rng, n=None):
    n = n or int(rng.integers(6, 15))
    d = int(rng.integers(1, 4))
    x = rng.normal(size=(n, d))
    y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=n)
    return x, y


class TestFeatures:
    def test_constant_image(self):
        f = extract_mean_std(module_image(np.full((3, 3), 500)))
        assert f.tolist() == [500.0, 0.0]

    def test_two_point_std(self):
        f = extract_mean_std(module_image([[0, 2], [0, 2]]))
        assert f.tolist() == [1.0, 1.0]

    def test_matches_reference(self):
        rng = np.random.default_rng(31)
        pix = rng.integers(0, 65536, size=(24, 36), dtype=np.uint16)
        f = extract_mean_std(module_image(pix))
        mu, sd = two_pass_mean_std(pix)
        assert f[0] == pytest.approx(mu, rel=1e-9)
        assert f[1] == pytest.approx(sd, rel=1e-9)


class TestNormalizer:
    def test_hand_example(self):
        norm = fit_normalizer(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert norm.mean.tolist() == [1.0, 1.0]
        assert norm.std.tolist() == [1.0, 1.0]
        assert apply_normalizer(norm, np.array([1.0, 1.0])).tolist() == [0.0, 0.0]

    def test_affine_round_trip(self):
        rng = np.random.default_rng(3)
        train = rng.normal(size=(10, 3)) * [2, 5, 0.1] + [1, -4, 9]
        norm = fit_normalizer(train)
        z = apply_normalizer(norm, train[4])
        assert np.allclose(z * norm.std + norm.mean, train[4], atol=1e-12)

    def test_train_set_standardized(self):
        rng = np.random.default_rng(8)
        train = rng.normal(size=(40, 2)) * 7 + 3
        z = apply_normalizer(fit_normalizer(train), train)
        assert np.all(np.abs(z.mean(axis=0)) < 1e-12)

    def test_constant_dimension_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            fit_normalizer(np.array([[1.0, 5.0], [2.0, 5.0]]))


class TestRbfKernel:
    def test_self_similarity(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            v = rng.normal(size=3)
            assert rbf_kernel(v, v, gamma=0.7) == 1.0

    def test_unit_distance_closed_form(self):
        assert rbf_kernel(np.zeros(2), np.array([1.0, 0.0]), gamma=1.0) == pytest.approx(
            np.exp(-1.0), abs=1e-12
        )

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = rng.normal(size=(2, 4))
            assert rbf_kernel(a, b, 0.3) == rbf_kernel(b, a, 0.3)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rbf_kernel(np.zeros(2), np.zeros(3), 1.0)


class TestSvrFit:
    def test_constant_targets_inside_tube(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(8, 2))
        m = svr_fit(x, np.full(8, 0.93), C=1.0, epsilon=0.1, gamma=0.5)
        assert len(m.dual_coef) == 0
        assert m.bias == pytest.approx(0.93)
        assert svr_predict(m, rng.normal(size=2)) == pytest.approx(0.93)

    def test_single_sample(self):
        m = svr_fit(np.array([[0.3]]), np.array([1.7]), C=1.0, epsilon=0.05, gamma=1.0)
        assert abs(svr_predict(m, np.array([0.3])) - 1.7) <= 0.05 + 1e-9

    def test_matches_oracle_on_fixed_problem(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(10, 2))
        y = 0.5 * x[:, 0] - 0.2 * x[:, 1] ** 2 + 0.05 * rng.normal(size=10)
        m = svr_fit(x, y, C=1.0, epsilon=0.05, gamma=0.5, tol=1e-8, max_iter=100_000)
        o = qp_oracle(x, y, C=1.0, epsilon=0.05, gamma=0.5)
        assert m.objective == pytest.approx(o.objective, abs=1e-4)
        keep = np.abs(o.beta) > 1e-12
        om = SvrModel(
            support_vectors=x[keep], dual_coef=o.beta[keep], bias=o.bias,
            gamma=0.5, C=1.0, epsilon=0.05,
        )
        probes = rng.normal(size=(20, 2))
        assert np.max(np.abs(svr_predict(m, probes) - svr_predict(om, probes))) < 1e-3

    def test_box_equality_and_slackness_invariants(self):
        rng = np.random.default_rng(77)
        for _ in range(8):
            x, y = random_problem(rng)
            C = float(rng.uniform(0.5, 5))
            eps = float(rng.uniform(0.01, 0.1))
            m = svr_fit(x, y, C=C, epsilon=eps, gamma=0.8, tol=1e-6, max_iter=100_000)
            assert m.converged
            assert np.all(np.abs(m.dual_coef) <= C + 1e-9)
            assert abs(m.dual_coef.sum()) <= 1e-8
            # Complementary slackness: residuals sit on the tube for free
            # duals and anywhere inside it for zero duals.
            pred = np.atleast_1d(svr_predict(m, x))
            resid = y - pred
            sv_index = {tuple(v): c for v, c in zip(m.support_vectors, m.dual_coef)}
            for xi, ri in zip(x, resid):
                beta = sv_index.get(tuple(xi), 0.0)
                if abs(beta) < 1e-9:
                    assert abs(ri) <= eps + 1e-4
                elif 1e-7 < beta < C - 1e-7:
                    assert ri == pytest.approx(eps, abs=1e-4)
                elif -C + 1e-7 < beta < -1e-7:
                    assert ri == pytest.approx(-eps, abs=1e-4)

    def test_objective_dominates_suboptimal_feasible_points(self):
        rng = np.random.default_rng(9)
        x, y = random_problem(rng, n=10)
        m = svr_fit(x, y, C=2.0, epsilon=0.03, gamma=0.6, tol=1e-8, max_iter=100_000)
        for iters in (1, 5, 50, 500):
            partial = qp_oracle(x, y, C=2.0, epsilon=0.03, gamma=0.6, max_iter=iters)
            assert m.objective >= partial.objective - 1e-4

    def test_homogeneity_in_targets_and_epsilon(self):
        # Holds when no dual sits on the box, so use well-separated points
        # and a generous C, and verify that precondition.
        x = np.linspace(-2.0, 2.0, 8).reshape(-1, 1)
        y = np.sin(x[:, 0])
        scale = 0.5
        base = svr_fit(x, y, C=1e3, epsilon=0.05, gamma=0.5, tol=1e-9, max_iter=200_000)
        scaled = svr_fit(
            x, scale * y, C=1e3, epsilon=scale * 0.05, gamma=0.5, tol=1e-9, max_iter=200_000
        )
        assert np.abs(base.dual_coef).max() < 0.5 * 1e3
        probes = np.linspace(-2.5, 2.5, 15).reshape(-1, 1)
        assert np.max(np.abs(svr_predict(scaled, probes) - scale * svr_predict(base, probes))) < 1e-6

    def test_unconverged_flagged(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        with pytest.warns(RuntimeWarning, match="did not converge"):
            m = svr_fit(x, y, C=10.0, epsilon=0.001, gamma=1.0, max_iter=3)
        assert not m.converged

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            svr_fit(np.array([[np.nan]]), np.array([1.0]))

    def test_lipschitz_smoke(self):
        rng = np.random.default_rng(14)
        x, y = random_problem(rng, n=10)
        gamma = 0.8
        m = svr_fit(x, y, C=2.0, epsilon=0.02, gamma=gamma, tol=1e-6, max_iter=100_000)
        lip = np.abs(m.dual_coef).sum() * np.sqrt(2 * gamma) * np.exp(-0.5)
        for _ in range(50):
            p = rng.normal(size=x.shape[1])
            delta = rng.normal(size=x.shape[1]) * 0.01
            change = abs(svr_predict(m, p + delta) - svr_predict(m, p))
            assert change <= lip * np.linalg.norm(delta) * (1 + 1e-9) + 1e-15


class TestSvrPredict:
    def test_zero_duals_returns_bias(self):
        m = SvrModel(np.zeros((0, 2)), np.zeros(0), bias=0.9, gamma=1.0, C=1.0, epsilon=0.1)
        assert svr_predict(m, np.array([5.0, -3.0])) == 0.9

    def test_far_input_approaches_bias(self):
        rng = np.random.default_rng(4)
        x, y = random_problem(rng, n=8)
        m = svr_fit(x, y, C=2.0, epsilon=0.01, gamma=1.0, tol=1e-6, max_iter=50_000)
        far = np.full(x.shape[1], 80.0)
        assert svr_predict(m, far) == pytest.approx(m.bias, abs=1e-9)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        x, y = random_problem(rng, n=6)
        m = svr_fit(x, y, C=1.0, epsilon=0.05, gamma=1.0)
        if m.dim > 0:
            with pytest.raises(ValueError, match="dimension mismatch"):
                svr_predict(m, np.zeros(m.dim + 1))


class TestQpOracle:
    def test_constant_targets_zero_duals(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(6, 2))
        o = qp_oracle(x, np.full(6, 0.8), C=1.0, epsilon=0.05, gamma=0.5)
        assert np.abs(o.beta).max() == 0.0

    def test_large_c_interpolates_within_tube(self):
        rng = np.random.default_rng(16)
        x = np.linspace(-1, 1, 8).reshape(-1, 1)
        y = np.sin(2 * x[:, 0])
        eps = 0.02
        o = qp_oracle(x, y, C=1e4, epsilon=eps, gamma=2.0)
        keep = np.abs(o.beta) > 1e-12
        m = SvrModel(x[keep], o.beta[keep], o.bias, gamma=2.0, C=1e4, epsilon=eps)
        resid = np.abs(y - np.atleast_1d(svr_predict(m, x)))
        assert np.all(resid <= eps + 1e-3)

    def test_size_limit(self):
        with pytest.raises(ValueError, match="30 samples"):
            qp_oracle(np.zeros((31, 1)), np.zeros(31))


class TestFileFormats:
    def test_features_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(19)
        ids = [f"s{i:03d}" for i in range(7)]
        feats = rng.normal(size=(7, 2)) * 1000
        p = tmp_path / "features.csv"
        save_features_csv(ids, feats, p)
        ids2, feats2 = load_features_csv(p)
        assert ids2 == ids
        assert np.array_equal(feats2, feats)
        assert p.read_text().splitlines()[0] == "sample_id,f0,f1"

    def test_model_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(20)
        x, y = random_problem(rng, n=9)
        m = svr_fit(x, y, C=1.5, epsilon=0.03, gamma=0.9, tol=1e-6, max_iter=50_000)
        norm = fit_normalizer(rng.normal(size=(5, x.shape[1])))
        p = tmp_path / "model.json"
        save_svr_json(m, p, norm)
        m2, norm2 = load_svr_json(p)
        probes = rng.normal(size=(10, x.shape[1]))
        assert np.array_equal(svr_predict(m2, probes), svr_predict(m, probes))
        assert np.array_equal(norm2.mean, norm.mean)

    def test_bad_model_file(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"format_version": 99}')
        with pytest.raises(ValueError, match="unsupported"):
            load_svr_json(p)
