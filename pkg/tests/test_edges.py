import math

import numpy as np
import pytest

from epsmooth import (
    EdgeDetectParams,
    ImageGrid,
    SceneSpec,
    chi2_quantile_2df,
    delta_statistic,
    detect_edges,
    estimate_sigma,
    fit_local_plane,
    fit_planes,
    synth,
)
from oracles import delta_brute, plane_fit_dense


def plane_image(n, a, b, c):
    """z = a + b*x + c*y at pixel centers on the normalized grid."""
    coords = (np.arange(n) + 0.5) / n
    return ImageGrid(a + b * coords[None, :] + c * coords[:, None])


class TestFitLocalPlane:
    def test_constant(self):
        img = ImageGrid.full(16, 16, 42.0)
        fit = fit_local_plane(img, (8, 8), 3)
        assert fit == (42.0, 0.0, 0.0)

    def test_reproduces_planes(self):
        img = plane_image(32, 5.0, 3.0, 2.0)
        fit = fit_local_plane(img, (10, 14), 2)
        x = (14 + 0.5) / 32
        y = (10 + 0.5) / 32
        assert fit.b0 == pytest.approx(5 + 3 * x + 2 * y, abs=1e-9)
        assert fit.b1 == pytest.approx(3.0, abs=1e-9)
        assert fit.b2 == pytest.approx(2.0, abs=1e-9)

    def test_three_by_three_against_dense_solve(self):
        img = ImageGrid(np.arange(1.0, 10.0).reshape(3, 3))
        fit = fit_local_plane(img, (1, 1), 1)
        oracle = plane_fit_dense(img.data, (1, 1), 1, n=3)
        assert np.allclose([fit.b0, fit.b1, fit.b2], oracle, rtol=1e-10, atol=1e-9)

    def test_random_windows_against_dense_solve(self, rng):
        img = ImageGrid(rng.uniform(0, 255, (40, 40)))
        for _ in range(25):
            k = int(rng.integers(1, 5))
            r = int(rng.integers(k, 40 - k))
            c = int(rng.integers(k, 40 - k))
            fit = fit_local_plane(img, (r, c), k)
            oracle = plane_fit_dense(img.data, (r, c), k, n=40)
            assert np.allclose([fit.b0, fit.b1, fit.b2], oracle, rtol=1e-9)

    def test_boundary_overrun(self):
        img = ImageGrid.full(10, 10, 0.0)
        with pytest.raises(ValueError):
            fit_local_plane(img, (1, 5), 2)

    def test_field_matches_scalar(self, rng):
        img = ImageGrid(rng.uniform(0, 255, (20, 24)))
        k = 2
        field = fit_planes(img, k)
        for r in range(k, 20 - k, 3):
            for c in range(k, 24 - k, 5):
                fit = fit_local_plane(img, (r, c), k)
                assert field.b0[r, c] == pytest.approx(fit.b0, abs=1e-9)
                assert field.b1[r, c] == pytest.approx(fit.b1, abs=1e-6)
                assert field.b2[r, c] == pytest.approx(fit.b2, abs=1e-6)


class TestEstimateSigma:
    def test_constant(self):
        assert estimate_sigma(ImageGrid.full(32, 32, 9.0)) == 0.0

    def test_noiseless_step(self):
        img = synth(SceneSpec.step(64, 32, 100.0, 180.0))
        assert estimate_sigma(img) == 0.0

    def test_gaussian_noise(self):
        rng = np.random.default_rng(99)
        img = ImageGrid(15.0 * rng.standard_normal((128, 128)))
        est = estimate_sigma(img)
        assert abs(est - 15.0) / 15.0 < 0.08

    def test_needs_two_columns(self):
        with pytest.raises(ValueError):
            estimate_sigma(ImageGrid(np.zeros((5, 1))))


class TestChi2Quantile:
    def test_full_mass(self):
        assert chi2_quantile_2df(1.0) == 0.0

    def test_analytic_point(self):
        assert chi2_quantile_2df(math.exp(-1.0)) == pytest.approx(2.0, abs=1e-12)

    def test_table_value(self):
        assert chi2_quantile_2df(0.05) == pytest.approx(5.991464547, abs=1e-9)

    def test_domain(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                chi2_quantile_2df(bad)


def _fit_at_factory(img, k):
    h, w = img.shape

    def fit_at(p):
        r, c = p
        if not (k <= r < h - k and k <= c < w - k):
            return None
        return tuple(fit_local_plane(img, p, k))

    return fit_at


class TestDeltaStatistic:
    def test_constant_image(self):
        img = ImageGrid.full(24, 24, 77.0)
        field = fit_planes(img, 2)
        for p in ((5, 5), (12, 17), (20, 3)):
            assert delta_statistic(field, p, 2) == 0.0

    def test_globally_linear_image(self):
        img = plane_image(32, 10.0, 40.0, -25.0)
        field = fit_planes(img, 2)
        for r in range(2, 30, 5):
            for c in range(2, 30, 7):
                assert delta_statistic(field, (r, c), 2) == pytest.approx(0.0, abs=1e-6)

    def test_step_matches_brute_force(self):
        n = 64
        img = synth(SceneSpec.step(n, n // 2, 100.0, 180.0))
        field = fit_planes(img, 2)
        fit_at = _fit_at_factory(img, 2)
        p = (20, n // 2 - 1)  # one column left of the step
        expected = delta_brute(fit_at, p, 2)
        assert expected > 0
        assert delta_statistic(field, p, 2) == pytest.approx(expected, rel=1e-9)

    def test_random_image_matches_brute_force(self, rng):
        img = ImageGrid(rng.uniform(0, 255, (30, 30)))
        k = 2
        field = fit_planes(img, k)
        fit_at = _fit_at_factory(img, k)
        for _ in range(30):
            p = (int(rng.integers(k, 30 - k)), int(rng.integers(k, 30 - k)))
            assert delta_statistic(field, p, k) == pytest.approx(
                delta_brute(fit_at, p, k), rel=1e-9, abs=1e-9
            )

    def test_requires_valid_fit(self):
        img = ImageGrid.full(16, 16, 0.0)
        field = fit_planes(img, 2)
        with pytest.raises(ValueError):
            delta_statistic(field, (0, 0), 2)


class TestDetectEdges:
    def test_constant_image_no_flags(self):
        img = ImageGrid.full(32, 32, 50.0)
        for alpha in (0.5, 0.05):
            em = detect_edges(img, EdgeDetectParams(2, alpha))
            assert int(em.flags.sum()) == 0

    def test_step_flags_near_column(self):
        n = 64
        img = synth(SceneSpec.step(n, n // 2, 100.0, 180.0))
        em = detect_edges(img, EdgeDetectParams(2, 0.05, sigma_override=5.0))
        flagged = np.argwhere(em.flags)
        assert len(flagged) > 0
        assert np.all(np.abs(flagged[:, 1] - (n // 2 - 0.5)) <= 2 * 2 + 1)
        rows_with_flag = set(flagged[:, 0].tolist())
        for r in range(2, n - 2):
            assert r in rows_with_flag

    def test_alpha_monotonicity(self):
        n = 64
        img = synth(SceneSpec.step(n, n // 2, 100.0, 180.0))
        loose = detect_edges(img, EdgeDetectParams(2, 0.5, sigma_override=5.0))
        strict = detect_edges(img, EdgeDetectParams(2, 0.01, sigma_override=5.0))
        assert np.all(loose.flags[strict.flags])

    def test_shift_leaves_delta_unchanged(self, rng):
        n = 48
        img = ImageGrid(
            synth(SceneSpec.step(n, n // 2, 100.0, 160.0)).data
            + 4.0 * rng.standard_normal((n, n))
        )
        shifted = ImageGrid(img.data + 37.0)
        a = detect_edges(img, EdgeDetectParams(2, 0.05, sigma_override=4.0))
        b = detect_edges(shifted, EdgeDetectParams(2, 0.05, sigma_override=4.0))
        assert np.allclose(a.delta, b.delta, atol=1e-9)
        assert np.array_equal(a.flags, b.flags)

    def test_affine_equivariance(self):
        # The plane fit absorbs a global tilt: all gradients shift by the
        # same vector, so gradient differences are unchanged.  The flag set
        # is then invariant whenever the tilt does not move the rounded
        # placement of the comparison windows; on a vertical step every
        # gradient points along +x, so an +x tilt preserves placements.
        n = 48
        base = synth(SceneSpec.step(n, n // 2, 100.0, 180.0))
        coords = (np.arange(n) + 0.5) / n
        tilted = ImageGrid(base.data + 3.0 + 40.0 * coords[None, :])
        a = detect_edges(base, EdgeDetectParams(2, 0.05, sigma_override=5.0))
        b = detect_edges(tilted, EdgeDetectParams(2, 0.05, sigma_override=5.0))
        assert np.allclose(a.delta, b.delta, atol=1e-6)
        assert np.array_equal(a.flags, b.flags)
        # and the fits themselves carry an arbitrary tilt exactly
        skewed = ImageGrid(base.data + 3.0 + 8.0 * coords[None, :] - 5.5 * coords[:, None])
        fit_a = fit_local_plane(base, (20, 20), 2)
        fit_b = fit_local_plane(skewed, (20, 20), 2)
        assert fit_b.b1 == pytest.approx(fit_a.b1 + 8.0, abs=1e-9)
        assert fit_b.b2 == pytest.approx(fit_a.b2 - 5.5, abs=1e-9)

    def test_scale_equivariance(self, rng):
        n = 48
        img = ImageGrid(
            synth(SceneSpec.step(n, n // 2, 100.0, 160.0)).data
            + 5.0 * rng.standard_normal((n, n))
        )
        scaled = ImageGrid(3.0 * img.data)
        a = detect_edges(img, EdgeDetectParams(2, 0.05))
        b = detect_edges(scaled, EdgeDetectParams(2, 0.05))
        assert b.sigma_hat == pytest.approx(3.0 * a.sigma_hat, rel=1e-12)
        assert np.allclose(b.delta, 3.0 * a.delta, rtol=1e-9, atol=1e-9)
        assert np.array_equal(a.flags, b.flags)

    def test_flags_match_threshold_rule(self, rng):
        img = ImageGrid(rng.uniform(0, 255, (40, 40)))
        em = detect_edges(img, EdgeDetectParams(3, 0.3))
        assert np.array_equal(em.flags, em.delta > em.threshold)
        border = np.ones((40, 40), dtype=bool)
        border[3:-3, 3:-3] = False
        assert not em.flags[border].any()
        assert np.all(em.delta[border] == 0.0)

    def test_window_too_large(self):
        with pytest.raises(ValueError):
            detect_edges(ImageGrid.full(8, 8, 0.0), EdgeDetectParams(4, 0.05))

    def test_param_validation(self):
        with pytest.raises(ValueError):
            EdgeDetectParams(0, 0.05)
        with pytest.raises(ValueError):
            EdgeDetectParams(2, 1.0)
        with pytest.raises(ValueError):
            EdgeDetectParams(2, 0.05, sigma_override=-1.0)
