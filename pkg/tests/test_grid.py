import numpy as np
import pytest

from epsmooth import ImageGrid, NoiseSpec, SceneSpec, add_noise, rmse, synth


class TestImageGrid:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ImageGrid([[1.0, np.nan], [0.0, 2.0]])

    def test_rejects_empty_and_1d(self):
        with pytest.raises(ValueError):
            ImageGrid(np.zeros((0, 4)))
        with pytest.raises(ValueError):
            ImageGrid(np.zeros(9))

    def test_buffer_is_frozen(self):
        img = ImageGrid.full(4, 5, 7.0)
        assert img.height == 4 and img.width == 5
        with pytest.raises(ValueError):
            img.data[0, 0] = 1.0


class TestSynth:
    def test_constant_scene(self):
        img = synth(SceneSpec.constant(64, 100.0))
        assert img.shape == (64, 64)
        assert np.all(img.data == 100.0)

    def test_background_point(self):
        # normalized (0.05, 0.05) is outside both shapes
        img = synth(SceneSpec.square_circle(64))
        assert img.data[3, 3] == 100.0
        assert img.data[2, 2] == 100.0

    def test_square_and_disk_levels(self):
        img = synth(SceneSpec.square_circle(128))
        # center of the square, away from the disk
        assert img.data[int(0.3 * 128), int(0.3 * 128)] == 180.0
        # disk center
        assert img.data[int(0.7 * 128), int(0.7 * 128)] == 60.0

    def test_disk_count_matches_geometric_scan(self):
        n = 128
        img = synth(SceneSpec.square_circle(n))
        count = 0
        for r in range(n):
            for c in range(n):
                x = (c + 0.5) / n
                y = (r + 0.5) / n
                if (x - 0.7) ** 2 + (y - 0.7) ** 2 <= 0.35**2:
                    count += 1
        assert int(np.sum(img.data == 60.0)) == count

    def test_disk_painted_over_square_corner(self):
        n = 128
        img = synth(SceneSpec.square_circle(n))
        # the square's far corner (0.55, 0.55) lies inside the disk
        r = c = int(0.54 * n)
        assert img.data[r, c] == 60.0

    def test_step_scene(self):
        img = synth(SceneSpec.step(32, 10, 1.0, 9.0))
        assert np.all(img.data[:, :10] == 1.0)
        assert np.all(img.data[:, 10:] == 9.0)

    def test_pure(self):
        a = synth(SceneSpec.square_circle(64))
        b = synth(SceneSpec.square_circle(64))
        assert np.array_equal(a.data, b.data)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            SceneSpec.constant(15, 0.0)

    def test_parse(self):
        assert SceneSpec.parse("square-circle", 64).kind == "square-circle"
        spec = SceneSpec.parse("constant(42.5)", 32)
        assert spec.level == 42.5
        spec = SceneSpec.parse("step(12, 90, 200)", 32)
        assert (spec.column, spec.low, spec.high) == (12, 90.0, 200.0)
        with pytest.raises(ValueError):
            SceneSpec.parse("blob", 64)
        with pytest.raises(ValueError):
            SceneSpec.parse("step(12)", 64)


class TestAddNoise:
    def test_zero_sd_is_identity(self):
        img = synth(SceneSpec.square_circle(64))
        out = add_noise(img, NoiseSpec(sd=0.0, seed=9))
        assert np.array_equal(out.data, img.data)

    def test_deterministic(self):
        img = synth(SceneSpec.constant(32, 50.0))
        a = add_noise(img, NoiseSpec(sd=10.0, seed=7))
        b = add_noise(img, NoiseSpec(sd=10.0, seed=7))
        assert np.array_equal(a.data, b.data)
        c = add_noise(img, NoiseSpec(sd=10.0, seed=8))
        assert not np.array_equal(a.data, c.data)

    def test_sample_moments(self):
        img = synth(SceneSpec.constant(128, 0.0))
        out = add_noise(img, NoiseSpec(sd=10.0, seed=7))
        assert abs(out.data.mean()) < 4 * 10.0 / 128
        assert abs(out.data.std(ddof=1) - 10.0) / 10.0 < 0.05

    def test_mean_preserving_over_seeds(self):
        n, sd = 32, 10.0
        img = synth(SceneSpec.constant(n, 100.0))
        total = 0.0
        for seed in range(100):
            total += (add_noise(img, NoiseSpec(sd=sd, seed=seed)).data - img.data).mean()
        grand = total / 100
        assert abs(grand) < 4 * sd / np.sqrt(100 * n * n)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            NoiseSpec(sd=-1.0)
        with pytest.raises(ValueError):
            NoiseSpec(sd=1.0, seed=2**64)


class TestRmse:
    def test_identical(self):
        img = synth(SceneSpec.square_circle(64))
        assert rmse(img, img) == 0.0

    def test_constant_offset(self):
        a = ImageGrid.full(8, 8, 0.0)
        b = ImageGrid.full(8, 8, -3.5)
        assert rmse(a, b) == pytest.approx(3.5, abs=1e-12)

    def test_hand_value(self):
        a = ImageGrid([[0.0, 0.0], [0.0, 0.0]])
        b = ImageGrid([[1.0, 2.0], [2.0, 1.0]])
        assert rmse(a, b) == pytest.approx(np.sqrt(2.5), rel=1e-12)

    def test_symmetric(self, rng):
        a = ImageGrid(rng.uniform(0, 255, (6, 7)))
        b = ImageGrid(rng.uniform(0, 255, (6, 7)))
        assert rmse(a, b) == rmse(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rmse(ImageGrid.full(4, 4, 0.0), ImageGrid.full(4, 5, 0.0))

    def test_triangle_inequality(self, rng):
        for _ in range(20):
            a, b, c = (ImageGrid(rng.uniform(0, 255, (5, 5))) for _ in range(3))
            assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12
