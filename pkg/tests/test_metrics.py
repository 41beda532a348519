import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from lfdistill.errors import ConfigError, UsageError
from lfdistill.imageio import read_ppm, write_image, write_ppm
from lfdistill.metrics import psnr, ssim, to_gray


def textured(h=48, w=48, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w] / 8.0
    base = 0.5 + 0.25 * np.sin(x) * np.cos(0.7 * y)
    img = np.stack([base, np.roll(base, 5, 0), np.roll(base, 7, 1)], -1)
    return np.clip(img + rng.normal(0, 0.03, img.shape), 0, 1)


def oracle(a, b):
    return structural_similarity(to_gray(a), to_gray(b), gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, data_range=1.0)


class TestPsnr:
    def test_identical(self):
        assert psnr(textured(), textured()) == float("inf")

    @pytest.mark.parametrize("err,db", [(0.1, 20.0), (0.01, 40.0)])
    def test_uniform_error(self, err, db):
        a = np.full((4, 4, 3), 0.3)
        assert psnr(a, a + err) == pytest.approx(db, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 6, 3), elements=st.floats(0.1, 0.9)),
           arrays(np.float64, (6, 6, 3), elements=st.floats(-0.1, 0.1)),
           st.floats(-0.05, 0.05))
    def test_symmetric_and_shift_invariant(self, a, n, c):
        b = a + n
        if np.array_equal(a, b):
            return
        assert psnr(a, b) == pytest.approx(psnr(b, a), rel=1e-12)
        assert psnr(a + c, b + c) == pytest.approx(psnr(a, b), rel=1e-6)

    def test_added_noise_lowers_psnr(self):
        a = textured()
        rng = np.random.default_rng(1)
        b = a + rng.normal(0, 0.02, a.shape)
        c = b + rng.normal(0, 0.02, a.shape)
        assert psnr(a, c) < psnr(a, b)


class TestSsim:
    def test_identical(self):
        a = textured()
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_reference_implementation(self, seed):
        a = textured(seed=seed)
        b = np.clip(a + np.random.default_rng(seed + 10).normal(0, 0.05, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(oracle(a, b), abs=1e-6)

    def test_negative_image(self):
        a = textured()
        assert ssim(a, 1 - a) < 0.5
        assert oracle(a, 1 - a) < 0.5

    def test_constant_with_tiny_noise(self):
        a = np.full((32, 32, 3), 0.5)
        b = a + np.random.default_rng(0).normal(0, 1e-4, a.shape)
        assert ssim(a, b) > 0.99

    def test_too_small(self):
        with pytest.raises(UsageError):
            ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))

    @settings(max_examples=25, deadline=None)
    @given(arrays(np.float64, (12, 13), elements=st.floats(0, 1)))
    def test_self_similarity_is_one(self, a):
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ppm_round_trip(tmp_path):
    a = textured(8, 5)
    write_ppm(tmp_path / "a.ppm", a)
    back = read_ppm(tmp_path / "a.ppm")
    assert back.shape == a.shape
    np.testing.assert_allclose(back, a, atol=0.5 / 255 + 1e-12)


def test_png_output(tmp_path):
    pytest.importorskip("PIL")
    write_image(tmp_path / "a.png", textured(8, 8))
    assert (tmp_path / "a.png").read_bytes()[:4] == b"\x89PNG"
