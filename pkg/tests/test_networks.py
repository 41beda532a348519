import numpy as np
import pytest

from helpers import max_rel_error, numerical_grad, tape_masks
from lfdistill.autodiff import GradientTape
from lfdistill.errors import ConfigError
from lfdistill.scene import CameraPose, Ray
from lfdistill.student import (KPointEncoder, PluckerEncoder, ResidualMlp, build_config,
                               encode_ray, plucker, render_image_student, student_forward)
from lfdistill.teacher import NerfMlp, TeacherConfig, render_image, render_rays
from lfdistill.volume import composite, composite_backward


def small_pose(w=8, h=6):
    return CameraPose(np.array([0, 0, 4.0]), np.eye(3), 6.0, w, h, 2.0, 6.0)


class TestBuildConfig:
    def test_w256d88(self):
        assert build_config("W256D88").blocks == 43

    def test_w181d88(self):
        cfg = build_config("W181D88")
        assert (cfg.width, cfg.blocks) == (181, 43)

    def test_custom(self):
        assert build_config(width=64, depth=24).blocks == 11

    @pytest.mark.parametrize("name,blocks", [("W256D44", 21), ("W363D22", 10)])
    def test_other_named(self, name, blocks):
        assert build_config(name).blocks == blocks

    def test_odd_depth(self):
        with pytest.raises(ConfigError):
            build_config(width=64, depth=23)

    def test_layer_count_matches_depth(self):
        cfg = build_config("W181D88")
        assert len(ResidualMlp(cfg, 12).layers) == 88


class TestEncoders:
    def test_two_midpoints(self):
        enc = KPointEncoder(2, 0, True, "test")
        pts = enc.points(np.zeros((1, 3)), np.array([[0, 0, 1.0]]), 0.0, 4.0)
        np.testing.assert_array_equal(pts[0], [[0, 0, 1], [0, 0, 3]])

    def test_plucker_zero_origin(self):
        np.testing.assert_array_equal(plucker(np.zeros((1, 3)), np.array([[0, 1.0, 0]]))[0, 3:],
                                      0)

    def test_plucker_moment_orthogonal(self):
        rng = np.random.default_rng(0)
        o = rng.normal(size=(100, 3))
        d = rng.normal(size=(100, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        p = plucker(o, d)
        np.testing.assert_allclose(np.sum(p[:, :3] * p[:, 3:], axis=1), 0, atol=1e-14)

    def test_dimensions(self):
        enc = KPointEncoder(16, 10, True)
        assert enc.raw_dim == 48 and enc.out_dim == 1008
        x = enc(np.zeros((3, 3)), np.tile([0, 0, 1.0], (3, 1)), 2.0, 6.0,
                np.random.default_rng(0))
        assert x.shape == (3, 1008)

    @pytest.mark.parametrize("k,L,raw", [(2, 0, True), (4, 3, False), (8, 6, True)])
    def test_dimension_formula(self, k, L, raw):
        enc = KPointEncoder(k, L, raw, "test")
        x = encode_ray(enc, Ray(np.zeros(3), np.array([1.0, 0, 0]), 1.0, 2.0))
        assert x.shape == (3 * k * (2 * L + raw),)

    def test_needs_two_points(self):
        with pytest.raises(ConfigError):
            KPointEncoder(1)

    def test_train_mode_varies(self):
        enc = KPointEncoder(4, 2, True, "train")
        o, d = np.zeros((1, 3)), np.array([[0, 0, 1.0]])
        a = enc(o, d, 2.0, 6.0, np.random.default_rng(0))
        b = enc(o, d, 2.0, 6.0, np.random.default_rng(1))
        assert not np.array_equal(a, b)


class TestResidualMlp:
    def test_zero_parameters_give_gray(self):
        m = ResidualMlp(build_config(width=16, depth=8), 10)
        for p in m.parameters():
            p[...] = 0
        out = student_forward(m, np.random.default_rng(0).normal(size=(5, 10)).astype(np.float32))
        np.testing.assert_array_equal(out, 0.5)

    def test_zeroed_blocks_are_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 10)).astype(np.float32)
        outs = []
        ref = ResidualMlp(build_config(width=16, depth=4), 10, np.random.default_rng(5))
        for depth in (4, 10, 30):
            m = ResidualMlp(build_config(width=16, depth=depth), 10)
            for dst, src in zip(m.input.parameters() + m.head.parameters(),
                                ref.input.parameters() + ref.head.parameters()):
                dst[...] = src
            for a, b in m.blocks:
                for p in a.parameters() + b.parameters():
                    p[...] = 0
            outs.append(m.forward(x))
        np.testing.assert_allclose(outs[0], outs[1], rtol=1e-6)
        np.testing.assert_allclose(outs[0], outs[2], rtol=1e-6)

    def test_query_counter(self):
        m = ResidualMlp(build_config(width=8, depth=4), 6)
        m.forward(np.zeros((37, 6), np.float32))
        assert m.queries == 37

    def test_input_mismatch(self):
        m = ResidualMlp(build_config(width=8, depth=4), 6)
        with pytest.raises(ConfigError):
            m.forward(np.zeros((2, 7), np.float32))

    def test_output_range(self):
        m = ResidualMlp(build_config(width=32, depth=12), 9)
        out = m.forward(np.random.default_rng(0).normal(0, 50, (200, 9)).astype(np.float32))
        assert np.all((out >= 0) & (out <= 1))

    @pytest.mark.parametrize("residual", [True, False])
    def test_gradients_match_finite_differences(self, residual):
        rng = np.random.default_rng(2)
        m = ResidualMlp(build_config(width=6, depth=8, residual=residual), 5, rng, np.float64)
        x = rng.normal(size=(4, 5))
        g = rng.normal(size=(4, 3))

        def f():
            tape = GradientTape()
            return float(np.sum(g * m.forward(x, tape))), tape_masks(tape)

        tape = GradientTape()
        m.zero_grad()
        m.forward(x, tape)
        m.backward(tape, g)
        assert len(tape) == 0
        for p, a in zip(m.parameters(), m.gradients()):
            assert max_rel_error(a, numerical_grad(f, p)) < 1e-4

    def test_deep_input_gradient_nonzero(self):
        enc = KPointEncoder()
        m = ResidualMlp(build_config("W181D88"), enc.out_dim, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        d = rng.normal(size=(32, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        x = enc(rng.normal(size=(32, 3)).astype(np.float32), d.astype(np.float32), 2.0, 6.0, rng)
        tape = GradientTape()
        out = m.forward(x, tape)
        m.backward(tape, out - 0.3)
        assert np.linalg.norm(m.input.grad_weight) > 1e-12


class TestTeacher:
    def test_gradients_through_rendering(self):
        cfg = TeacherConfig(width=6, depth=3, skip=2, pos_freqs=1, dir_freqs=1, n_samples=5)
        rng = np.random.default_rng(0)
        m = NerfMlp(cfg, rng, np.float64)
        pts = rng.normal(size=(10, 3))
        dirs = rng.normal(size=(10, 3))
        delta = np.full((2, 5), 0.3)
        bg = (1.0, 1.0, 1.0)
        g = rng.normal(size=(2, 3))

        def f():
            tape = GradientTape()
            sigma, rgb = m.query(pts, dirs, tape)
            c = composite(sigma.reshape(2, 5), rgb.reshape(2, 5, 3), delta, bg)
            return float(np.sum(g * c.rgb)), tape_masks(tape)

        tape = GradientTape()
        m.zero_grad()
        sigma, rgb = m.query(pts, dirs, tape)
        c = composite(sigma.reshape(2, 5), rgb.reshape(2, 5, 3), delta, bg)
        ds, dc = composite_backward(c, rgb.reshape(2, 5, 3), delta, bg, g)
        m.backward(tape, ds.reshape(-1), dc.reshape(-1, 3))
        assert len(tape) == 0
        for p, a in zip(m.parameters(), m.gradients()):
            assert max_rel_error(a, numerical_grad(f, p)) < 1e-4

    def test_density_and_color_ranges(self):
        m = NerfMlp(TeacherConfig(width=16))
        rng = np.random.default_rng(0)
        sigma, rgb = m.query(rng.normal(size=(100, 3)).astype(np.float32),
                             rng.normal(size=(100, 3)).astype(np.float32))
        assert np.all(sigma >= 0) and np.all((rgb > 0) & (rgb < 1))

    def test_query_count_and_determinism(self):
        m = NerfMlp(TeacherConfig(width=16, n_samples=12))
        img, n = render_image(m, small_pose(), (1, 1, 1))
        img2, _ = render_image(m, small_pose(), (1, 1, 1))
        assert n == 8 * 6 * 12
        np.testing.assert_array_equal(img, img2)

    def test_query_count_formula(self):
        # 64 x 64 pixels at 192 samples each
        assert 64 * 64 * 192 == 786_432

    def test_single_ray_matches_batch(self):
        m = NerfMlp(TeacherConfig(width=16, n_samples=16))
        rng = np.random.default_rng(0)
        o = rng.normal(size=(50, 3)).astype(np.float32)
        d = rng.normal(size=(50, 3)).astype(np.float32)
        full = render_rays(m, o, d, 2.0, 6.0, (1, 1, 1))
        one = render_rays(m, o[17:18], d[17:18], 2.0, 6.0, (1, 1, 1))
        np.testing.assert_array_equal(full[17], one[0])

    def test_bad_skip(self):
        with pytest.raises(ConfigError):
            TeacherConfig(depth=4, skip=4)


def test_student_image_render_is_deterministic():
    enc = KPointEncoder(4, 2)
    m = ResidualMlp(build_config(width=8, depth=6), enc.out_dim)
    a = render_image_student(m, enc, small_pose())
    b = render_image_student(m, enc, small_pose())
    np.testing.assert_array_equal(a, b)
    assert a.shape == (6, 8, 3)


def test_student_issues_one_query_per_pixel():
    enc = KPointEncoder(4, 2)
    m = ResidualMlp(build_config(width=8, depth=6), enc.out_dim)
    render_image_student(m, enc, CameraPose(np.array([0, 0, 4.0]), np.eye(3), 50.0, 64, 64,
                                            2.0, 6.0))
    assert m.queries == 4096


def test_plucker_encoder_runs():
    enc = PluckerEncoder(2)
    m = ResidualMlp(build_config(width=8, depth=4), enc.out_dim)
    assert render_image_student(m, enc, small_pose()).shape == (6, 8, 3)
