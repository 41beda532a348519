import numpy as np
import pytest

from lfdistill.errors import ConfigError, UsageError
from lfdistill.scene import (Blob, BlobScene, CameraPose, OrbitConfig, Ray, default_scene,
                             generate_ray, generate_rays, load_scene, query_field,
                             reference_render, render_rays, sample_poses, save_scene, SceneSpec)
from lfdistill.volume import composite


def pose(w=5, h=5, rot=None):
    return CameraPose(np.zeros(3), np.eye(3) if rot is None else rot, 4.0, w, h, 1.0, 5.0)


class TestField:
    def test_far_point_is_empty(self):
        s = BlobScene([Blob((0, 0, 0), 0.5, 100.0, (1, 0, 0))])
        sigma, _ = query_field(s, np.array([4.0, 0, 0]), np.array([0, 0, 1.0]))
        assert sigma < 1e-10

    def test_peak(self):
        s = BlobScene([Blob((1, 2, 3), 0.5, 7.0, (0.2, 0.4, 0.6))])
        sigma, c = query_field(s, np.array([1.0, 2, 3]), np.array([0, 0, 1.0]))
        assert sigma == pytest.approx(7.0)
        np.testing.assert_allclose(c, [0.2, 0.4, 0.6], atol=1e-9)

    def test_perpendicular_lobe_is_black(self):
        s = BlobScene([Blob((0, 0, 0), 0.5, 7.0, (1, 1, 1), 1.0, (0, 0, 1.0))],
                      background=(0, 0, 0))
        _, c = query_field(s, np.zeros(3), np.array([1.0, 0, 0]))
        np.testing.assert_allclose(c, 0, atol=1e-9)

    def test_color_range_and_nonnegative_density(self):
        rng = np.random.default_rng(0)
        s = default_scene()
        pts = rng.uniform(-3, 3, (5000, 3))
        d = rng.normal(size=(5000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        sigma, c = query_field(s, pts, d)
        assert np.all(sigma >= 0)
        assert np.all((c >= 0) & (c <= 1))

    def test_validation(self):
        with pytest.raises(ConfigError):
            BlobScene([])
        with pytest.raises(ConfigError):
            BlobScene([Blob((0, 0, 0), 0.5, 1.0, (1, 0, 0), 0.5, (0, 0, 2.0))])


class TestCamera:
    def test_center_pixel_on_axis(self):
        r = generate_ray(pose(), (2, 2))
        np.testing.assert_allclose(r.direction, [0, 0, -1], atol=1e-15)

    def test_mirror_symmetry(self):
        p = pose(6, 4)
        a = generate_ray(p, (1, 0)).direction
        b = generate_ray(p, (1, 5)).direction
        np.testing.assert_allclose(a * [-1, 1, 1], b, atol=1e-15)

    def test_unit_directions(self):
        for p in sample_poses(OrbitConfig(), 4, 3):
            _, d = generate_rays(p)
            assert np.all(np.abs(np.linalg.norm(d, axis=1) - 1) < 1e-6)

    def test_out_of_bounds(self):
        with pytest.raises(UsageError):
            generate_ray(pose(), (5, 0))

    def test_near_far_copied(self):
        r = generate_ray(pose(), (0, 0))
        assert (r.near, r.far) == (1.0, 5.0)

    def test_rotation_must_be_orthonormal(self):
        with pytest.raises(ConfigError):
            pose(rot=np.diag([1.0, 2.0, 1.0]))


class TestPoses:
    def test_single_pose_at_start(self):
        orbit = OrbitConfig(jitter=False, elevation=20.0, azimuth_start=45.0, radius=3.0)
        (p,) = sample_poses(orbit, 1)
        el, az = np.radians(20.0), np.radians(45.0)
        np.testing.assert_allclose(
            p.position, 3.0 * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                                        np.sin(el)]))

    def test_orthonormal_and_looking_at_origin(self):
        for p in sample_poses(OrbitConfig(), 20, 5):
            np.testing.assert_allclose(p.rotation.T @ p.rotation, np.eye(3), atol=1e-12)
            forward = -p.rotation[:, 2]
            np.testing.assert_allclose(forward, -p.position / np.linalg.norm(p.position),
                                       atol=1e-12)

    def test_deterministic(self):
        a = sample_poses(OrbitConfig(), 5, 11)
        b = sample_poses(OrbitConfig(), 5, 11)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.position, y.position)

    def test_distinct_seeds_are_disjoint(self):
        a = {tuple(p.position) for p in sample_poses(OrbitConfig(), 40, 0)}
        b = {tuple(p.position) for p in sample_poses(OrbitConfig(), 10, 1)}
        assert not a & b


class TestReferenceRender:
    def test_empty_scene_is_background(self):
        s = BlobScene([Blob((0, 0, 0), 0.5, 0.0, (1, 0, 0))], background=(0.3, 0.6, 0.9))
        rgb = reference_render(s, Ray(np.array([0, 0, 4.0]), np.array([0, 0, -1.0]), 2, 6))
        np.testing.assert_array_equal(rgb, [0.3, 0.6, 0.9])

    def test_opaque_blob_shows_albedo(self):
        s = BlobScene([Blob((0, 0, 0), 0.3, 60.0, (0.9, 0.2, 0.4))])
        rgb = reference_render(s, Ray(np.array([0, 0, 4.0]), np.array([0, 0, -1.0]), 2, 6))
        np.testing.assert_allclose(rgb, [0.9, 0.2, 0.4], atol=1e-2)

    def test_self_convergence(self):
        spec = SceneSpec(default_scene())
        o, d = generate_rays(spec.test_poses()[0])
        idx = np.random.default_rng(0).choice(len(o), 300, replace=False)
        a = render_rays(spec.scene, o[idx], d[idx], 2.0, 6.0, 1024)
        b = render_rays(spec.scene, o[idx], d[idx], 2.0, 6.0, 2048)
        assert np.max(np.abs(a - b)) < 1e-3

    def test_error_shrinks_with_samples(self):
        spec = SceneSpec(default_scene())
        o, d = generate_rays(spec.test_poses()[0])
        idx = np.random.default_rng(1).choice(len(o), 200, replace=False)
        truth = render_rays(spec.scene, o[idx], d[idx], 2.0, 6.0, 8192)
        errs = [np.abs(render_rays(spec.scene, o[idx], d[idx], 2.0, 6.0, n) - truth).max()
                for n in (64, 128, 256, 512, 1024)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))

    def test_midpoint_split_multiplicativity(self):
        # composite [near, mid] then [mid, far] on the same partition
        s = default_scene()
        o, d = np.array([0.3, -0.2, 4.0]), np.array([0.0, 0.0, -1.0])
        t = 2.0 + 4.0 * (np.arange(512) + 0.5) / 512
        delta = np.full(512, 4.0 / 512)
        sigma, c = query_field(s, o + t[:, None] * d, d)
        whole = composite(sigma[None], c[None], delta[None], s.background)
        first = composite(sigma[None, :256], c[None, :256], delta[None, :256], (0, 0, 0))
        second = composite(sigma[None, 256:], c[None, 256:], delta[None, 256:], s.background)
        joined = first.rgb + first.transmittance[:, -1:] * second.rgb
        np.testing.assert_allclose(joined, whole.rgb, atol=1e-6)

    def test_rendering_is_bit_identical(self):
        spec = SceneSpec(default_scene())
        o, d = generate_rays(spec.test_poses()[0])
        a = render_rays(spec.scene, o[:500], d[:500], 2.0, 6.0, 256)
        b = render_rays(spec.scene, o[:500], d[:500], 2.0, 6.0, 256)
        np.testing.assert_array_equal(a, b)


def test_scene_file_round_trip(tmp_path):
    spec = SceneSpec(default_scene(), OrbitConfig(width=32, height=24), n_train=7)
    save_scene(spec, tmp_path / "scene.yaml")
    back = load_scene(tmp_path / "scene.yaml")
    assert back.n_train == 7 and back.orbit.width == 32 and back.orbit.height == 24
    np.testing.assert_allclose(back.scene.centers, spec.scene.centers)
    np.testing.assert_allclose(back.scene.lobes, spec.scene.lobes)
    assert "blobs:" in (tmp_path / "scene.yaml").read_text()
