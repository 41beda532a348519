"""Analytic Gaussian-blob scenes, pinhole cameras and a dense-quadrature renderer.

The blob field has a closed form, so images rendered here act as ground
truth for both the radiance-field teacher and the light-field student.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, UsageError
from .volume import composite, interval_lengths, stratified_depths

# keeps the color mix defined (and equal to the background) in empty space
_EMPTY_DENSITY = 1e-9


@dataclass(frozen=True)
class Blob:
    center: tuple
    scale: float
    peak_density: float
    albedo: tuple
    kappa: float = 0.0
    lobe: tuple = (0.0, 0.0, 1.0)


@dataclass
class BlobScene:
    blobs: list
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.blobs:
            raise ConfigError("a scene needs at least one blob")
        self.centers = np.array([b.center for b in self.blobs], dtype=np.float64)
        self.scales = np.array([b.scale for b in self.blobs], dtype=np.float64)
        self.peaks = np.array([b.peak_density for b in self.blobs], dtype=np.float64)
        self.albedos = np.array([b.albedo for b in self.blobs], dtype=np.float64)
        self.kappas = np.array([b.kappa for b in self.blobs], dtype=np.float64)
        lobes = np.array([b.lobe for b in self.blobs], dtype=np.float64)
        if np.any(np.abs(np.linalg.norm(lobes, axis=1) - 1) > 1e-6):
            raise ConfigError("lobe directions must be unit vectors")
        self.lobes = lobes
        if np.any(self.scales <= 0) or np.any(self.peaks < 0):
            raise ConfigError("blob scales must be > 0 and peak densities >= 0")
        if np.any((self.albedos < 0) | (self.albedos > 1)) or np.any(
                (self.kappas < 0) | (self.kappas > 1)):
            raise ConfigError("albedo and kappa must lie in [0, 1]")
        bg = np.asarray(self.background, dtype=np.float64)
        if np.any((bg < 0) | (bg > 1)):
            raise ConfigError("background must lie in [0, 1]")
        self.background = tuple(float(c) for c in bg)


def query_field(scene, points, view_dirs):
    """Density ``[...]`` and color ``[..., 3]`` at ``points`` seen along ``view_dirs``."""
    points = np.asarray(points, dtype=np.float64)
    view_dirs = np.broadcast_to(np.asarray(view_dirs, dtype=np.float64), points.shape)
    diff = points[..., None, :] - scene.centers
    r2 = np.einsum("...mk,...mk->...m", diff, diff)
    per_blob = scene.peaks * np.exp(-r2 / (2.0 * scene.scales ** 2))
    sigma = per_blob.sum(axis=-1)
    cosine = np.maximum(view_dirs @ scene.lobes.T, 0.0)
    shade = (1.0 - scene.kappas + scene.kappas * cosine) ** 2
    mixed = np.einsum("...m,...mc->...c", per_blob * shade, scene.albedos)
    color = (mixed + _EMPTY_DENSITY * np.asarray(scene.background)) / (
        sigma + _EMPTY_DENSITY)[..., None]
    return sigma, color


@dataclass
class CameraPose:
    """Camera-to-world pose of a pinhole camera looking down its local -z axis."""

    position: np.ndarray
    rotation: np.ndarray
    focal: float
    width: int
    height: int
    near: float
    far: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-6):
            raise ConfigError("camera rotation is not orthonormal")
        if not 0 < self.near < self.far:
            raise ConfigError("need 0 < near < far")


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float


def _camera_dirs(pose, rows, cols):
    x = (cols + 0.5 - pose.width / 2.0) / pose.focal
    y = -(rows + 0.5 - pose.height / 2.0) / pose.focal
    d = np.stack([x, y, -np.ones_like(x)], axis=-1) @ pose.rotation.T
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def generate_ray(pose, pixel):
    """Ray through the center of ``pixel = (row, col)``."""
    row, col = pixel
    if not (0 <= row < pose.height and 0 <= col < pose.width):
        raise UsageError(f"pixel {pixel} outside {pose.height}x{pose.width} image")
    d = _camera_dirs(pose, np.array([row], float), np.array([col], float))[0]
    return Ray(pose.position.copy(), d, pose.near, pose.far)


def generate_rays(pose):
    """All pixel rays of ``pose`` in row-major order: origins and directions ``[H*W, 3]``."""
    rows, cols = np.meshgrid(np.arange(pose.height, dtype=float),
                             np.arange(pose.width, dtype=float), indexing="ij")
    d = _camera_dirs(pose, rows.ravel(), cols.ravel())
    o = np.broadcast_to(pose.position, d.shape).copy()
    return o, d


def render_rays(scene, origins, dirs, near, far, n_quad=1024, chunk=2048):
    """Reference colors ``[R, 3]`` from ``n_quad`` evenly spaced samples per ray."""
    if n_quad < 2:
        raise ConfigError("reference quadrature needs at least two samples")
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    out = np.empty((len(origins), 3))
    t_all = stratified_depths(near, far, n_quad, "test", n_rays=1)
    delta = interval_lengths(t_all, far)
    step = max(1, chunk * 64 // n_quad)
    for s in range(0, len(origins), step):
        o, d = origins[s:s + step], dirs[s:s + step]
        pts = o[:, None, :] + t_all[0][None, :, None] * d[:, None, :]
        sigma, color = query_field(scene, pts, d[:, None, :])
        out[s:s + step] = composite(sigma, color, np.broadcast_to(delta, sigma.shape),
                                    scene.background).rgb
    return out


def reference_render(scene, ray, n_quad=1024):
    """Ground-truth color of a single :class:`Ray`."""
    return render_rays(scene, ray.origin, ray.direction, ray.near, ray.far, n_quad)[0]


def render_reference_image(scene, pose, n_quad=1024):
    o, d = generate_rays(pose)
    rgb = render_rays(scene, o, d, pose.near, pose.far, n_quad)
    return rgb.reshape(pose.height, pose.width, 3)


@dataclass
class OrbitConfig:
    """Cameras on a sphere of ``radius`` around the origin, inside an elevation band.

    With ``jitter`` off, pose ``k`` of ``n`` sits at ``azimuth_start + 360 k / n``
    degrees and elevation ``elevation``. With it on, a seeded generator
    shifts each azimuth within its slot and each elevation within
    ``elevation +- elevation_band``.
    """

    radius: float = 4.0
    elevation: float = 30.0
    elevation_band: float = 15.0
    azimuth_start: float = 0.0
    jitter: bool = True
    focal: float = 88.0
    width: int = 64
    height: int = 64
    near: float = 2.0
    far: float = 6.0


def look_at(position, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    back = np.asarray(position, float) - np.asarray(target, float)
    back /= np.linalg.norm(back)
    right = np.cross(up, back)
    right /= np.linalg.norm(right)
    cam_up = np.cross(back, right)
    return np.stack([right, cam_up, back], axis=1)


def sample_poses(orbit, n, seed=0):
    if n < 1:
        raise ConfigError("need at least one pose")
    rng = np.random.default_rng(seed)
    az_jit = rng.random(n) if orbit.jitter else np.zeros(n)
    el_jit = rng.uniform(-1, 1, n) if orbit.jitter else np.zeros(n)
    poses = []
    for k in range(n):
        az = np.radians(orbit.azimuth_start + 360.0 * (k + az_jit[k]) / n)
        el = np.radians(orbit.elevation + orbit.elevation_band * el_jit[k])
        pos = orbit.radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                                       np.sin(el)])
        poses.append(CameraPose(pos, look_at(pos), orbit.focal, orbit.width, orbit.height,
                                orbit.near, orbit.far))
    return poses


@dataclass
class SceneSpec:
    """Everything a scene file describes: the field, the orbit and the split sizes."""

    scene: BlobScene
    orbit: OrbitConfig = field(default_factory=OrbitConfig)
    n_train: int = 40
    n_test: int = 10
    train_seed: int = 0
    test_seed: int = 1

    def train_poses(self):
        return sample_poses(self.orbit, self.n_train, self.train_seed)

    def test_poses(self):
        return sample_poses(self.orbit, self.n_test, self.test_seed)


def default_scene():
    """Five overlapping blobs, two of them with strong view-dependent lobes."""
    s = 1 / np.sqrt(3)
    return BlobScene([
        Blob((0.0, 0.0, 0.0), 0.45, 12.0, (0.85, 0.25, 0.2)),
        Blob((0.7, 0.3, 0.2), 0.3, 18.0, (0.2, 0.7, 0.3), 0.8, (s, s, s)),
        Blob((-0.6, 0.5, -0.1), 0.35, 10.0, (0.25, 0.35, 0.9)),
        Blob((0.1, -0.7, 0.4), 0.25, 25.0, (0.95, 0.85, 0.2), 0.6, (0.0, -1.0, 0.0)),
        Blob((-0.2, -0.2, -0.6), 0.3, 8.0, (0.6, 0.3, 0.7)),
    ], background=(1.0, 1.0, 1.0))


def _floats(v):
    return [float(x) for x in v]


def scene_to_dict(spec):
    return {
        "background": _floats(spec.scene.background),
        "blobs": [{"center": _floats(b.center), "scale": float(b.scale),
                   "peak_density": float(b.peak_density), "albedo": _floats(b.albedo),
                   "kappa": float(b.kappa), "lobe": _floats(b.lobe)}
                  for b in spec.scene.blobs],
        "orbit": dict(vars(spec.orbit)),
        "n_train": spec.n_train, "n_test": spec.n_test,
        "train_seed": spec.train_seed, "test_seed": spec.test_seed,
    }


def scene_from_dict(d):
    blobs = []
    for b in d["blobs"]:
        lobe = np.asarray(b.get("lobe", (0.0, 0.0, 1.0)), float)
        blobs.append(Blob(tuple(b["center"]), float(b["scale"]), float(b["peak_density"]),
                          tuple(b["albedo"]), float(b.get("kappa", 0.0)),
                          tuple(lobe / np.linalg.norm(lobe))))
    scene = BlobScene(blobs, tuple(d.get("background", (1.0, 1.0, 1.0))))
    orbit = OrbitConfig(**d.get("orbit", {}))
    keys = ("n_train", "n_test", "train_seed", "test_seed")
    return SceneSpec(scene, orbit, **{k: d[k] for k in keys if k in d})


def load_scene(path):
    with open(path) as f:
        return scene_from_dict(yaml.safe_load(f))


def save_scene(spec, path):
    Path(path).write_text(yaml.safe_dump(scene_to_dict(spec), sort_keys=False))
