"""Deep residual MLP light field: one network query per ray."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import DenseLayer
from .encoding import PositionalEncoding, encode
from .errors import ConfigError
from .volume import stratified_depths

NAMED_CONFIGS = {
    "W256D88": (256, 88),
    "W181D88": (181, 88),
    "W256D44": (256, 44),
    "W363D22": (363, 22),
}


@dataclass(frozen=True)
class StudentConfig:
    width: int
    depth: int
    residual: bool = True

    @property
    def blocks(self):
        return (self.depth - 2) // 2

    @property
    def name(self):
        return f"W{self.width}D{self.depth}" + ("" if self.residual else "-nores")


def build_config(name=None, width=None, depth=None, residual=True):
    """Resolve a named network (``"W181D88"``) or a custom width/depth.

    Depth counts the input layer, two layers per residual block and the
    output head, so ``depth = 2 + 2 * blocks``.
    """
    if name is not None:
        if name in NAMED_CONFIGS:
            width, depth = NAMED_CONFIGS[name]
        else:
            m = re.fullmatch(r"W(\d+)D(\d+)", name)
            if not m:
                raise ConfigError(f"unknown network config {name!r}")
            width, depth = int(m.group(1)), int(m.group(2))
    if width is None or depth is None:
        raise ConfigError("need a config name or both width and depth")
    if depth < 4 or depth % 2:
        raise ConfigError(f"depth must be even and >= 4, got {depth}")
    if width < 1:
        raise ConfigError("width must be positive")
    return StudentConfig(int(width), int(depth), residual)


@dataclass(frozen=True)
class KPointEncoder:
    """Concatenate ``n_points`` samples along the ray, then positionally encode them.

    Train mode draws one depth per stratum; test mode uses stratum midpoints.
    """

    n_points: int = 16
    n_freqs: int = 10
    include_raw: bool = True
    mode: str = "train"

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError("a ray needs at least two points")
        if self.mode not in ("train", "test"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    kind = "kpoint"

    @property
    def pe(self):
        return PositionalEncoding(self.n_freqs, self.include_raw)

    @property
    def raw_dim(self):
        return 3 * self.n_points

    @property
    def out_dim(self):
        return self.pe.out_dim(self.raw_dim)

    def with_mode(self, mode):
        return KPointEncoder(self.n_points, self.n_freqs, self.include_raw, mode)

    def points(self, origins, dirs, near, far, rng=None):
        t = stratified_depths(near, far, self.n_points, self.mode, rng, n_rays=len(origins))
        t = t.astype(origins.dtype)
        return origins[:, None, :] + t[..., None] * dirs[:, None, :]

    def __call__(self, origins, dirs, near, far, rng=None):
        pts = self.points(origins, dirs, near, far, rng)
        return encode(self.pe, pts.reshape(len(origins), -1))


@dataclass(frozen=True)
class PluckerEncoder:
    """Encode the 6-vector ``(d, o x d)``; ignores near/far and sampling mode."""

    n_freqs: int = 10
    include_raw: bool = True
    mode: str = "test"

    kind = "plucker"

    @property
    def pe(self):
        return PositionalEncoding(self.n_freqs, self.include_raw)

    @property
    def raw_dim(self):
        return 6

    @property
    def out_dim(self):
        return self.pe.out_dim(6)

    def with_mode(self, mode):
        return PluckerEncoder(self.n_freqs, self.include_raw, mode)

    def __call__(self, origins, dirs, near=None, far=None, rng=None):
        return encode(self.pe, plucker(origins, dirs))


def plucker(origins, dirs):
    return np.concatenate([dirs, np.cross(origins, dirs)], axis=-1)


def encode_ray(encoder, ray, rng=None):
    o = np.asarray(ray.origin, dtype=np.float64)[None]
    d = np.asarray(ray.direction, dtype=np.float64)[None]
    return encoder(o, d, ray.near, ray.far, rng)[0]


def encoder_to_dict(enc):
    d = asdict(enc)
    d["kind"] = enc.kind
    return d


def encoder_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", "kpoint")
    return (KPointEncoder if kind == "kpoint" else PluckerEncoder)(**d)


class ResidualMlp:
    """Input layer, ``blocks`` two-layer relu blocks with identity skips, sigmoid head.

    With ``residual=False`` the same layers run as a plain stack (the
    ablation variant) and get standard He initialisation throughout.
    """

    def __init__(self, config, in_dim, rng=None, dtype=np.float32):
        self.config = config
        self.in_dim = in_dim
        rng = np.random.default_rng(0) if rng is None else rng
        w = config.width
        # shrink each block's residual branch so the stream grows ~e-fold over all blocks
        branch_gain = 1.0 / np.sqrt(max(config.blocks, 1)) if config.residual else None
        self.input = DenseLayer.init(in_dim, w, "relu", rng, dtype=dtype)
        self.blocks = [
            (DenseLayer.init(w, w, "relu", rng, dtype=dtype),
             DenseLayer.init(w, w, "relu", rng, gain=branch_gain, dtype=dtype))
            for _ in range(config.blocks)
        ]
        self.head = DenseLayer.init(w, 3, "sigmoid", rng, gain=0.1, dtype=dtype)
        self.queries = 0

    @property
    def layers(self):
        return [self.input] + [l for b in self.blocks for l in b] + [self.head]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x, tape=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigError(f"expected encoded rays [B x {self.in_dim}], got {x.shape}")
        self.queries += len(x)
        h = self.input.forward(x, tape)
        for first, second in self.blocks:
            out = second.forward(first.forward(h, tape), tape)
            h = h + out if self.config.residual else out
        return self.head.forward(h, tape)

    def backward(self, tape, d_out):
        dh = tape.backprop(d_out)
        for _ in self.blocks:
            d_branch = tape.backprop(tape.backprop(dh))
            dh = dh + d_branch if self.config.residual else d_branch
        return tape.backprop(dh)


def student_forward(model, batch):
    return model.forward(batch)


def render_rays(model, encoder, origins, dirs, near, far, chunk=8192):
    """Test-mode colors ``[R, 3]`` from one query per ray."""
    enc = encoder.with_mode("test")
    dtype = model.input.weight.dtype
    origins = np.asarray(origins, dtype=dtype)
    dirs = np.asarray(dirs, dtype=dtype)
    out = np.empty((len(origins), 3), dtype=dtype)
    for s in range(0, len(origins), chunk):
        out[s:s + chunk] = model.forward(enc(origins[s:s + chunk], dirs[s:s + chunk], near, far))
    return out


def render_image_student(model, encoder, pose):
    from .scene import generate_rays

    o, d = generate_rays(pose)
    return render_rays(model, encoder, o, d, pose.near, pose.far).reshape(
        pose.height, pose.width, 3)
