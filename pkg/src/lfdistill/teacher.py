"""Radiance-field teacher: NeRF-style MLP, ray marching and training."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import AdamState, DenseLayer, GradientTape, adam_step, lr_schedule, mse_grad, mse_loss
from .encoding import PositionalEncoding, encode
from .errors import ConfigError, DivergenceError
from .volume import composite, composite_backward, interval_lengths, stratified_depths

log = logging.getLogger(__name__)


@dataclass
class TeacherConfig:
    width: int = 256
    depth: int = 8
    skip: int = 5
    pos_freqs: int = 10
    dir_freqs: int = 4
    n_samples: int = 192
    batch_rays: int = 1024
    iters: int = 100_000
    lr: float = 5e-4
    lr_final_ratio: float = 0.1
    seed: int = 0
    eval_every: int = 1000
    chunk: int = 32_768  # points per forward chunk while rendering

    def __post_init__(self):
        if not 0 < self.skip < self.depth:
            raise ConfigError("skip layer must fall inside the trunk")


class NerfMlp:
    """Trunk of ``depth`` relu layers with the encoded position re-injected at ``skip``.

    A softplus head gives density; a view-conditioned branch gives color.
    """

    def __init__(self, config=None, rng=None, dtype=np.float32):
        self.config = cfg = config or TeacherConfig()
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.pos_enc = PositionalEncoding(cfg.pos_freqs, True)
        self.dir_enc = PositionalEncoding(cfg.dir_freqs, True)
        pdim, ddim, w = self.pos_enc.out_dim(3), self.dir_enc.out_dim(3), cfg.width
        self.trunk = []
        for i in range(cfg.depth):
            in_dim = pdim if i == 0 else w + (pdim if i == cfg.skip else 0)
            self.trunk.append(DenseLayer.init(in_dim, w, "relu", rng, dtype=dtype))
        self.density = DenseLayer.init(w, 1, "softplus", rng, dtype=dtype)
        self.feature = DenseLayer.init(w, w, "identity", rng, dtype=dtype)
        self.view = DenseLayer.init(w + ddim, w // 2, "relu", rng, dtype=dtype)
        self.rgb = DenseLayer.init(w // 2, 3, "sigmoid", rng, dtype=dtype)

    @property
    def layers(self):
        return self.trunk + [self.density, self.feature, self.view, self.rgb]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, pos_feat, dir_feat, tape=None):
        """Map encoded positions and directions ``[P, .]`` to ``(sigma [P], rgb [P, 3])``."""
        h = pos_feat
        for i, layer in enumerate(self.trunk):
            if i == self.config.skip:
                h = np.concatenate([h, pos_feat], axis=1)
            h = layer.forward(h, tape)
        sigma = self.density.forward(h, tape)[:, 0]
        feat = self.feature.forward(h, tape)
        v = self.view.forward(np.concatenate([feat, dir_feat], axis=1), tape)
        return sigma, self.rgb.forward(v, tape)

    def backward(self, tape, d_sigma, d_rgb):
        """Accumulate parameter gradients from ``d_sigma [P]`` and ``d_rgb [P, 3]``."""
        w = self.config.width
        dv = tape.backprop(d_rgb)
        d_feat = tape.backprop(dv)[:, :w]
        dh = tape.backprop(d_feat)
        dh += tape.backprop(d_sigma[:, None])
        for i in range(self.config.depth - 1, -1, -1):
            dh = tape.backprop(dh)
            if i == self.config.skip:
                dh = dh[:, :w]

    def query(self, points, dirs, tape=None):
        pf = encode(self.pos_enc, points)
        df = encode(self.dir_enc, dirs)
        return self.forward(pf, df, tape)


def _march(model, origins, dirs, near, far, n_samples, mode, rng, tape=None):
    """Sample, query and composite; returns what the backward pass needs."""
    r = len(origins)
    t = stratified_depths(near, far, n_samples, mode, rng, n_rays=r)
    delta = interval_lengths(t, far).astype(origins.dtype)
    t = t.astype(origins.dtype)
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    view = np.broadcast_to(dirs[:, None, :], pts.shape)
    sigma, rgb = model.query(pts.reshape(-1, 3), view.reshape(-1, 3), tape)
    return sigma.reshape(r, n_samples), rgb.reshape(r, n_samples, 3), delta


def render_rays(model, origins, dirs, near, far, background, n_samples=None):
    """Test-mode colors ``[R, 3]`` from evenly spaced samples.

    Every chunk is padded to the same ray count: BLAS picks kernels by
    matrix size, and a fixed size makes each ray's color independent of
    which other rays share its batch.
    """
    cfg = model.config
    n_samples = n_samples or cfg.n_samples
    dtype = model.trunk[0].weight.dtype
    origins = np.asarray(origins, dtype=dtype)
    dirs = np.asarray(dirs, dtype=dtype)
    out = np.empty((len(origins), 3), dtype=dtype)
    step = max(1, cfg.chunk // n_samples)
    for s in range(0, len(origins), step):
        o, d = origins[s:s + step], dirs[s:s + step]
        n = len(o)
        if n < step:
            o = np.concatenate([o, np.repeat(o[:1], step - n, axis=0)])
            d = np.concatenate([d, np.repeat(d[:1], step - n, axis=0)])
        sigma, rgb, delta = _march(model, o, d, near, far, n_samples, "test", None)
        out[s:s + n] = composite(sigma, rgb, delta, background).rgb[:n]
    return out


def render_image(model, pose, background, n_samples=None):
    """Render ``pose``; returns ``(image [H, W, 3], network queries issued)``."""
    from .scene import generate_rays

    n_samples = n_samples or model.config.n_samples
    o, d = generate_rays(pose)
    rgb = render_rays(model, o, d, pose.near, pose.far, background, n_samples)
    return rgb.reshape(pose.height, pose.width, 3), len(o) * n_samples


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (step, train psnr, test psnr)
    seconds: float = 0.0


def train_step(model, opt, origins, dirs, targets, near, far, background, rng, lr):
    cfg = model.config
    tape = GradientTape()
    model.zero_grad()
    sigma, rgb, delta = _march(model, origins, dirs, near, far, cfg.n_samples,
                               "train", rng, tape)
    comp = composite(sigma, rgb, delta, background)
    loss, _ = mse_loss(comp.rgb, targets)
    if not np.isfinite(loss):
        raise DivergenceError(f"teacher loss became {loss}")
    d_pix = mse_grad(comp.rgb, targets)
    d_sigma, d_rgb = composite_backward(comp, rgb, delta, background, d_pix)
    model.backward(tape, d_sigma.reshape(-1).astype(rgb.dtype),
                   d_rgb.reshape(-1, 3).astype(rgb.dtype))
    if not adam_step(model.parameters(), model.gradients(), opt, lr):
        raise DivergenceError("non-finite teacher gradient")
    return loss


def train_teacher(images, poses, config=None, background=(1.0, 1.0, 1.0),
                  test_images=None, test_poses=None, callback=None):
    """Fit a :class:`NerfMlp` to posed images by photometric MSE.

    ``images`` is ``[n, H, W, 3]`` in [0, 1]. Rays are drawn uniformly over
    all pixels of all images each step.
    """
    from .metrics import psnr
    from .scene import generate_rays

    cfg = config or TeacherConfig()
    if len(images) < 1:
        raise ConfigError("need at least one training image")
    rng = np.random.default_rng(cfg.seed)
    model = NerfMlp(cfg, rng)
    opt = AdamState.for_params(model.parameters(), lr0=cfg.lr)
    rays = [generate_rays(p) for p in poses]
    origins = np.concatenate([o for o, _ in rays]).astype(np.float32)
    dirs = np.concatenate([d for _, d in rays]).astype(np.float32)
    pixels = np.asarray(images, dtype=np.float32).reshape(-1, 3)
    near, far = poses[0].near, poses[0].far
    hist = TrainLog()
    t0 = time.perf_counter()
    for step in range(cfg.iters):
        idx = rng.integers(0, len(pixels), cfg.batch_rays)
        lr = lr_schedule(step, cfg.iters, cfg.lr, cfg.lr_final_ratio)
        loss = train_step(model, opt, origins[idx], dirs[idx], pixels[idx], near, far,
                          background, rng, lr)
        hist.steps.append(step)
        hist.losses.append(loss)
        last = step == cfg.iters - 1
        if cfg.eval_every and ((step + 1) % cfg.eval_every == 0 or last):
            test_psnr = None
            if test_images is not None:
                preds = [render_image(model, p, background)[0] for p in test_poses]
                test_psnr = psnr(np.stack(preds), np.asarray(test_images))
            train_psnr = -10 * np.log10(max(loss, 1e-30))
            hist.evals.append((step + 1, train_psnr, test_psnr))
            log.info("teacher step %d loss %.3e train %.2f dB test %s", step + 1, loss,
                     train_psnr, "-" if test_psnr is None else f"{test_psnr:.2f} dB")
        if callback is not None:
            callback(step, model, loss)
    hist.seconds = time.perf_counter() - t0
    return model, hist


def teacher_config_echo(cfg):
    echo = asdict(cfg)
    echo["quadrature"] = "alpha=1-exp(-sigma*delta); T=exp(-cumsum); last delta=far-t_N"
    echo["density_activation"] = "softplus"
    return echo
