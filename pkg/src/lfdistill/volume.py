"""Point sampling along rays and alpha-compositing quadrature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def stratified_depths(near, far, n, mode="test", rng=None, n_rays=None):
    """Sample ``n`` ascending depths per ray in ``[near, far]``.

    The span is cut into ``n`` equal bins. ``mode="train"`` draws one
    uniform depth inside each bin; ``mode="test"`` returns the bin
    midpoints. ``near``/``far`` may be scalars or per-ray arrays. The result
    has shape ``[n_rays, n]`` (``[n]`` when both bounds are scalars and
    ``n_rays`` is None).
    """
    if n < 1:
        raise ConfigError("need at least one sample per ray")
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    if np.any(near >= far):
        raise ConfigError("near must be smaller than far")
    scalar = near.ndim == 0 and far.ndim == 0 and n_rays is None
    if n_rays is None:
        n_rays = max(near.size, far.size)
    near = np.broadcast_to(near.reshape(-1, 1), (n_rays, 1))
    far = np.broadcast_to(far.reshape(-1, 1), (n_rays, 1))
    k = np.arange(n, dtype=np.float64)
    if mode == "test":
        u = 0.5
    elif mode == "train":
        rng = np.random.default_rng() if rng is None else rng
        u = rng.random((n_rays, n))
    else:
        raise ConfigError(f"unknown sampling mode {mode!r}")
    t = near + (far - near) * ((k + u) / n)
    return t[0] if scalar else t


def interval_lengths(t, far):
    """``delta_i = t_{i+1} - t_i`` with the last interval closed at ``far``."""
    far = np.asarray(far, dtype=t.dtype)
    last = far.reshape(-1, 1) - t[..., -1:] if t.ndim == 2 else np.atleast_1d(far - t[-1])
    return np.concatenate([np.diff(t, axis=-1), last], axis=-1)


@dataclass
class QuadratureSamples:
    """Per-ray samples: depths ``t [R, N]``, densities, colors ``[R, N, 3]``, intervals."""

    t: np.ndarray
    sigma: np.ndarray
    color: np.ndarray
    delta: np.ndarray

    def check(self):
        if np.any(np.diff(self.t, axis=-1) <= 0):
            raise ConfigError("sample depths must be strictly increasing")
        if np.any(self.delta <= 0):
            raise ConfigError("interval lengths must be positive")
        if np.any(self.sigma < 0):
            raise ConfigError("densities must be nonnegative")


@dataclass
class Composite:
    rgb: np.ndarray
    weights: np.ndarray
    opacity: np.ndarray
    transmittance: np.ndarray  # T_1..T_{N+1}; the last entry is the leftover


def composite(sigma, color, delta, background):
    """Alpha-composite ``[R, N]`` densities and ``[R, N, 3]`` colors.

    ``alpha_i = 1 - exp(-sigma_i delta_i)``, ``T_i = prod_{j<i} (1 - alpha_j)``,
    ``w_i = T_i alpha_i`` and the pixel is ``sum w_i c_i + (1 - sum w_i) bg``.
    """
    tau = sigma * delta
    alpha = -np.expm1(-tau)
    # exclusive cumulative optical depth, so T is computed in log space
    depth = np.concatenate([np.zeros_like(tau[..., :1]), np.cumsum(tau, axis=-1)], axis=-1)
    trans = np.exp(-depth)
    weights = trans[..., :-1] * alpha
    opacity = weights.sum(axis=-1)
    bg = np.asarray(background, dtype=color.dtype)
    rgb = np.einsum("rn,rnc->rc", weights, color) + (1.0 - opacity)[..., None] * bg
    return Composite(rgb, weights, opacity, trans)


def composite_ray(samples, background=(0.0, 0.0, 0.0)):
    """Composite a :class:`QuadratureSamples` batch; returns ``(rgb, weights, opacity)``."""
    out = composite(samples.sigma, samples.color, samples.delta, background)
    return out.rgb, out.weights, out.opacity


def composite_backward(comp, color, delta, background, d_rgb):
    """Gradients of the composited color with respect to densities and colors.

    ``d rgb / d sigma_k = delta_k (T_{k+1} e_k - sum_{i>k} w_i e_i)`` with
    ``e_i = c_i - bg``.
    """
    bg = np.asarray(background, dtype=color.dtype)
    d_color = comp.weights[..., None] * d_rgb[:, None, :]
    ge = np.einsum("rnc,rc->rn", color - bg, d_rgb)
    wge = comp.weights * ge
    # sum over i > k, via reversed cumulative sum
    tail = np.cumsum(wge[..., ::-1], axis=-1)[..., ::-1] - wge
    d_sigma = delta * (comp.transmittance[..., 1:] * ge - tail)
    return d_sigma, d_color
