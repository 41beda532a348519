from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PositionalEncoding:
    """Sin/cos features at frequencies ``2^l * pi`` for ``l < n_freqs``.

    Each input scalar ``p`` maps to ``[p], sin(pi p), cos(pi p), ...,
    sin(2^(L-1) pi p), cos(2^(L-1) pi p)``, grouped per scalar.
    """

    n_freqs: int = 10
    include_raw: bool = True

    def __post_init__(self):
        if self.n_freqs < 0:
            raise ConfigError("number of frequency octaves must be >= 0")

    @property
    def dim_per_scalar(self):
        return 2 * self.n_freqs + int(self.include_raw)

    def out_dim(self, k):
        return k * self.dim_per_scalar

    def __call__(self, v):
        return encode(self, v)


def encode(pe, v):
    """Encode the last axis of ``v``; output last axis is ``k * (2L + raw)``."""
    v = np.asarray(v)
    freqs = (2.0 ** np.arange(pe.n_freqs) * np.pi).astype(v.dtype)
    arg = v[..., :, None] * freqs
    parts = np.empty(v.shape + (pe.dim_per_scalar,), dtype=v.dtype)
    off = int(pe.include_raw)
    if pe.include_raw:
        parts[..., 0] = v
    parts[..., off::2] = np.sin(arg)
    parts[..., off + 1::2] = np.cos(arg)
    return parts.reshape(v.shape[:-1] + (v.shape[-1] * pe.dim_per_scalar,))
