"""Dense layers with hand-written reverse mode, MSE loss and Adam.

Networks in this package are stacks of :class:`DenseLayer`. A forward pass
records each layer's input and output on a :class:`GradientTape`; the owning
network pops those records in reverse to push gradients back. Plain
sequential stacks can use :func:`backward` directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError

ACTIVATIONS = ("relu", "sigmoid", "identity", "softplus")


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    return np.logaddexp(0.0, z).astype(z.dtype, copy=False)


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "softplus":
        return softplus(z)
    return z


@dataclass
class DenseLayer:
    """Affine map followed by an elementwise activation: ``act(x @ W.T + b)``."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    grad_weight: np.ndarray = field(init=False, repr=False)
    grad_bias: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ConfigError(
                f"weight {self.weight.shape} and bias {self.bias.shape} disagree")
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def init(cls, in_dim, out_dim, activation="relu", rng=None, gain=None,
             dtype=np.float32):
        """He-style fan-in initialisation; ``gain`` scales the std further."""
        rng = np.random.default_rng() if rng is None else rng
        std = np.sqrt(2.0 / in_dim) if activation == "relu" else np.sqrt(1.0 / in_dim)
        if gain is not None:
            std *= gain
        w = rng.normal(0.0, std, size=(out_dim, in_dim)).astype(dtype)
        return cls(w, np.zeros(out_dim, dtype=dtype), activation)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def forward(self, x, tape=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigError(f"expected input [B x {self.in_dim}], got {x.shape}")
        z = x @ self.weight.T
        z += self.bias
        y = _activate(z, self.activation)
        if tape is not None:
            # softplus needs the pre-activation; the others recover from y
            tape.record(self, x, z if self.activation == "softplus" else y)
        return y

    def backward(self, x, saved, dy):
        """Accumulate parameter gradients and return d(loss)/dx."""
        if self.activation == "relu":
            dz = dy * (saved > 0)
        elif self.activation == "sigmoid":
            dz = dy * saved * (1 - saved)
        elif self.activation == "softplus":
            dz = dy * sigmoid(saved)
        else:
            dz = dy
        self.grad_weight += dz.T @ x
        self.grad_bias += dz.sum(axis=0)
        return dz @ self.weight

    def zero_grad(self):
        self.grad_weight[...] = 0
        self.grad_bias[...] = 0

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]


class GradientTape:
    """Stack of forward records ``(layer, input, saved)`` in execution order."""

    def __init__(self):
        self._records = []

    def record(self, layer, x, saved):
        self._records.append((layer, x, saved))

    def pop(self):
        if not self._records:
            raise UsageError("backward called without a recorded forward pass")
        return self._records.pop()

    def backprop(self, dy):
        """Pop one record and push ``dy`` through it."""
        layer, x, saved = self.pop()
        return layer.backward(x, saved, dy)

    def __len__(self):
        return len(self._records)


class Sequential:
    """Plain feed-forward stack of dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigError(f"layer widths {a.out_dim} -> {b.in_dim} do not chain")

    @classmethod
    def init(cls, dims, activations, rng=None, dtype=np.float32):
        rng = np.random.default_rng() if rng is None else rng
        return cls(DenseLayer.init(i, o, a, rng, dtype=dtype)
                   for i, o, a in zip(dims[:-1], dims[1:], activations))

    def forward(self, x, tape=None):
        for layer in self.layers:
            x = layer.forward(x, tape)
        return x

    def backward(self, tape, loss_grad):
        return backward(tape, loss_grad)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]


def backward(tape, loss_grad):
    """Drain a tape recorded by a purely sequential stack.

    Gradients accumulate into each layer's ``grad_*`` buffers; the
    gradient with respect to the stack's input is returned.
    """
    if not len(tape):
        raise UsageError("backward called without a recorded forward pass")
    dy = loss_grad
    while len(tape):
        dy = tape.backprop(dy)
    return dy


def mse_loss(pred, target):
    """Return ``(mean loss, per-ray loss)``; per-ray is the channel mean."""
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch {pred.shape} vs {target.shape}")
    per_ray = np.mean(np.square(pred - target), axis=-1)
    return float(np.mean(per_ray)), per_ray


def mse_grad(pred, target):
    """Gradient of the scalar from :func:`mse_loss` with respect to ``pred``."""
    return 2.0 * (pred - target) / pred.size


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr0: float = 5e-4

    @classmethod
    def for_params(cls, params, **kw):
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state, lr):
    """Apply one bias-corrected Adam update in place.

    Returns False, leaving params and state untouched, when any gradient
    is non-finite.
    """
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigError("params, grads and optimizer state are misaligned")
    if not all(np.all(np.isfinite(g)) for g in grads):
        return False
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return True


def lr_schedule(step, total_steps, lr0=5e-4, final_ratio=0.1):
    """Exponential decay from ``lr0`` at step 0 to ``lr0 * final_ratio`` at the end."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr0
    return lr0 * final_ratio ** (step / total_steps)
