"""MLP layers, deterministic initialization, positivity map, and Adam.

Initialization is fixed so checkpoints are reproducible from a seed:
weights are uniform in +-sqrt(6 / fan_in) drawn row-major from a
SplitMix64 stream, biases start at zero, and the weight matrix feeding a
sine output layer is additionally scaled by 1 / fan_in so the initial
multipliers and potentials stay small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidField
from .rng import SplitMix64

HIDDEN_ACTIVATIONS = ("silu", "tanh")
FINAL_ACTIVATIONS = ("sine", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected network: depth hidden layers of the given width."""

    in_dim: int
    out_dim: int
    width: int = 64
    depth: int = 3
    hidden: str = "silu"
    final: str = "sine"

    def __post_init__(self):
        if min(self.in_dim, self.out_dim, self.width) < 1 or self.depth < 1:
            raise InvalidField("all MLP dimensions must be >= 1")
        if self.hidden not in HIDDEN_ACTIVATIONS:
            raise InvalidField(f"hidden activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.final not in FINAL_ACTIVATIONS:
            raise InvalidField(f"final activation must be one of {FINAL_ACTIVATIONS}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.in_dim] + [self.width] * self.depth + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


def mlp_init(spec: MlpSpec, rng: SplitMix64) -> list[tuple[Tensor, Tensor]]:
    """Deterministic parameters: list of (W, b) leaf tensors per layer."""
    layers = []
    dims = spec.layer_dims
    for li, (fan_in, fan_out) in enumerate(dims):
        bound = math.sqrt(6.0 / fan_in)
        w = np.empty((fan_in, fan_out))
        flat = w.reshape(-1)
        for i in range(flat.size):
            flat[i] = rng.uniform_in(-bound, bound)
        if li == len(dims) - 1 and spec.final == "sine":
            w /= fan_in
        layers.append((ad.parameter(w), ad.parameter(np.zeros(fan_out))))
    return layers


def mlp_apply(layers: list[tuple[Tensor, Tensor]], x: Tensor, spec: MlpSpec) -> Tensor:
    """Forward pass; x has shape (batch, in_dim)."""
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = ad.affine(h, w, b)
        if i < last:
            h = ad.silu(z) if spec.hidden == "silu" else ad.tanh(z)
        else:
            h = ad.sin(z) if spec.final == "sine" else z
    return h


def softplus_positive(raw: Tensor) -> Tensor:
    """Map a raw scalar to (0, inf) via a numerically stable softplus."""
    return ad.softplus(raw)


@dataclass
class AdamState:
    """First/second moments, step counter, and hyperparameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: list[Tensor], lr: float = 1e-3) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            t=0,
            lr=lr,
        )


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """Standard bias-corrected Adam update, applied in place to params."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise InvalidField("parameter/gradient/state length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correct1 = 1.0 - b1**state.t
    correct2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / correct1
        v_hat = state.v[i] / correct2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
