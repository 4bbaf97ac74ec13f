"""Neural building blocks: parameter store, MLP, GRU, attention, Adam.

All functions take and return :class:`~hyperflux.autodiff.Tensor` values so
gradients flow; parameters live in a :class:`ParamStore` keyed by dotted
names.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "ParamStore",
    "Adam",
    "init_uniform",
    "mlp2",
    "fourier_encode",
    "gru_cell",
    "attention_mix",
    "multi_head_attention",
]


class ParamStore:
    """Named learnable tensors with per-parameter gradient accumulators."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = ad.parameter(np.array(value, dtype=np.float64))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self):
        return sorted(self._params)

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: self._params[k].value.copy() for k in self.names()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) ^ set(state)
        if missing:
            raise ValueError(f"parameter names do not match checkpoint: {sorted(missing)}")
        for k, v in state.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self._params[k].value.shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self._params[k].value.shape}")
            self._params[k].value = v.copy()

    def checksum(self) -> float:
        return float(sum(np.sum(t.value) + np.sum(t.value * t.value) for t in self._params.values()))


def init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Adam:
    """Adam with bias correction; gradients are zeroed after each step."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ParamStore):
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name in params.names():
            p = params[name]
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p.value)
                self.v[name] = np.zeros_like(p.value)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        params.zero_grads()


def mlp2(x: Tensor, w0: Tensor, b0: Tensor, w1: Tensor, b1: Tensor) -> Tensor:
    """Two-layer perceptron ``tanh(x @ w0 + b0) @ w1 + b1``."""
    return ad.tanh(x @ w0 + b0) @ w1 + b1


def fourier_encode(dt, omega: Tensor, phi: Tensor) -> Tensor:
    """Cosine time features ``cos(dt * omega + phi)``.

    ``dt`` is a scalar or array of nonnegative elapsed times; the output
    gains a trailing axis of size ``len(omega)``.
    """
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("elapsed time must be nonnegative")
    dt_t = ad.constant(dt[..., None])
    return ad.cos(dt_t * omega + phi)


def gru_cell(x: Tensor, h: Tensor, w: dict[str, Tensor]) -> Tensor:
    """Standard GRU update.

    z = sigm(x Wz + h Uz + bz), r = sigm(x Wr + h Ur + br),
    cand = tanh(x Wh + (r*h) Uh + bh), out = (1-z)*h + z*cand.
    """
    z = ad.sigmoid(x @ w["W_z"] + h @ w["U_z"] + w["b_z"])
    r = ad.sigmoid(x @ w["W_r"] + h @ w["U_r"] + w["b_r"])
    cand = ad.tanh(x @ w["W_h"] + (r * h) @ w["U_h"] + w["b_h"])
    return (1.0 - z) * h + z * cand


def attention_mix(qp: Tensor, kp: Tensor, vp: Tensor, wo: Tensor, heads: int,
                  mask: np.ndarray | None = None) -> Tensor:
    """Head-split scaled dot-product mixing of pre-projected q/k/v.

    qp: (B, d); kp/vp: (B, L, d); returns (B, d) after output projection.
    """
    B, L, d = kp.shape
    if d % heads:
        raise ValueError("model dim must be divisible by head count")
    dh = d // heads
    q4 = ad.reshape(qp, (B, heads, 1, dh))
    k4 = ad.transpose(ad.reshape(kp, (B, L, heads, dh)), (0, 2, 3, 1))
    v4 = ad.transpose(ad.reshape(vp, (B, L, heads, dh)), (0, 2, 1, 3))
    logits = (q4 @ k4) * (1.0 / np.sqrt(dh))
    if mask is not None:
        logits = logits + ad.constant(np.broadcast_to(mask, (B, 1, 1, L)))
    attn = ad.softmax(logits, axis=-1)
    mixed = ad.reshape(attn @ v4, (B, d))
    return mixed @ wo


def multi_head_attention(q: Tensor, keys: Tensor, values: Tensor,
                         wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
                         heads: int, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention with `heads` heads and output projection.

    q: (B, dq) or (dq,); keys/values: (B, L, dk) or (L, dk).  ``mask`` is an
    additive array broadcastable to (B, 1, 1, L) (use large negatives to
    disable slots).  Returns (B, d) or (d,) matching the query's rank.
    """
    single = q.ndim == 1
    if single:
        q = ad.reshape(q, (1, -1))
        keys = ad.reshape(keys, (1,) + keys.shape)
        values = ad.reshape(values, (1,) + values.shape)
    out = attention_mix(q @ wq, keys @ wk, values @ wv, wo, heads, mask)
    return ad.reshape(out, (-1,)) if single else out
