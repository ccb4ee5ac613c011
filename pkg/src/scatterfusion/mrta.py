"""Multi-resolution temporal attention.

Each stride ``r`` mean-pools the sequence, runs single-head scaled
dot-product attention on the pooled view, and linearly interpolates the
result back to full length. Views are mixed with softmax weights.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, ContractError, DimensionError
from .layers import LayerNorm, Linear, Module, param


def pool(H: Tensor, r: int) -> Tensor:
    """Mean over consecutive windows of ``r`` steps along axis -2.

    A trailing partial window is averaged over the steps it actually has.
    """
    if r < 1:
        raise ContractError(f"stride must be >= 1, got {r}")
    H = dc.as_tensor(H)
    if r == 1:
        return H
    T, D = H.shape[-2], H.shape[-1]
    n = -(-T // r)
    pad = n * r - T
    if not pad:
        return dc.tsum(dc.reshape(H, H.shape[:-2] + (n, r, D)), axis=-2) * (1.0 / r)
    if pad:
        H = dc.concat([H, Tensor(np.zeros(H.shape[:-2] + (pad, D)))], axis=-2)
    counts = np.full(n, float(r))
    counts[-1] = r - pad
    summed = dc.tsum(dc.reshape(H, H.shape[:-2] + (n, r, D)), axis=-2)
    return summed * Tensor((1.0 / counts)[:, None])


# query rows per block when attention runs without a gradient tape
ATTENTION_BLOCK = 128


def attention(
    H: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, record: bool = True
) -> tuple[Tensor, Tensor | None]:
    """Return ``(C, A)`` with ``A = softmax(Q K^T / sqrt(d))`` and ``C = A V``.

    With ``record=False`` and no gradient tape, the weights are never stored:
    query rows are processed in blocks and ``A`` is returned as ``None``.
    """
    d = wq.shape[-1]
    # scale the (T, d) queries rather than the (T, T) scores
    q = dc.matmul(H, wq) * (1.0 / np.sqrt(d))
    k, v = dc.matmul(H, wk), dc.matmul(H, wv)
    if not (q.requires_grad or record):
        return Tensor(_blocked_attention(q.data, k.data, v.data)), None
    scores = dc.matmul(q, dc.swapaxes(k, -1, -2))
    A = dc.softmax(scores, axis=-1)
    return dc.matmul(A, v), A


def _blocked_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    kt = np.swapaxes(k, -1, -2)
    out = np.empty(q.shape[:-1] + (v.shape[-1],))
    for i in range(0, q.shape[-2], ATTENTION_BLOCK):
        s = q[..., i : i + ATTENTION_BLOCK, :] @ kt
        s -= s.max(axis=-1, keepdims=True)
        np.exp(s, out=s)
        # normalise the (rows, d) product instead of the (rows, T) weights
        out[..., i : i + ATTENTION_BLOCK, :] = (s @ v) / s.sum(axis=-1, keepdims=True)
    return out


resolution_attention = attention


def upsample(C: Tensor, length: int, r: int) -> Tensor:
    """Linear interpolation from pooled index ``i`` (centred at ``r*i + (r-1)/2``)."""
    C = dc.as_tensor(C)
    n = C.shape[-2]
    if length < n:
        raise ContractError(f"cannot upsample {n} steps to {length}")
    if r == 1 and n == length:
        return C
    pos = np.clip((np.arange(length) - (r - 1) / 2.0) / r, 0.0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = (pos - lo)[:, None]
    return dc.take(C, lo, axis=-2) * Tensor(1.0 - frac) + dc.take(C, hi, axis=-2) * Tensor(frac)


def combine(views: list[Tensor], w_logits: Tensor) -> Tensor:
    shapes = {v.shape for v in views}
    if len(shapes) != 1:
        raise DimensionError(f"views have mismatched shapes {sorted(shapes)}")
    if len(views) != w_logits.shape[-1]:
        raise DimensionError(f"{len(views)} views but {w_logits.shape[-1]} combine weights")
    w = dc.softmax(dc.as_tensor(w_logits), axis=-1)
    out = views[0] * w[0]
    for i in range(1, len(views)):
        out = out + views[i] * w[i]
    return out


def validate_strides(strides) -> list[int]:
    strides = [int(r) for r in strides]
    if not strides or any(r < 1 for r in strides) or any(b <= a for a, b in zip(strides, strides[1:])):
        raise ConfigError(f"strides must be positive and strictly increasing, got {strides}")
    return strides


class MRTA(Module):
    """One multi-resolution attention block with residual and layer norm."""

    def __init__(self, dim: int, head_dim: int, strides, rng: np.random.Generator):
        self.strides = validate_strides(strides)
        s = 1.0 / np.sqrt(dim)
        self.wq = [param(rng.uniform(-s, s, (dim, head_dim))) for _ in self.strides]
        self.wk = [param(rng.uniform(-s, s, (dim, head_dim))) for _ in self.strides]
        self.wv = [param(rng.uniform(-s, s, (dim, head_dim))) for _ in self.strides]
        self.w_logits = param(np.zeros(len(self.strides)))
        self.proj = Linear(head_dim, dim, rng)
        self.norm = LayerNorm(dim)
        # keep each resolution's attention matrix after a forward pass
        self.record = False
        self.last_attention: list[np.ndarray] = []
        self.last_weights: np.ndarray | None = None

    def mix(self, H: Tensor) -> Tensor:
        L = H.shape[-2]
        views, self.last_attention = [], []
        for i, r in enumerate(self.strides):
            C, A = attention(pool(H, r), self.wq[i], self.wk[i], self.wv[i], self.record)
            if A is not None:
                self.last_attention.append(A.data)
            views.append(upsample(C, L, r))
        out = combine(views, self.w_logits)
        self.last_weights = dc.softmax(Tensor(self.w_logits.data)).data
        return out

    def __call__(self, H: Tensor) -> Tensor:
        return self.norm(H + self.proj(self.mix(H)))
