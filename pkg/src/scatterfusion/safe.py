"""Scale-adaptive feature enhancement.

Per-scale feature maps ``H[j]`` (shape ``(..., J, T, D)``) are summarised by
their temporal mean, scored with a single weight vector, and mixed with
softmax weights. A sigmoid gate driven by the normalised forecast horizon
rescales the mixture channel-wise.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ContractError, DimensionError
from .layers import Module, param


def context_vectors(H: Tensor) -> Tensor:
    """Temporal mean of each scale: ``(..., J, T, D) -> (..., J, D)``."""
    return dc.mean(dc.as_tensor(H), axis=-2)


def scale_attention(h: Tensor, w_alpha: Tensor) -> Tensor:
    """Softmax over scales of the scalar scores ``h[j] . w_alpha``."""
    h = dc.as_tensor(h)
    logits = dc.matmul(h, dc.reshape(dc.as_tensor(w_alpha), (-1, 1)))
    return dc.softmax(dc.reshape(logits, logits.shape[:-1]), axis=-1)


def horizon_gate(horizon: int, w_gamma: Tensor, b_gamma: Tensor, horizon_max: int) -> Tensor:
    if not 1 <= horizon <= horizon_max:
        raise ContractError(f"horizon {horizon} outside [1, {horizon_max}]")
    return dc.sigmoid(dc.as_tensor(w_gamma) * (horizon / horizon_max) + b_gamma)


def enhance(H: Tensor, alpha: Tensor, gamma: Tensor) -> Tensor:
    """``(sum_j alpha_j H_j) * gamma`` with ``gamma`` broadcast over time."""
    H, alpha, gamma = dc.as_tensor(H), dc.as_tensor(alpha), dc.as_tensor(gamma)
    if H.shape[-3] != alpha.shape[-1] or H.shape[-1] != gamma.shape[-1]:
        raise DimensionError(
            f"features {H.shape} do not match weights {alpha.shape} and gate {gamma.shape}"
        )
    weights = dc.reshape(alpha, alpha.shape + (1, 1))
    mixed = dc.tsum(H * weights, axis=-3)
    return mixed * gamma


class SAFE(Module):
    def __init__(self, dim: int, rng: np.random.Generator, enabled: bool = True):
        self.w_alpha = param(rng.normal(0.0, 1.0 / np.sqrt(dim), size=dim))
        self.w_gamma = param(np.zeros(dim))
        self.b_gamma = param(np.full(dim, 2.0))
        self.enabled = enabled
        self.last_alpha: np.ndarray | None = None

    def named_parameters(self, prefix=""):
        return super().named_parameters(prefix) if self.enabled else {}

    def __call__(self, H: Tensor, horizon: int, horizon_max: int) -> Tensor:
        J = H.shape[-3]
        if not self.enabled:
            alpha = Tensor(np.full(H.shape[:-3] + (J,), 1.0 / J))
            gamma = Tensor(np.ones(H.shape[-1]))
        else:
            alpha = scale_attention(context_vectors(H), self.w_alpha)
            gamma = horizon_gate(horizon, self.w_gamma, self.b_gamma, horizon_max)
        self.last_alpha = alpha.data.copy()
        return enhance(H, alpha, gamma)
