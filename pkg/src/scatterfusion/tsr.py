"""Trend / seasonal / residual decomposition and the structure-aware loss.

The decomposition is a fixed linear map of the series (time on axis -2):

* trend: centred moving average over one period, reflect-padded
  (window ``p`` for odd ``p``, the symmetric ``2 x p`` average for even ``p``);
* seasonal: per-phase mean of the detrended series over the steps whose
  average needed no padding, re-centred so each period sums to zero;
* residual: whatever is left, so the three parts add back exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ContractError, DimensionError


@dataclass(frozen=True)
class LossWeights:
    lambda_trend: float = 1.0
    lambda_seasonal: float = 1.0
    lambda_residual: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for name in ("lambda_trend", "lambda_seasonal", "lambda_residual", "beta"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")


@dataclass
class TSRComponents:
    trend: Tensor
    seasonal: Tensor
    residual: Tensor
    period: int

    def total(self) -> np.ndarray:
        return self.trend.data + self.seasonal.data + self.residual.data


def _moving_average_weights(period: int) -> np.ndarray:
    if period % 2:
        return np.full(period, 1.0 / period)
    w = np.full(period + 1, 1.0 / period)
    w[0] = w[-1] = 0.5 / period
    return w


@lru_cache(maxsize=64)
def decomposition_operators(T: int, period: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``(M_trend, M_seasonal)`` of shape ``(T, T)``."""
    if not 1 <= period <= T / 2:
        raise ContractError(f"period {period} must lie in [1, {T // 2}] for length {T}")
    w = _moving_average_weights(period)
    half = len(w) // 2
    idx = np.pad(np.arange(T), (half, half), mode="reflect")
    trend = np.zeros((T, T))
    for t in range(T):
        np.add.at(trend[t], idx[t : t + len(w)], w)
    phase = np.arange(T) % period
    # phase means use only steps whose moving average needed no padding
    inner = np.zeros(T, dtype=bool)
    inner[half : T - half] = True
    counts = np.bincount(phase[inner], minlength=period)[phase]
    same = (phase[:, None] == phase[None, :]) & inner[None, :]
    per_phase = same / counts[None, :]
    cycle_mean = np.broadcast_to(inner / (period * counts), (T, T))
    seasonal = (per_phase - cycle_mean) @ (np.eye(T) - trend)
    return trend, seasonal


def decompose(x, period: int) -> TSRComponents:
    """Split ``x`` (time on axis -2, channels last) into three additive parts."""
    x = dc.as_tensor(x)
    T = x.shape[-2]
    trend_op, seasonal_op = decomposition_operators(T, int(period))
    trend = dc.matmul(Tensor(trend_op), x)
    seasonal = dc.matmul(Tensor(seasonal_op), x)
    residual = x - trend - seasonal
    return TSRComponents(trend, seasonal, residual, int(period))


def decompose_series(x: np.ndarray, period: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Same split as :func:`decompose` without building ``T x T`` operators.

    Meant for long series outside the training loop; returns plain arrays
    ``(trend, seasonal, residual)`` with time on axis 0.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    T = x.shape[0]
    if not 1 <= period <= T / 2:
        raise ContractError(f"period {period} must lie in [1, {T // 2}] for length {T}")
    w = _moving_average_weights(period)
    half = len(w) // 2
    padded = np.pad(x, ((half, half), (0, 0)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(w), axis=0)
    trend = windows @ w[::-1]
    detrended = (x - trend)[half : T - half]
    phase = np.arange(half, T - half) % period
    sums = np.zeros((period, x.shape[1]))
    np.add.at(sums, phase, detrended)
    means = sums / np.bincount(phase, minlength=period)[:, None]
    seasonal = (means - means.mean(axis=0))[np.arange(T) % period]
    residual = x - trend - seasonal
    if squeeze:
        return trend[:, 0], seasonal[:, 0], residual[:, 0]
    return trend, seasonal, residual


def tsr_loss(target: TSRComponents, prediction: TSRComponents, weights: LossWeights) -> Tensor:
    for a, b in ((target.trend, prediction.trend), (target.seasonal, prediction.seasonal)):
        if a.shape != b.shape:
            raise DimensionError(f"component shapes differ: {a.shape} vs {b.shape}")
    return (
        dc.mse(prediction.trend, target.trend) * weights.lambda_trend
        + dc.mse(prediction.seasonal, target.seasonal) * weights.lambda_seasonal
        + dc.mse(prediction.residual, target.residual) * weights.lambda_residual
    )


def final_loss(x, x_hat, weights: LossWeights, period: int) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(total, mse_term, tsr_term)`` with ``total = mse + beta * tsr``."""
    x, x_hat = dc.as_tensor(x), dc.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"target {x.shape} and prediction {x_hat.shape} differ")
    base = dc.mse(x_hat, x)
    if weights.beta == 0:
        return base, base, Tensor(0.0)
    structure = tsr_loss(decompose(x, period), decompose(x_hat, period), weights)
    return base + structure * weights.beta, base, structure


def detect_period(values: np.ndarray, low: int = 4, high: int | None = None) -> int:
    """Dominant autocorrelation lag in ``[low, high]``.

    Each channel contributes the shortest local maximum of its autocorrelation
    (past the first zero crossing) that reaches 90% of its best peak, so a
    multiple of the true period does not win on noise. Channels are combined
    by the lower median.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    n = v.shape[0]
    high = n // 2 if high is None else min(high, n // 2)
    if high < low:
        return max(1, high)
    # a fitted line removes the trend that would otherwise favour the shortest lag
    t = np.arange(n) - (n - 1) / 2.0
    d = v - v.mean(axis=0)
    d = d - np.outer(t, t @ d / (t @ t))
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.abs(np.fft.rfft(d, nfft, axis=0)) ** 2
    acf = np.fft.irfft(spec, nfft, axis=0)[: high + 2]
    # unbiased estimate, so long lags are not penalised for having fewer pairs
    acf = acf / (n - np.arange(high + 2))[:, None]
    acf = acf / np.maximum(acf[0], 1e-300)
    periods = [_channel_period(acf[:, c], low, high) for c in range(acf.shape[1])]
    return int(sorted(periods)[(len(periods) - 1) // 2])


def _channel_period(acf: np.ndarray, low: int, high: int) -> int:
    negative = np.flatnonzero(acf[: high + 1] < 0)
    start = max(low, int(negative[0]) if negative.size else low)
    if start > high:
        start = low
    lags = np.arange(start, high + 1)
    vals = acf[lags]
    peaks = [i for i in range(len(lags)) if vals[i] >= acf[lags[i] - 1] and vals[i] >= acf[lags[i] + 1]]
    if not peaks:
        return int(lags[np.argmax(vals)])
    best = max(vals[i] for i in peaks)
    return int(next(lags[i] for i in peaks if vals[i] >= 0.9 * best))
