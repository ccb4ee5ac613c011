"""Hierarchical scattering transform (orders 0, 1 and 2).

All functions take signals with time on the last axis and any number of
leading axes (channels, batch). Second-order paths are restricted to
``j2 > j1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ComplexTensor, Tensor
from .errors import HypothesisViolation
from .filterbank import FilterBank, convolve


def path_index(J: int) -> list[tuple[int, int]]:
    return [(j1, j2) for j1 in range(1, J + 1) for j2 in range(j1 + 1, J + 1)]


def n_coefficients(J: int) -> int:
    return 1 + J + J * (J - 1) // 2


@dataclass
class ScatteringCoefficients:
    s0: Tensor  # (..., T')
    s1: Tensor  # (..., J, T')
    s2: Tensor  # (..., P, T')
    path_index: list

    def stacked(self) -> np.ndarray:
        """All orders concatenated on the path axis: (..., 1 + J + P, T')."""
        return np.concatenate([self.s0.data[..., None, :], self.s1.data, self.s2.data], axis=-2)

    def labels(self) -> list[tuple[int, int, int]]:
        """``(order, j1, j2)`` for each row of :meth:`stacked` (0 = unused)."""
        J = self.s1.shape[-2]
        return [(0, 0, 0)] + [(1, j, 0) for j in range(1, J + 1)] + [(2, a, b) for a, b in self.path_index]


def _lowpass(u: Tensor, bank: FilterBank, subsample: bool) -> Tensor:
    out = convolve(u, bank.lowpass(), bank.boundary)
    if subsample and bank.J > 1:
        out = out[..., :: 2 ** (bank.J - 1)]
    return out


def scatter0(x, bank: FilterBank, subsample: bool = False) -> Tensor:
    return _lowpass(dc.as_tensor(x), bank, subsample)


def scatter1(x, bank: FilterBank, subsample: bool = False, psi: ComplexTensor | None = None):
    """First-order wavelet coefficients ``W1`` (..., J, T) and ``S1`` (..., J, T')."""
    x = dc.as_tensor(x)
    psi = bank.wavelets() if psi is None else psi
    w1 = convolve(dc.expand_dims(x, -2), psi, bank.boundary)
    s1 = _lowpass(dc.complex_modulus(w1), bank, subsample)
    return w1, s1


def scatter2(w1: ComplexTensor, bank: FilterBank, subsample: bool = False, psi: ComplexTensor | None = None):
    """Second-order coefficients for paths ``j2 > j1``: (..., P, T')."""
    psi = bank.wavelets() if psi is None else psi
    J = bank.J
    u1 = dc.complex_modulus(w1)  # (..., J, T)
    w2 = convolve(dc.expand_dims(u1, -2), psi, bank.boundary)  # (..., J1, J2, T)
    u2 = dc.complex_modulus(w2)
    lead = u2.shape[:-3]
    flat = dc.reshape(u2, lead + (J * J, u2.shape[-1]))
    rows = [(a - 1) * J + (b - 1) for a, b in path_index(J)]
    if not rows:
        return Tensor(np.zeros(lead + (0, _lowpass(Tensor(u2.data[..., 0, 0, :]), bank, subsample).shape[-1])))
    return _lowpass(dc.take(flat, rows, axis=-2), bank, subsample)


def full_scattering(x, bank: FilterBank, subsample: bool = False) -> ScatteringCoefficients:
    """Orders 0-2 for every leading index of ``x`` (time on the last axis).

    A ``(T, C)`` array is transposed to one row per channel first.
    """
    x = dc.as_tensor(x)
    if x.ndim == 2 and x.shape[0] == bank.T and x.shape[1] != bank.T:
        x = dc.transpose(x)
    psi = bank.wavelets()
    w1, s1 = scatter1(x, bank, subsample, psi)
    s2 = scatter2(w1, bank, subsample, psi)
    return ScatteringCoefficients(scatter0(x, bank, subsample), s1, s2, path_index(bank.J))


def scattering_vector(x, bank: FilterBank, subsample: bool = False) -> np.ndarray:
    with dc.no_grad():
        return full_scattering(x, bank, subsample).stacked()


# ---------------------------------------------------------------- invariance


@dataclass
class DeformationField:
    tau: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)

    @property
    def max_slope(self) -> float:
        if self.tau.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.tau))))

    @classmethod
    def sinusoidal(cls, T: int, slope: float, period: float | None = None, phase: float = 0.0):
        """``tau(t) = A sin(2 pi t / period + phase)`` with peak slope ``slope``."""
        period = T if period is None else period
        amp = slope * period / (2 * np.pi)
        t = np.arange(T)
        return cls(amp * np.sin(2 * np.pi * t / period + phase))

    @classmethod
    def constant(cls, T: int, shift: float):
        return cls(np.full(T, float(shift)))


def warp(x: np.ndarray, field: DeformationField) -> np.ndarray:
    """``x(t - tau(t))`` by linear interpolation on the periodic extension."""
    x = np.asarray(x, dtype=float)
    if field.max_slope >= 1:
        raise HypothesisViolation(f"deformation slope {field.max_slope:.3g} must be < 1")
    T = x.shape[-1]
    pos = np.arange(T) - field.tau
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    return x[..., lo % T] * (1 - frac) + x[..., (lo + 1) % T] * frac


def _distance(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    nx = np.linalg.norm(x)
    if nx == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / nx)


def translation_distance(x, c: int, bank: FilterBank, boundary: str | None = "periodic") -> float:
    """``||S[x] - S[T_c x]|| / ||x||`` with ``T_c x`` the circular shift by ``c``.

    The shift is circular, so by default the transform also wraps around;
    with reflect padding the two edges of a rolled signal differ by O(1) and
    that edge term does not shrink with ``J``. Pass ``boundary=None`` to keep
    the bank's own mode.
    """
    x = np.asarray(x, dtype=float)
    if c == 0:
        return 0.0
    if boundary is not None:
        bank = bank.with_boundary(boundary)
    shifted = np.roll(x, c, axis=-1)
    return _distance(scattering_vector(x, bank), scattering_vector(shifted, bank), x)


def deformation_distance(
    x, field: DeformationField, bank: FilterBank, boundary: str | None = "periodic"
) -> float:
    """``||S[x] - S[x_tau]|| / ||x||`` for the warped signal ``x(t - tau(t))``."""
    x = np.asarray(x, dtype=float)
    if boundary is not None:
        bank = bank.with_boundary(boundary)
    warped = warp(x, field)
    if np.array_equal(warped, x):
        return 0.0
    return _distance(scattering_vector(x, bank), scattering_vector(warped, bank), x)
