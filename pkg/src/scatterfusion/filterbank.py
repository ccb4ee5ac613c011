"""Dyadic Morlet filter banks with learnable shaping kernels.

Filters live in the time domain, centred at index ``len // 2``. Each scale
``j`` has a Morlet wavelet ``psi_j`` with centre frequency ``XI_1 * 2**(1-j)``
radians per sample and envelope width ``SIGMA_1 * 2**(j-1)``. The learnable
filter at scale ``j`` is ``psi_j`` convolved with a short kernel ``g_j``,
initialised to a unit impulse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import ComplexTensor, Tensor
from .errors import ContractError, SupportError

XI_1 = 0.75 * np.pi
SIGMA_1 = 1.2
# lowpass standard deviation is LOWPASS_WIDTH * 2**J samples
LOWPASS_WIDTH = 0.6
DEFAULT_KERNEL = 7

BOUNDARIES = ("reflect", "periodic")


def center_frequency(j: int) -> float:
    return XI_1 * 2.0 ** (1 - j)


def envelope_width(j: int) -> float:
    return SIGMA_1 * 2.0 ** (j - 1)


def lowpass_width(J: int) -> float:
    return LOWPASS_WIDTH * 2.0**J


def _grid(length: int) -> np.ndarray:
    return np.arange(length) - length // 2


def build_morlet(j: int, length: int, Q: int = 1) -> np.ndarray:
    """Zero-mean, unit-norm analytic Morlet wavelet at scale ``2**j``.

    Returns a complex array of ``length`` samples centred on ``length // 2``.
    """
    if Q != 1:
        raise ContractError("only one filter per octave is supported")
    if j < 1:
        raise ContractError(f"scale exponent must be >= 1, got {j}")
    if length < 8 * 2**j:
        raise SupportError(f"wavelet at scale 2^{j} needs at least {8 * 2**j} samples, got {length}")
    t = _grid(length)
    sigma, xi = envelope_width(j), center_frequency(j)
    env = np.exp(-0.5 * (t / sigma) ** 2)
    wave = np.exp(1j * xi * t) * env
    # subtract a multiple of the envelope so the sum is exactly zero
    wave = wave - (wave.sum() / env.sum()) * env
    return wave / np.linalg.norm(wave)


def build_lowpass(J: int, length: int) -> np.ndarray:
    """Unit-sum Gaussian averaging filter with width proportional to ``2**J``."""
    if length < 4 * 2**J:
        raise SupportError(f"lowpass at scale 2^{J} needs at least {4 * 2**J} samples, got {length}")
    t = _grid(length)
    phi = np.exp(-0.5 * (t / lowpass_width(J)) ** 2)
    return phi / phi.sum()


def identity_kernel(size: int = DEFAULT_KERNEL) -> np.ndarray:
    if size % 2 == 0:
        raise ContractError(f"kernel length must be odd, got {size}")
    g = np.zeros(size)
    g[size // 2] = 1.0
    return g


def learnable_filter(psi: ComplexTensor, g: Tensor, zero_mean: bool = True) -> ComplexTensor:
    """``psi * g`` as a length-preserving (zero-padded) convolution.

    ``psi`` may carry leading axes (one filter per scale) that broadcast
    against the leading axes of ``g``. The result is re-centred to zero
    mean so the filter stays admissible once ``g`` drifts from an impulse.
    """
    g = dc.as_tensor(g)
    k = g.shape[-1]
    if k % 2 == 0:
        raise ContractError(f"kernel length must be odd, got {k}")
    half = k // 2
    parts = []
    for part in (psi.real, psi.imag):
        pad = [(0, 0)] * (part.ndim - 1) + [(half, half)]
        padded = Tensor(np.pad(part.data, pad)) if not part.requires_grad else _zero_pad(part, half)
        out = dc.conv_valid(padded, g)
        if zero_mean:
            out = out - dc.mean(out, axis=-1, keepdims=True)
        parts.append(out)
    return ComplexTensor(*parts)


def _zero_pad(x: Tensor, half: int) -> Tensor:
    n = x.shape[-1]
    zeros = Tensor(np.zeros(x.shape[:-1] + (half,)))
    return dc.concat([zeros, x, zeros], axis=-1) if n else x


def pad_indices(T: int, left: int, right: int, boundary: str = "reflect") -> np.ndarray:
    if boundary == "reflect":
        return np.pad(np.arange(T), (left, right), mode="reflect")
    if boundary == "periodic":
        return np.arange(-left, T + right) % T
    raise ContractError(f"unknown boundary mode {boundary!r}; expected one of {BOUNDARIES}")


def convolve(x, h, boundary: str = "reflect", method: str = "auto"):
    """Length-preserving convolution along the last axis.

    ``y[t] = sum_k h[k] x[t - (k - len(h)//2)]`` with ``x`` extended past its
    ends by reflection (or periodically). ``h`` may be a real or complex
    filter; leading axes broadcast. ``method`` is ``"direct"``, ``"fft"`` or
    ``"auto"`` (choose by cost).
    """
    if isinstance(h, ComplexTensor):
        return ComplexTensor(
            convolve(x, h.real, boundary, method), convolve(x, h.imag, boundary, method)
        )
    if isinstance(h, np.ndarray) and np.iscomplexobj(h):
        return convolve(x, ComplexTensor.from_numpy(h), boundary, method)
    x, h = dc.as_tensor(x), dc.as_tensor(h)
    T, L = x.shape[-1], h.shape[-1]
    if L > 2 * T:
        raise SupportError(f"filter of length {L} is longer than twice the signal length {T}")
    c = L // 2
    ext = dc.take(x, pad_indices(T, L - 1 - c, c, boundary), axis=-1)
    return dc.conv_valid(ext, h, method)


def support_length(J: int, T: int) -> int:
    """Common filter length for a bank of scales ``1..J`` on length-``T`` signals."""
    need = 8 * 2**J
    if need > 2 * T:
        raise SupportError(f"J={J} needs filters of {need} samples; signals of length {T} allow {2 * T}")
    return need + 1 if need + 1 <= 2 * T else need


@dataclass
class FilterBank:
    """Wavelets ``psi_j`` for ``j = 1..J``, lowpass ``phi_J`` and kernels ``g_j``."""

    J: int
    T: int
    psi: np.ndarray  # complex, (J, L)
    phi: np.ndarray  # (L,)
    kernels: Tensor  # (J, K_g)
    learnable: bool = True
    boundary: str = "reflect"
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        J: int,
        T: int,
        kernel_size: int = DEFAULT_KERNEL,
        learnable: bool = True,
        boundary: str = "reflect",
    ) -> "FilterBank":
        if J < 1:
            raise ContractError(f"J must be >= 1, got {J}")
        if boundary not in BOUNDARIES:
            raise ContractError(f"unknown boundary mode {boundary!r}")
        L = support_length(J, T)
        psi = np.stack([build_morlet(j, L) for j in range(1, J + 1)])
        phi = build_lowpass(J, L)
        g = np.tile(identity_kernel(kernel_size), (J, 1))
        return cls(J, T, psi, phi, Tensor(g, requires_grad=learnable, name="g_theta"), learnable, boundary)

    @property
    def filter_length(self) -> int:
        return self.psi.shape[-1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[-1]

    def wavelets(self) -> ComplexTensor:
        """The (possibly learned) wavelet filters, shape ``(J, L)``."""
        base = ComplexTensor.from_numpy(self.psi)
        if not self.learnable:
            return base
        return learnable_filter(base, self.kernels)

    def lowpass(self) -> Tensor:
        return Tensor(self.phi)

    def with_boundary(self, boundary: str) -> "FilterBank":
        return FilterBank(self.J, self.T, self.psi, self.phi, self.kernels, self.learnable, boundary)

    def filters_table(self) -> list[tuple[int, int, float, float]]:
        """Rows ``(scale, index, real, imag)``; scale 0 is the lowpass."""
        rows = [(0, i, float(v), 0.0) for i, v in enumerate(self.phi)]
        with dc.no_grad():
            psi = self.wavelets().numpy()
        for j in range(self.J):
            rows.extend((j + 1, i, float(z.real), float(z.imag)) for i, z in enumerate(psi[j]))
        return rows


def spectral_peak(filt: np.ndarray, n_fft: int = 1 << 16) -> float:
    """Angular frequency of the magnitude-spectrum maximum."""
    spec = np.abs(np.fft.fft(filt, n_fft))
    freqs = 2 * np.pi * np.fft.fftfreq(n_fft)
    return float(abs(freqs[np.argmax(spec)]))
