"""Seeded measurement suites for translation and deformation stability.

Both suites report raw distances together with the pass/fail verdict of
the corresponding scattering invariant, so they can be run on a fresh
filter bank or on one whose kernels were trained.
"""

from __future__ import annotations

import numpy as np

from .filterbank import FilterBank
from .hstm import DeformationField, deformation_distance, translation_distance

# integer-frequency bands in cycles per REFERENCE_T samples; other lengths
# keep the same frequencies in cycles per sample
REFERENCE_T = 1024
TRANSLATION_BAND = (64, 512)
DEFORMATION_BAND = (4, 24)
N_TONES = 6


def scaled_band(band: tuple[int, int], T: int) -> tuple[int, int]:
    lo = max(1, round(band[0] * T / REFERENCE_T))
    hi = max(lo + 1, round(band[1] * T / REFERENCE_T))
    return lo, min(hi, T // 2)


def band_limited_signal(T: int, seed: int, band: tuple[int, int], tones: int = N_TONES) -> np.ndarray:
    """Sum of ``tones`` sinusoids with integer frequencies drawn from ``band``.

    Integer cycle counts make the signal exactly periodic over ``T``.
    """
    lo, hi = band
    if not 1 <= lo < hi <= T // 2:
        raise ValueError(f"band {band} must lie in [1, {T // 2}]")
    rng = np.random.default_rng(seed)
    k = rng.choice(np.arange(lo, hi), size=min(tones, hi - lo), replace=False)
    amp = rng.uniform(0.5, 1.5, k.size)
    phase = rng.uniform(0, 2 * np.pi, k.size)
    t = np.arange(T)
    return (amp[:, None] * np.cos(2 * np.pi * k[:, None] * t / T + phase[:, None])).sum(axis=0)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def translation_suite(
    Js=(3, 4, 5, 6),
    seeds=range(10),
    T: int = 1024,
    shift: int = 16,
    band=None,
    kernels: np.ndarray | None = None,
    min_pass: int = 9,
    max_ratio: float = 0.75,
) -> dict:
    """Translation distance per signal and per ``J``.

    ``band`` defaults to the reference band rescaled to length ``T``.

    ``kernels`` (shape ``(J, K)`` for the largest ``J``) replaces the
    identity kernels; smaller banks use the leading rows.
    """
    Js = sorted(int(j) for j in Js)
    band = band or scaled_band(TRANSLATION_BAND, T)
    banks = {J: _bank(J, T, kernels) for J in Js}
    rows, ratios, monotone = [], [], 0
    for seed in seeds:
        x = band_limited_signal(T, seed, band)
        d = [translation_distance(x, shift, banks[J]) for J in Js]
        r = [b / a for a, b in zip(d, d[1:]) if a > 0]
        ok = all(b < a for a, b in zip(d, d[1:]))
        monotone += ok
        ratios.extend(r)
        rows.append({"seed": int(seed), "distances": d, "ratios": r, "monotone": ok})
    n = len(rows)
    mean_ratio = float(np.mean(ratios)) if ratios else float("nan")
    return {
        "J": Js,
        "shift": shift,
        "T": T,
        "band": list(band),
        "signals": rows,
        "monotone": monotone,
        "count": n,
        "mean_ratio": mean_ratio,
        "pass": monotone >= min(min_pass, n) and mean_ratio < max_ratio,
    }


def deformation_suite(
    eps=(0.005, 0.01, 0.02, 0.04),
    seeds=range(10),
    T: int = 1024,
    J: int = 5,
    band=None,
    kernels: np.ndarray | None = None,
    slope_range=(0.8, 1.2),
    min_pass: int = 9,
) -> dict:
    """Deformation distance against the peak slope of a sinusoidal warp."""
    band = band or scaled_band(DEFORMATION_BAND, T)
    bank = _bank(J, T, kernels)
    eps = [float(e) for e in eps]
    rows, passed = [], 0
    for seed in seeds:
        x = band_limited_signal(T, seed, band)
        phase = np.random.default_rng(10_000 + int(seed)).uniform(0, 2 * np.pi)
        d = [deformation_distance(x, DeformationField.sinusoidal(T, e, phase=phase), bank) for e in eps]
        slope = loglog_slope(eps, d) if min(d) > 0 else float("nan")
        ok = bool(slope_range[0] <= slope <= slope_range[1])
        passed += ok
        rows.append({"seed": int(seed), "distances": d, "slope": slope, "pass": ok})
    n = len(rows)
    return {
        "eps": eps,
        "J": J,
        "T": T,
        "band": list(band),
        "signals": rows,
        "passed": passed,
        "count": n,
        "pass": passed >= min(min_pass, n),
    }


def _bank(J: int, T: int, kernels: np.ndarray | None) -> FilterBank:
    if kernels is None:
        return FilterBank.build(J, T, boundary="periodic")
    kernels = np.asarray(kernels, dtype=float)
    if kernels.shape[0] < J:
        raise ValueError(f"checkpoint has kernels for {kernels.shape[0]} scales, need {J}")
    bank = FilterBank.build(J, T, kernel_size=kernels.shape[1], learnable=True, boundary="periodic")
    bank.kernels.data[...] = kernels[:J]
    return bank
