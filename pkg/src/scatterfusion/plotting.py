"""Figures written next to the CLI's tabular outputs (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def translation_decay(report: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for row in report["signals"]:
        ax.semilogy(report["J"], row["distances"], "o-", lw=1, alpha=0.7)
    J = np.array(report["J"], dtype=float)
    ref = report["signals"][0]["distances"][0] * 2.0 ** (J[0] - J)
    ax.semilogy(J, ref, "k--", lw=1.5, label=r"$\propto 2^{-J}$")
    ax.set_xlabel("J")
    ax.set_ylabel("translation distance")
    ax.set_xticks(report["J"])
    ax.legend()
    return _save(fig, path)


def deformation_slope(report: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    eps = np.array(report["eps"])
    for row in report["signals"]:
        ax.loglog(eps, row["distances"], "o-", lw=1, alpha=0.7)
    ref = report["signals"][0]["distances"][0] * eps / eps[0]
    ax.loglog(eps, ref, "k--", lw=1.5, label="slope 1")
    ax.set_xlabel(r"peak $|\tau'|$")
    ax.set_ylabel("deformation distance")
    ax.legend()
    return _save(fig, path)


def bench_growth(report: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    L = np.array([r["length"] for r in report["rows"]], dtype=float)
    t = np.array([r["median_s"] for r in report["rows"]]) * 1e3
    ax.loglog(L, t, "o-", label="median forward")
    ax.loglog(L, t[0] * L / L[0], "k--", lw=1, label="linear")
    ax.loglog(L, t[0] * (L / L[0]) ** 2, "k:", lw=1, label="quadratic")
    ax.set_xlabel("input length")
    ax.set_ylabel("ms")
    ax.legend()
    return _save(fig, path)


def loss_curve(records: list[dict], history: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if records:
        ax.plot([r["step"] for r in records], [r["loss"] for r in records], lw=0.8, label="train loss")
    if history and records:
        per_epoch = max(1, len(records) // max(1, len(history)))
        ax.plot([(h["epoch"] + 1) * per_epoch for h in history], [h["val_mse"] for h in history], "o-", label="val mse (raw scale)")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.legend()
    return _save(fig, path)


def forecast(inputs: np.ndarray, target: np.ndarray, pred: np.ndarray, path, channel: int = 0) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3))
    T_s, T_p = len(inputs), len(target)
    ax.plot(np.arange(T_s), inputs[:, channel], color="0.4", label="input")
    ax.plot(np.arange(T_s, T_s + T_p), target[:, channel], color="C0", label="target")
    ax.plot(np.arange(T_s, T_s + T_p), pred[:, channel], color="C3", ls="--", label="forecast")
    ax.legend()
    ax.set_xlabel("t")
    return _save(fig, path)


def decomposition(x: np.ndarray, trend: np.ndarray, seasonal: np.ndarray, residual: np.ndarray, path) -> Path:
    fig, axes = plt.subplots(4, 1, figsize=(7, 6), sharex=True)
    for ax, y, name in zip(axes, (x, trend, seasonal, residual), ("series", "trend", "seasonal", "residual")):
        ax.plot(y, lw=0.8)
        ax.set_ylabel(name)
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def scalogram(s1: np.ndarray, path) -> Path:
    """First-order coefficients of one channel, shape ``(J, T)``."""
    fig, ax = plt.subplots(figsize=(7, 3))
    im = ax.imshow(s1, aspect="auto", origin="lower", extent=(0, s1.shape[1], 0.5, s1.shape[0] + 0.5))
    ax.set_xlabel("t")
    ax.set_ylabel("j")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def ablation_bars(table: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    rows = [r for r in table if r["variant"] != "full"]
    ax.bar([r["variant"] for r in rows], [r["mse_delta_pct"] for r in rows])
    ax.axhline(0, color="k", lw=0.8)
    ax.set_ylabel("MSE change vs full (%)")
    return _save(fig, path)
