"""Single-module removal study on one dataset."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from .dataio import Windows
from .forecaster import ABLATIONS, ModelConfig, ScatterFusion
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

LABELS = {
    "full": "Full model",
    "hstm": "- HSTM (fixed wavelets)",
    "safe": "- SAFE (uniform weights)",
    "mrta": "- MRTA (single resolution)",
    "tsr": "- TSR (plain MSE loss)",
}


def run_study(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_data: Windows,
    val_data: Windows,
    test_data: Windows,
    train_values: np.ndarray | None = None,
    variants=("full",) + ABLATIONS,
) -> list[dict]:
    """Train every variant from the same seed and report test metrics.

    Deltas are relative to the ``full`` row, which is always trained first.
    """
    variants = ["full"] + [v for v in variants if v != "full"]
    rows = []
    for name in variants:
        cfg = model_config if name == "full" else model_config.ablate(name)
        model = ScatterFusion(cfg)
        log.info("ablation %s: %d parameters", name, model.num_parameters())
        result = train(model, train_data, val_data, replace(train_config), train_values)
        report = evaluate(result.model, test_data)
        rows.append(
            {
                "variant": name,
                "label": LABELS[name],
                "params": model.num_parameters(),
                "steps": result.steps,
                "mse": report["mse"],
                "mae": report["mae"],
            }
        )
    base = rows[0]
    for r in rows:
        r["mse_delta_pct"] = 100.0 * (r["mse"] / base["mse"] - 1.0)
        r["mae_delta_pct"] = 100.0 * (r["mae"] / base["mae"] - 1.0)
    return rows


def format_table(rows: list[dict], column: str = "test") -> str:
    """Markdown table: each ablation shows ``mse (+x.x%)`` against the full model."""
    width = max(len(r["label"]) for r in rows)
    lines = [f"| {'Model variant':<{width}} | {column} MSE | {column} MAE |", f"|{'-' * (width + 2)}|---|---|"]
    for r in rows:
        if r["variant"] == "full":
            mse, mae = f"{r['mse']:.4f}", f"{r['mae']:.4f}"
        else:
            mse = f"{r['mse']:.4f} ({r['mse_delta_pct']:+.1f}%)"
            mae = f"{r['mae']:.4f} ({r['mae_delta_pct']:+.1f}%)"
        lines.append(f"| {r['label']:<{width}} | {mse} | {mae} |")
    return "\n".join(lines)
