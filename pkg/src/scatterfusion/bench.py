"""Forward-pass timing across input lengths."""

from __future__ import annotations

import time

import numpy as np

from .forecaster import ModelConfig, ScatterFusion

GROWTH_BOUND = 2.6


def time_forward(model: ScatterFusion, x: np.ndarray, repeats: int = 5, warmup: int = 2) -> list[float]:
    for _ in range(warmup):
        model.predict(x)
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.predict(x)
        out.append(time.perf_counter() - t0)
    return out


def run(
    lengths=(256, 512, 1024, 2048),
    base: ModelConfig | None = None,
    repeats: int = 5,
    bound: float = GROWTH_BOUND,
    seed: int = 0,
) -> dict:
    """Median forward time per length and the ratios between consecutive lengths.

    Timed runs are interleaved (one pass over every length per repeat), so a
    slow spell on a shared machine inflates all lengths rather than one.
    Every length is checked against ``bound`` when it is exactly double its
    predecessor; other steps are reported but not judged.
    """
    base = base or ModelConfig(T_p=96, C=7)
    lengths = sorted(int(L) for L in lengths)
    rng = np.random.default_rng(seed)
    cases = []
    for L in lengths:
        cfg = ModelConfig.from_dict({**base.to_dict(), "T_s": L})
        model = ScatterFusion(cfg)
        x = rng.normal(size=(1, L, cfg.C))
        time_forward(model, x, repeats=0)
        cases.append((L, model, x))
    times = {L: [] for L in lengths}
    for _ in range(repeats):
        for L, model, x in cases:
            times[L] += time_forward(model, x, repeats=1, warmup=0)
    rows = [{"length": L, "median_s": float(np.median(times[L])), "times_s": times[L]} for L in lengths]
    ratios = []
    for a, b in zip(rows, rows[1:]):
        r = b["median_s"] / a["median_s"]
        doubled = b["length"] == 2 * a["length"]
        ratios.append(
            {"from": a["length"], "to": b["length"], "ratio": r, "judged": doubled, "pass": (r <= bound) if doubled else None}
        )
    judged = [r for r in ratios if r["judged"]]
    return {
        "config": {k: v for k, v in base.to_dict().items() if k != "T_s"},
        "repeats": repeats,
        "bound": bound,
        "rows": rows,
        "ratios": ratios,
        "pass": bool(judged) and all(r["pass"] for r in judged),
    }


def format_table(report: dict) -> str:
    lines = [f"{'L':>6} {'median ms':>10} {'ratio':>7} {'verdict':>8}"]
    prev = {r["to"]: r for r in report["ratios"]}
    for row in report["rows"]:
        r = prev.get(row["length"])
        ratio = f"{r['ratio']:.2f}" if r else "-"
        verdict = "-" if not r or not r["judged"] else ("PASS" if r["pass"] else "FAIL")
        lines.append(f"{row['length']:>6} {1e3 * row['median_s']:>10.2f} {ratio:>7} {verdict:>8}")
    lines.append(f"bound {report['bound']}: {'PASS' if report['pass'] else 'FAIL'}")
    return "\n".join(lines)
