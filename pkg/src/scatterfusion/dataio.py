"""CSV ingestion, chronological splits, sliding windows and synthetic series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

TIMESTAMP_NAMES = {"date", "time", "timestamp", "datetime", "t", "ts"}
SYNTH_KINDS = ("sine", "sine+trend", "sine+trend+noise", "am-modulated", "warped")


@dataclass
class Dataset:
    values: np.ndarray  # (N, C)
    columns: list[str]
    timestamps: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be non-negative and sum to 1, got {fracs}")


@dataclass(frozen=True)
class SplitRanges:
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def __iter__(self):
        return iter((self.train, self.val, self.test))


@dataclass
class Windows:
    inputs: np.ndarray  # (W, T_s, C)
    targets: np.ndarray  # (W, T_p, C)
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return self.inputs.shape[0]


# ---------------------------------------------------------------- CSV


def _parse_timestamp(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        return None


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_csv(path, timestamp_column: str | None = None, on_missing: str = "reject") -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    A timestamp column is taken from ``timestamp_column`` or detected by name
    (``date``, ``time``, ...) or by a non-numeric first column. Blank cells are
    rejected or linearly interpolated according to ``on_missing``.
    """
    if on_missing not in ("reject", "interpolate"):
        raise ConfigError(f"on_missing must be 'reject' or 'interpolate', got {on_missing!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")

    ts_idx = None
    if timestamp_column is not None:
        if timestamp_column not in header:
            raise DataError(f"{path}: no column named {timestamp_column!r}")
        ts_idx = header.index(timestamp_column)
    elif header[0].lower() in TIMESTAMP_NAMES:
        ts_idx = 0
    elif not _is_float(body[0][0]) and _parse_timestamp(body[0][0]) is not None:
        ts_idx = 0

    value_cols = [i for i in range(len(header)) if i != ts_idx]
    if not value_cols:
        raise DataError(f"{path}: no numeric columns")
    values = np.empty((len(body), len(value_cols)))
    for r, row in enumerate(body):
        for c, col in enumerate(value_cols):
            cell = row[col].strip()
            if cell == "" or cell.lower() in ("nan", "na"):
                if on_missing == "reject":
                    raise DataError(f"{path}: missing value at row {r + 2}, column {header[col]!r}")
                values[r, c] = np.nan
                continue
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse {cell!r} at row {r + 2}, column {header[col]!r}"
                ) from None
    if on_missing == "interpolate":
        values = interpolate_missing(values)

    timestamps = None
    if ts_idx is not None:
        timestamps = []
        for r, row in enumerate(body):
            stamp = _parse_timestamp(row[ts_idx])
            if stamp is None:
                raise DataError(f"{path}: bad timestamp {row[ts_idx]!r} at row {r + 2}")
            timestamps.append(stamp)
        for r in range(1, len(timestamps)):
            if not timestamps[r] > timestamps[r - 1]:
                raise DataError(f"{path}: timestamps not strictly increasing at row {r + 2}")
    return Dataset(values, [header[i] for i in value_cols], timestamps)


def interpolate_missing(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    idx = np.arange(out.shape[0])
    for c in range(out.shape[1]):
        col = out[:, c]
        bad = np.isnan(col)
        if bad.all():
            raise DataError(f"column {c} has no values to interpolate from")
        if bad.any():
            col[bad] = np.interp(idx[bad], idx[~bad], col[~bad])
    return out


def write_csv(path, header: list[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- splits and windows


def split(n: int, T_s: int, T_p: int, spec: SplitSpec = SplitSpec(), strict: bool = False) -> SplitRanges:
    """Contiguous chronological ranges of sizes floor(0.7n), floor(0.1n), rest."""
    n_train = int(math.floor(spec.train_frac * n))
    n_val = int(math.floor(spec.val_frac * n))
    ranges = SplitRanges((0, n_train), (n_train, n_train + n_val), (n_train + n_val, n))
    for name, (a, b) in zip(("train", "val", "test"), ranges):
        if count_windows((a, b), T_s, T_p, strict=strict) < 1:
            raise DataError(f"{name} split [{a}, {b}) cannot hold one window of {T_s}+{T_p} steps")
    return ranges


def lookback(rng: tuple[int, int], T_s: int, strict: bool) -> int:
    """Steps a window may read before ``rng`` starts.

    In the default mode a window's input may start up to ``T_s - 1`` steps
    early, so its last observed step always lies inside its own split.
    """
    return 0 if strict else min(T_s - 1, rng[0])


def count_windows(rng, T_s, T_p, stride: int = 1, strict: bool = False) -> int:
    span = rng[1] - rng[0] + lookback(rng, T_s, strict)
    if span < T_s + T_p:
        return 0
    return (span - T_s - T_p) // stride + 1


def windows(values: np.ndarray, rng: tuple[int, int], T_s: int, T_p: int, stride: int = 1, strict: bool = False) -> Windows:
    """Sliding ``(input, target)`` pairs over ``values[rng]`` (read-only views)."""
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    start = rng[0] - lookback(rng, T_s, strict)
    seg = values[start : rng[1]]
    if seg.shape[0] < T_s + T_p:
        return Windows(np.zeros((0, T_s, values.shape[1])), np.zeros((0, T_p, values.shape[1])), np.zeros(0, int))
    view = np.lib.stride_tricks.sliding_window_view(seg, T_s + T_p, axis=0)[::stride]
    view = np.moveaxis(view, -1, 1)  # (W, T_s + T_p, C)
    starts = start + np.arange(view.shape[0]) * stride
    return Windows(view[:, :T_s], view[:, T_s:], starts)


def normalize(x: np.ndarray, eps: float = 1e-5):
    """Per-window, per-channel z-score over the time axis (-2)."""
    mu = x.mean(axis=-2, keepdims=True)
    sd = np.sqrt(x.var(axis=-2, keepdims=True) + eps)
    return (x - mu) / sd, mu, sd


def denormalize(z: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return z * sd + mu


# ---------------------------------------------------------------- synthetic data


def synth(
    kind: str,
    n: int,
    channels: int = 1,
    seed: int = 0,
    amplitude: float = 1.0,
    period: float = 24.0,
    slope: float = 0.01,
    noise: float = 0.1,
    mod_period: float = 240.0,
    mod_depth: float = 0.5,
    warp_slope: float = 0.2,
) -> Dataset:
    """Deterministic synthetic series.

    Channel ``c`` uses period ``period * (1 + c / 2)``, so multi-channel data
    has distinct cycles. ``warped`` resamples a sine at ``t - tau(t)`` with a
    sinusoidal ``tau`` of peak slope ``warp_slope``.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {', '.join(SYNTH_KINDS)}")
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    cols = []
    for c in range(channels):
        p = period * (1 + c / 2)
        if kind == "warped":
            amp = warp_slope * mod_period / (2 * np.pi)
            tt = t - amp * np.sin(2 * np.pi * t / mod_period)
        else:
            tt = t
        y = amplitude * np.sin(2 * np.pi * tt / p)
        if kind == "am-modulated":
            y = y * (1 + mod_depth * np.cos(2 * np.pi * t / mod_period))
        if kind in ("sine+trend", "sine+trend+noise"):
            y = y + slope * t
        if kind == "sine+trend+noise":
            y = y + noise * rng.standard_normal(n)
        cols.append(y)
    return Dataset(np.stack(cols, axis=1), [f"x{c}" for c in range(channels)])
