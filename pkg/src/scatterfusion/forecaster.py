"""End-to-end forecaster and its checkpoint format.

Pipeline for a batch ``x`` of shape ``(B, T_s, C)``:

1. per-window, per-channel z-score;
2. embedding ``C -> D`` plus a fixed sinusoidal position code;
3. scattering of every channel; coefficients are grouped by first-order
   scale ``j`` (``S0``, ``S1[j]`` and every ``S2[j, j2]``), each group is
   projected to ``D`` and added to the embedding, giving ``H_j``;
4. SAFE mixes the ``H_j`` into one ``(T_s, D)`` sequence;
5. a stack of MRTA blocks;
6. a linear head from the flattened sequence to ``T_p * C``, then the
   z-score is undone.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import diffcore as dc
from .diffcore import Tensor
from .errors import CheckpointError, ConfigError, DataError, DimensionError
from .filterbank import FilterBank, support_length
from .hstm import path_index
from .layers import Linear, Module
from .mrta import MRTA, validate_strides
from .safe import SAFE

ABLATIONS = ("hstm", "safe", "mrta", "tsr")


@dataclass
class ModelConfig:
    T_s: int = 96
    T_p: int = 24
    C: int = 1
    D: int = 64
    d: int = 32
    J: int = 4
    strides: tuple = (1, 2, 4)
    num_mrta_layers: int = 2
    K_g: int = 7
    T_p_max: int = 720
    use_hstm: bool = True
    use_safe: bool = True
    use_mrta: bool = True
    use_tsr_loss: bool = True
    seed: int = 0

    def __post_init__(self):
        self.strides = tuple(int(r) for r in self.strides)
        self.validate()

    def validate(self):
        if not 1 <= self.T_p <= self.T_p_max:
            raise ConfigError(f"T_p={self.T_p} must be in [1, T_p_max={self.T_p_max}]")
        if self.J < 2:
            raise ConfigError(f"J must be >= 2, got {self.J}")
        if self.K_g % 2 == 0:
            raise ConfigError(f"K_g must be odd, got {self.K_g}")
        if min(self.T_s, self.C, self.D, self.d) < 1:
            raise ConfigError("T_s, C, D and d must be positive")
        validate_strides(self.strides)
        support_length(self.J, self.T_s)

    def ablate(self, *names: str) -> "ModelConfig":
        changes = {}
        for name in names:
            if name not in ABLATIONS:
                raise ConfigError(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}")
            changes["use_tsr_loss" if name == "tsr" else f"use_{name}"] = False
        return ModelConfig(**{**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["strides"] = list(self.strides)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def positional_encoding(T: int, D: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    rate = np.exp(-np.log(10000.0) * (2 * (np.arange(D) // 2)) / D)
    enc = pos * rate[None, :]
    enc[:, 0::2] = np.sin(enc[:, 0::2])
    enc[:, 1::2] = np.cos(enc[:, 1::2])
    return enc


def group_rows(J: int) -> list[list[int]]:
    """Rows of the stacked ``[S0, S1, S2]`` axis that belong to each scale group."""
    paths = path_index(J)
    return [[0, j] + [1 + J + p for p, (a, _) in enumerate(paths) if a == j] for j in range(1, J + 1)]


class ScatterFusion(Module):
    def __init__(self, config: ModelConfig):
        self.config = cfg = config
        rng = np.random.default_rng(cfg.seed)
        self.embed_proj = Linear(cfg.C, cfg.D, rng)
        self.pos = positional_encoding(cfg.T_s, cfg.D)
        self.bank = FilterBank.build(cfg.J, cfg.T_s, cfg.K_g, learnable=cfg.use_hstm)
        self.groups = group_rows(cfg.J)
        self.group_proj = [Linear(len(rows) * cfg.C, cfg.D, rng, scale=0.5 / np.sqrt(len(rows) * cfg.C)) for rows in self.groups]
        self.safe = SAFE(cfg.D, rng, enabled=cfg.use_safe)
        strides = cfg.strides if cfg.use_mrta else (1,)
        self.blocks = [MRTA(cfg.D, cfg.d, strides, rng) for _ in range(cfg.num_mrta_layers)]
        self.head = Linear(cfg.T_s * cfg.D, cfg.T_p * cfg.C, rng)

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = super().named_parameters(prefix)
        if self.bank.learnable:
            out[f"{prefix}bank.kernels"] = self.bank.kernels
        return out

    # ------------------------------------------------------------ pieces

    def embed(self, x) -> Tensor:
        return self.embed_proj(dc.as_tensor(x)) + Tensor(self.pos)

    def scale_features(self, xn: Tensor, E: Tensor) -> Tensor:
        """``H_j = E + P_j(group_j)``, stacked to ``(B, J, T, D)``."""
        from .hstm import full_scattering

        B, T, C = xn.shape
        coefs = full_scattering(dc.transpose(xn, (0, 2, 1)), self.bank)
        stacked = dc.concat([dc.expand_dims(coefs.s0, -2), coefs.s1, coefs.s2], axis=-2)  # (B, C, K, T)
        stacked = dc.transpose(stacked, (0, 3, 1, 2))  # (B, T, C, K)
        maps = []
        for rows, proj in zip(self.groups, self.group_proj):
            feats = dc.take(stacked, rows, axis=-1)
            feats = dc.reshape(feats, (B, T, C * len(rows)))
            maps.append(E + proj(feats))
        return dc.stack(maps, axis=1)

    def encode(self, xn: Tensor) -> Tensor:
        cfg = self.config
        E = self.embed(xn)
        H = self.scale_features(xn, E)
        H = self.safe(H, cfg.T_p, cfg.T_p_max)
        for block in self.blocks:
            H = block(H)
        return H

    def forward_normalized(self, xn) -> Tensor:
        """Model output in the z-scored space of each input window."""
        cfg = self.config
        xn = dc.as_tensor(xn)
        H = self.encode(xn)
        B = xn.shape[0]
        out = self.head(dc.reshape(H, (B, cfg.T_s * cfg.D)))
        return dc.reshape(out, (B, cfg.T_p, cfg.C))

    def check_input(self, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (cfg.T_s, cfg.C):
            raise DimensionError(f"expected input (B, {cfg.T_s}, {cfg.C}) or ({cfg.T_s}, {cfg.C}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("input window contains non-finite values")
        return x

    def predict(self, x) -> np.ndarray:
        """Forecast in the original units: ``(T_s, C) -> (T_p, C)``, batched too."""
        from .dataio import denormalize, normalize

        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        xb = self.check_input(x)
        xn, mu, sd = normalize(xb)
        with dc.no_grad():
            z = self.forward_normalized(xn).data
        y = denormalize(z, mu, sd)
        return y[0] if single else y

    forward = predict

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def scale_weights(self) -> np.ndarray | None:
        return self.safe.last_alpha

    # ------------------------------------------------------------ state

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]):
        own = self.named_parameters()
        missing, unexpected = sorted(set(own) - set(state)), sorted(set(state) - set(own))
        bad_shape = sorted(k for k in set(own) & set(state) if own[k].shape != tuple(np.shape(state[k])))
        if missing or unexpected or bad_shape:
            raise CheckpointError(
                f"parameter mismatch: missing={missing} unexpected={unexpected} wrong_shape={bad_shape}"
            )
        for k, p in own.items():
            p.data[...] = state[k]


# ---------------------------------------------------------------- checkpoint file

MAGIC = b"SFCKPT\x00\x01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    step: int = 0
    normalization: dict = field(default_factory=dict)
    extra_blocks: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: ScatterFusion, step: int = 0, **kw) -> "Checkpoint":
        return cls(model.config, model.state(), step, **kw)

    def build_model(self) -> ScatterFusion:
        model = ScatterFusion(self.config)
        model.load_state(self.params)
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write ``ckpt`` in the binary layout described in ``docs/checkpoint-format.md``."""
    blocks = [("param", k, v) for k, v in ckpt.params.items()]
    blocks += [("extra", k, v) for k, v in ckpt.extra_blocks.items()]
    manifest, offset, payload = [], 0, []
    for kind, name, arr in blocks:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"kind": kind, "name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    data = b"".join(payload)
    header = {
        "format": "scatterfusion-checkpoint",
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "config": ckpt.config.to_dict(),
        "step": int(ckpt.step),
        "normalization": ckpt.normalization,
        "meta": ckpt.meta,
        "blocks": manifest,
        "data_nbytes": len(data),
        "data_crc32": zlib.crc32(data),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(data)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a scatterfusion checkpoint")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if len(raw) < start + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {header.get('version')} != {FORMAT_VERSION}")
    data = raw[start + hlen :]
    if len(data) != header["data_nbytes"]:
        raise CheckpointError(f"{path}: truncated data ({len(data)} of {header['data_nbytes']} bytes)")
    if zlib.crc32(data) != header["data_crc32"]:
        raise CheckpointError(f"{path}: data checksum mismatch")
    params, extra = {}, {}
    for b in header["blocks"]:
        arr = np.frombuffer(data, dtype="<f8", count=b["nbytes"] // 8, offset=b["offset"])
        arr = arr.astype(np.float64).reshape(b["shape"])
        (params if b["kind"] == "param" else extra)[b["name"]] = arr
    return Checkpoint(
        ModelConfig.from_dict(header["config"]),
        params,
        header["step"],
        header.get("normalization", {}),
        extra,
        header.get("meta", {}),
    )
