"""AdamW training with cosine annealing, early stopping and metrics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import diffcore as dc
from .dataio import Windows, denormalize, normalize
from .diffcore import Tensor
from .errors import ConfigError, DataError
from .forecaster import ScatterFusion
from .tsr import LossWeights, final_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    weight_decay: float = 1e-2
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    patience: int = 5
    clip_norm: float = 5.0
    max_steps: int | None = None
    period: int | None = None
    loss: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossWeights(**self.loss)
        if not 0 <= self.lr_min <= self.lr_max:
            raise ConfigError(f"need 0 <= lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if not (0 <= self.b1 < 1 and 0 <= self.b2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.patience < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs, batch_size and patience must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    if total_steps <= 0 or step >= total_steps:
        return lr_min
    step = max(step, 0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / total_steps))


class AdamW:
    """Adam moments with weight decay applied directly to the weights."""

    def __init__(self, params: dict[str, Tensor], b1=0.9, b2=0.999, eps=1e-8, weight_decay=1e-2):
        self.params = params
        self.b1, self.b2, self.eps, self.weight_decay = b1, b2, eps, weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> bool:
        """Apply one update; returns False (and changes nothing) on non-finite gradients."""
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            return False
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data *= 1 - lr * self.weight_decay
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True

    def state_blocks(self) -> dict[str, np.ndarray]:
        out = {f"optim.m.{k}": v.copy() for k, v in self.m.items()}
        out.update({f"optim.v.{k}": v.copy() for k, v in self.v.items()})
        out["optim.t"] = np.array([float(self.t)])
        return out

    def load_blocks(self, blocks: dict[str, np.ndarray]):
        for k in self.params:
            self.m[k][...] = blocks[f"optim.m.{k}"]
            self.v[k][...] = blocks[f"optim.v.{k}"]
        self.t = int(blocks["optim.t"][0])


def adamw_step(params, grads, state: AdamW, lr: float) -> bool:
    return state.step(grads, lr)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------- metrics


def mse_mae(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    err = np.asarray(pred) - np.asarray(target)
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


def predict_windows(model: ScatterFusion, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = [model.predict(inputs[i : i + batch_size]) for i in range(0, len(inputs), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.config.T_p, model.config.C))


def evaluate(model: ScatterFusion, data: Windows, batch_size: int = 256) -> dict:
    """MSE/MAE on de-normalised forecasts plus the mean SAFE scale weights."""
    if len(data) == 0:
        raise DataError("no windows to evaluate")
    alphas = []
    preds = []
    for i in range(0, len(data), batch_size):
        preds.append(model.predict(data.inputs[i : i + batch_size]))
        if model.scale_weights() is not None:
            alphas.append(model.scale_weights())
    pred = np.concatenate(preds)
    mse, mae = mse_mae(pred, data.targets)
    report = {"mse": mse, "mae": mae, "windows": len(data)}
    if alphas:
        report["alpha"] = np.concatenate(alphas).mean(axis=0).tolist()
    return report


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: ScatterFusion
    best_state: dict
    best_val_mse: float
    best_epoch: int
    steps: int
    history: list = field(default_factory=list)
    log_records: list = field(default_factory=list)
    optimizer: AdamW | None = None


def loss_terms(model: ScatterFusion, x: np.ndarray, y: np.ndarray, weights: LossWeights, period: int):
    """Loss on one batch in the z-scored space of each input window."""
    xn, mu, sd = normalize(x)
    yn = (y - mu) / sd
    if not model.config.use_tsr_loss:
        weights = LossWeights(weights.lambda_trend, weights.lambda_seasonal, weights.lambda_residual, 0.0)
    return final_loss(Tensor(yn), model.forward_normalized(xn), weights, period)


def resolve_period(model: ScatterFusion, period: int | None, train_values: np.ndarray | None) -> int:
    from .tsr import detect_period

    high = max(1, model.config.T_p // 2)
    if period is not None:
        return int(min(max(1, period), high))
    if train_values is None:
        return min(4, high)
    return int(min(detect_period(train_values, 4, max(4, model.config.T_s // 2)), high))


def train(
    model: ScatterFusion,
    train_data: Windows,
    val_data: Windows,
    config: TrainConfig,
    train_values: np.ndarray | None = None,
    on_step: Callable[[dict], None] | None = None,
    optimizer: AdamW | None = None,
    start_step: int = 0,
) -> TrainResult:
    """Run the training loop and restore the best-validation parameters.

    ``optimizer`` and ``start_step`` resume an interrupted run: steps before
    ``start_step`` are skipped without touching the parameters.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise DataError("training and validation splits must each contain at least one window")
    period = resolve_period(model, config.period, train_values)
    params = model.named_parameters()
    opt = optimizer or AdamW(params, config.b1, config.b2, config.eps, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    n = len(train_data)
    per_epoch = -(-n // config.batch_size)
    total = config.epochs * per_epoch
    if config.max_steps is not None:
        total = min(total, config.max_steps)

    best = (math.inf, -1, model.state())
    history, records = [], []
    stale = 0
    step = start_step
    for epoch in range(config.epochs):
        # drawn for every epoch, including skipped ones, so a resumed run
        # sees the same batch order as an uninterrupted one
        order = rng.permutation(n)
        if (epoch + 1) * per_epoch <= start_step:
            continue
        losses = []
        for b in range(per_epoch):
            if epoch * per_epoch + b < start_step:
                continue
            if step >= total:
                break
            idx = np.sort(order[b * config.batch_size : (b + 1) * config.batch_size])
            lr = cosine_lr(step, total, config.lr_max, config.lr_min)
            for p in params.values():
                p.grad = None
            with dc.Tape() as tape:
                total_loss, mse_term, tsr_term = loss_terms(
                    model, train_data.inputs[idx], train_data.targets[idx], config.loss, period
                )
            dc.backward(tape, total_loss, params.values())
            grads = {k: p.grad if p.grad is not None else np.zeros_like(p.data) for k, p in params.items()}
            gnorm = clip_gradients(grads, config.clip_norm)
            clipped = bool(config.clip_norm and gnorm > config.clip_norm)
            accepted = opt.step(grads, lr)
            rec = {
                "step": step,
                "epoch": epoch,
                "lr": lr,
                "loss": float(total_loss.data),
                "mse": float(mse_term.data),
                "tsr": float(tsr_term.data),
                "grad_norm": gnorm,
                "clipped": clipped,
                "accepted": accepted,
            }
            if clipped:
                log.debug("step %d: gradient norm %.3g clipped to %.3g", step, gnorm, config.clip_norm)
            if not accepted:
                log.warning("step %d: non-finite gradient, update skipped", step)
            records.append(rec)
            if on_step:
                on_step(rec)
            losses.append(rec["loss"])
            step += 1
        if not losses:
            break
        val = evaluate(model, val_data)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_mse": val["mse"], "val_mae": val["mae"]})
        log.info("epoch %d train_loss=%.5f val_mse=%.5f", epoch, history[-1]["train_loss"], val["mse"])
        if val["mse"] < best[0]:
            best = (val["mse"], epoch, model.state())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state(best[2])
    return TrainResult(model, best[2], best[0], best[1], step, history, records, opt)


def dump_jsonl(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
