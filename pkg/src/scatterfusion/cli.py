"""Command-line interface.

Exit codes: 0 on success, 1 on data, contract or checkpoint errors, 2 on
usage errors. Every command writes ``manifest.json`` next to its outputs.

Only the standard library and the exception module are imported at module
level, so ``--threads`` can take effect before numpy loads its BLAS.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ScatterFusionError, UsageError

log = logging.getLogger("scatterfusion")

SCHEMA_VERSION = 1
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


class Parser(argparse.ArgumentParser):
    """argparse with exit code 2 and close-match suggestions for unknown flags."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def parse_args(self, args=None, namespace=None):
        ns, extra = self.parse_known_args(args, namespace)
        if extra:
            sub = getattr(ns, "_parser", self)
            known = [o for a in sub._actions for o in a.option_strings]
            hints = []
            for tok in extra:
                flag = tok.split("=", 1)[0]
                match = difflib.get_close_matches(flag, known, n=1, cutoff=0.5) if flag.startswith("-") else []
                hints.append(f"{tok!r}" + (f" (did you mean {match[0]}?)" if match else ""))
            raise UsageError(f"{sub.prog}: unrecognized arguments: {', '.join(hints)}")
        return ns


# ---------------------------------------------------------------- config

# flag dest -> (section, key, type)
MODEL_FLAGS = {
    "T_s": ("model", "T_s", int),
    "T_p": ("model", "T_p", int),
    "D": ("model", "D", int),
    "d": ("model", "d", int),
    "J": ("model", "J", int),
    "strides": ("model", "strides", None),
    "layers": ("model", "num_mrta_layers", int),
    "K_g": ("model", "K_g", int),
    "seed": ("model", "seed", int),
}
TRAIN_FLAGS = {
    "lr_max": ("train", "lr_max", float),
    "lr_min": ("train", "lr_min", float),
    "weight_decay": ("train", "weight_decay", float),
    "epochs": ("train", "epochs", int),
    "batch_size": ("train", "batch_size", int),
    "patience": ("train", "patience", int),
    "clip_norm": ("train", "clip_norm", float),
    "max_steps": ("train", "max_steps", int),
    "period": ("train", "period", int),
    "beta": ("train", "beta", float),
}
DATA_FLAGS = {
    "data": ("data", "path", str),
    "synth": ("data", "synth", None),
    "timestamp_column": ("data", "timestamp_column", str),
    "on_missing": ("data", "on_missing", str),
    "strict_boundary": ("data", "strict_boundary", bool),
    "stride": ("data", "stride", int),
}
DATA_DEFAULTS = {
    "path": None,
    "synth": None,
    "timestamp_column": None,
    "on_missing": "reject",
    "strict_boundary": False,
    "stride": 1,
    "split": {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2},
}


def parse_int_list(text: str) -> list[int]:
    """``"3..6"`` or ``"256,512,1024"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def parse_synth(text: str) -> dict:
    """``kind[:n=5000,channels=2,seed=0,...]``."""
    kind, _, rest = text.partition(":")
    out = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        try:
            out[key.strip()] = float(val) if "." in val or "e" in val else int(val)
        except ValueError:
            raise UsageError(f"bad synthetic option {item!r}") from None
    return out


def _yaml_loader():
    import re

    import yaml

    class Loader(yaml.SafeLoader):
        pass

    # YAML 1.1 reads "1e-5" as a string; accept exponent floats without a dot
    Loader.add_implicit_resolver(
        "tag:yaml.org,2002:float",
        re.compile(
            r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
            |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
            |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
            |[-+]?\.(?:inf|Inf|INF)
            |\.(?:nan|NaN|NAN))$""",
            re.X,
        ),
        list("-+0123456789."),
    )
    return Loader


def load_config_file(path) -> dict:
    import yaml

    from .errors import ConfigError

    try:
        doc = yaml.load(Path(path).read_text(), Loader=_yaml_loader()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if "manifest_version" in doc:  # a previous run's manifest
        doc = doc["config"]
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')}")
    unknown = set(doc) - {"schema_version", "model", "train", "data"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return doc


def resolve_config(args, table: dict) -> dict:
    """Config file (if any) with flags applied on top; defaults filled in."""
    from .forecaster import ModelConfig
    from .trainer import TrainConfig

    doc = load_config_file(args.config) if getattr(args, "config", None) else {"schema_version": SCHEMA_VERSION}
    cfg = {"schema_version": SCHEMA_VERSION}
    cfg["model"] = {**ModelConfig().to_dict(), **doc.get("model", {})}
    train = TrainConfig().to_dict()
    train.update(doc.get("train", {}))
    cfg["train"] = train
    cfg["data"] = {**DATA_DEFAULTS, **doc.get("data", {})}
    for dest, (section, key, _) in table.items():
        val = getattr(args, dest, None)
        if val is None or (val is False and key == "strict_boundary"):
            continue
        if key == "strides":
            val = parse_int_list(val)
        elif key == "synth":
            val = parse_synth(val)
        if key == "beta":
            cfg["train"]["loss"] = {**cfg["train"]["loss"], "beta": val}
            continue
        cfg[section][key] = val
        if key == "path":
            cfg["data"]["synth"] = None
        elif key == "synth":
            cfg["data"]["path"] = None
    return cfg


def load_data(data_cfg: dict):
    """Return ``(Dataset, input_hashes)``."""
    from .dataio import load_csv, synth
    from .errors import ConfigError

    if data_cfg.get("path"):
        path = Path(data_cfg["path"])
        ds = load_csv(path, data_cfg.get("timestamp_column"), data_cfg.get("on_missing", "reject"))
        return ds, {str(path): sha256_file(path)}
    if data_cfg.get("synth"):
        spec = dict(data_cfg["synth"])
        kind = spec.pop("kind")
        n = spec.pop("n", 5000)
        ds = synth(kind, n, **spec)
        return ds, {f"synth:{kind}": hashlib.sha256(ds.values.tobytes()).hexdigest()}
    raise ConfigError("no input data: pass --data FILE.csv or --synth KIND")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, args, argv, config: dict, inputs: dict, artifacts: list) -> Path:
    import numpy as np

    from . import __version__

    manifest = {
        "manifest_version": 1,
        "tool": "scatterfusion",
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "seed": config.get("model", {}).get("seed", config.get("seed")),
        "threads": args.threads,
        "deterministic": bool(args.deterministic),
        "inputs": inputs,
        "artifacts": sorted(str(Path(a).name) for a in artifacts),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def dump_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- shared model plumbing


def model_config(cfg: dict, channels: int):
    from .forecaster import ModelConfig

    m = dict(cfg["model"])
    m["C"] = channels
    return ModelConfig.from_dict(m)


def train_config(cfg: dict):
    from dataclasses import fields

    from .errors import ConfigError
    from .trainer import TrainConfig

    unknown = set(cfg["train"]) - {f.name for f in fields(TrainConfig)}
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    try:
        return TrainConfig(**cfg["train"])
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from None


def make_splits(values, cfg: dict, T_s: int, T_p: int):
    from .dataio import SplitSpec, split, windows

    d = cfg["data"]
    ranges = split(len(values), T_s, T_p, SplitSpec(**d["split"]), d["strict_boundary"])
    return ranges, {
        name: windows(values, rng, T_s, T_p, d["stride"], d["strict_boundary"])
        for name, rng in zip(("train", "val", "test"), ranges)
    }


def model_from_checkpoint(path, ablate: str | None = None):
    """Load a checkpoint; ``ablate`` bypasses one block at inference time.

    Parameters that the bypassed model no longer has, or whose shape changed
    (the stride mixing logits), are dropped.
    """
    from .forecaster import ScatterFusion, load_checkpoint

    ckpt = load_checkpoint(path)
    if not ablate:
        return ckpt, ckpt.build_model()
    model = ScatterFusion(ckpt.config.ablate(ablate))
    own = model.named_parameters()
    keep = {k: v for k, v in ckpt.params.items() if k in own and own[k].shape == v.shape}
    for k in own:
        keep.setdefault(k, own[k].data.copy())
    model.load_state(keep)
    return ckpt, model


# ---------------------------------------------------------------- commands


def cmd_scatter(args, argv) -> list:
    import numpy as np

    from . import plotting
    from .dataio import write_csv
    from .filterbank import FilterBank
    from .hstm import full_scattering
    from .diffcore import no_grad

    out = _out_dir(args)
    data_cfg = {**DATA_DEFAULTS, "path": args.data, "synth": parse_synth(args.synth) if args.synth else None}
    data_cfg.update(timestamp_column=args.timestamp_column, on_missing=args.on_missing or "reject")
    ds, inputs = load_data(data_cfg)
    bank = FilterBank.build(args.J, ds.n, boundary=args.boundary)
    with no_grad():
        coeffs = full_scattering(ds.values.T, bank, subsample=args.subsample)
    stacked = coeffs.stacked()  # (C, rows, T')
    labels = coeffs.labels()
    artifacts = []
    rows = (
        (c, o, j1, j2, t, repr(float(stacked[c, r, t])))
        for c in range(stacked.shape[0])
        for r, (o, j1, j2) in enumerate(labels)
        for t in range(stacked.shape[2])
    )
    path = out / "coefficients.csv"
    write_csv(path, ["channel", "order", "j1", "j2", "t", "value"], rows)
    artifacts.append(path)
    if args.dump_filters:
        path = out / "filters.csv"
        write_csv(path, ["scale", "index", "real", "imag"], ((s, i, repr(re), repr(im)) for s, i, re, im in bank.filters_table()))
        artifacts.append(path)
    artifacts.append(plotting.scalogram(np.asarray(coeffs.s1.data[0]), out / "scalogram.png"))
    config = {"J": args.J, "subsample": args.subsample, "boundary": args.boundary, "data": data_cfg}
    artifacts.append(write_manifest(out, args, argv, config, inputs, artifacts))
    print(f"{stacked.shape[0]} channel(s), {len(labels)} paths, {stacked.shape[2]} steps -> {out}")
    return artifacts


def cmd_decompose(args, argv) -> list:
    from . import plotting
    from .dataio import write_csv
    from .tsr import decompose_series, detect_period

    out = _out_dir(args)
    data_cfg = {**DATA_DEFAULTS, "path": args.data, "synth": parse_synth(args.synth) if args.synth else None}
    data_cfg.update(timestamp_column=args.timestamp_column, on_missing=args.on_missing or "reject")
    ds, inputs = load_data(data_cfg)
    period = args.period or detect_period(ds.values, 4, ds.n // 2)
    tr, se, re = decompose_series(ds.values, period)
    path = out / "decomposition.csv"
    rows = (
        (t, c, repr(float(tr[t, c])), repr(float(se[t, c])), repr(float(re[t, c])))
        for t in range(ds.n)
        for c in range(ds.channels)
    )
    write_csv(path, ["t", "channel", "trend", "seasonal", "residual"], rows)
    artifacts = [path, plotting.decomposition(ds.values[:, 0], tr[:, 0], se[:, 0], re[:, 0], out / "decomposition.png")]
    config = {"period": int(period), "period_source": "flag" if args.period else "autocorrelation", "data": data_cfg}
    artifacts.append(write_manifest(out, args, argv, config, inputs, artifacts))
    print(f"period {period}; {ds.n} steps x {ds.channels} channel(s) -> {path}")
    return artifacts


def cmd_train(args, argv) -> list:
    from . import plotting
    from .baselines import LinearBaseline, persistence
    from .forecaster import Checkpoint, ScatterFusion, save_checkpoint
    from .trainer import evaluate, mse_mae, resolve_period, train

    out = _out_dir(args)
    cfg = resolve_config(args, {**MODEL_FLAGS, **TRAIN_FLAGS, **DATA_FLAGS})
    ds, inputs = load_data(cfg["data"])
    mcfg = model_config(cfg, ds.channels)
    if args.ablate:
        mcfg = mcfg.ablate(args.ablate)
    tcfg = train_config(cfg)
    ranges, splits = make_splits(ds.values, cfg, mcfg.T_s, mcfg.T_p)
    train_values = ds.values[ranges.train[0] : ranges.train[1]]
    artifacts = []

    if args.ablation_study:
        from . import ablation

        rows = ablation.run_study(mcfg, tcfg, splits["train"], splits["val"], splits["test"], train_values)
        table = ablation.format_table(rows, f"synthetic ({mcfg.T_p})" if cfg["data"]["synth"] else f"test ({mcfg.T_p})")
        (out / "ablation.md").write_text(table + "\n")
        artifacts += [out / "ablation.md", dump_json(out / "ablation.json", rows)]
        artifacts.append(plotting.ablation_bars(rows, out / "ablation.png"))
        artifacts.append(write_manifest(out, args, argv, cfg, inputs, artifacts))
        print(table)
        return artifacts

    period = resolve_period(ScatterFusion(mcfg), tcfg.period, train_values)
    tcfg.period = period
    cfg["train"]["period"] = period
    cfg["model"] = mcfg.to_dict()
    model = ScatterFusion(mcfg)
    log_path = out / "train_log.jsonl"
    with log_path.open("w") as fh:
        result = train(
            model, splits["train"], splits["val"], tcfg, train_values, on_step=lambda r: fh.write(json.dumps(r) + "\n")
        )
    test = splits["test"]
    ols = LinearBaseline().fit(splits["train"])
    metrics = {
        "val": evaluate(model, splits["val"]),
        "test": evaluate(model, test),
        "baselines": {
            "persistence": dict(zip(("mse", "mae"), mse_mae(persistence(test.inputs, mcfg.T_p), test.targets))),
            "linear": dict(zip(("mse", "mae"), mse_mae(ols.predict(test.inputs), test.targets))),
        },
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "steps": result.steps,
        "period": period,
        "parameters": model.num_parameters(),
        "history": result.history,
    }
    ckpt_path = out / "checkpoint.sfc"
    save_checkpoint(
        Checkpoint.from_model(
            model,
            result.steps,
            normalization={"kind": "per-window z-score", "eps": 1e-5},
            meta={"period": period, "columns": ds.columns, "inputs": inputs},
        ),
        ckpt_path,
    )
    artifacts += [ckpt_path, dump_json(out / "metrics.json", metrics), log_path]
    artifacts.append(plotting.loss_curve(result.log_records, result.history, out / "loss.png"))
    pred = model.predict(test.inputs[:1])[0]
    artifacts.append(plotting.forecast(test.inputs[0], test.targets[0], pred, out / "forecast.png"))
    artifacts.append(write_manifest(out, args, argv, cfg, inputs, artifacts))
    t, b = metrics["test"], metrics["baselines"]
    print(
        f"test mse {t['mse']:.6g} mae {t['mae']:.6g} | persistence mse {b['persistence']['mse']:.6g}"
        f" | linear mse {b['linear']['mse']:.6g} | {result.steps} steps"
    )
    return artifacts


def _eval_setup(args):
    ckpt, model = model_from_checkpoint(args.checkpoint, getattr(args, "ablate", None))
    cfg = resolve_config(args, DATA_FLAGS)
    cfg["model"] = model.config.to_dict()
    del cfg["train"]
    ds, inputs = load_data(cfg["data"])
    inputs[str(args.checkpoint)] = sha256_file(args.checkpoint)
    if ds.channels != model.config.C:
        from .errors import DataError

        raise DataError(f"data has {ds.channels} channels, checkpoint expects {model.config.C}")
    _, splits = make_splits(ds.values, cfg, model.config.T_s, model.config.T_p)
    if args.split == "all":
        from .dataio import windows

        d = cfg["data"]
        data = windows(ds.values, (0, ds.n), model.config.T_s, model.config.T_p, d["stride"], True)
    else:
        data = splits[args.split]
    cfg["split"] = args.split
    return ckpt, model, cfg, data, inputs


def cmd_predict(args, argv) -> list:
    from . import plotting
    from .dataio import write_csv
    from .trainer import predict_windows

    out = _out_dir(args)
    _, model, cfg, data, inputs = _eval_setup(args)
    pred = predict_windows(model, data.inputs)
    T_s = model.config.T_s
    rows = (
        (w, int(data.starts[w]) + T_s + k, c, repr(float(data.targets[w, k, c])), repr(float(pred[w, k, c])))
        for w in range(len(data))
        for k in range(pred.shape[1])
        for c in range(pred.shape[2])
    )
    path = out / "predictions.csv"
    write_csv(path, ["window_id", "t", "channel", "y_true", "y_pred"], rows)
    artifacts = [path, plotting.forecast(data.inputs[0], data.targets[0], pred[0], out / "forecast.png")]
    artifacts.append(write_manifest(out, args, argv, cfg, inputs, artifacts))
    print(f"{len(data)} windows -> {path}")
    return artifacts


def cmd_evaluate(args, argv) -> list:
    from .trainer import evaluate

    out = _out_dir(args)
    _, model, cfg, data, inputs = _eval_setup(args)
    report = evaluate(model, data)
    report["split"] = args.split
    report["ablate"] = args.ablate
    if args.ablate == "tsr":
        report["note"] = "the TSR term only changes training; inference is identical to the full model"
    artifacts = [dump_json(out / "metrics.json", report)]
    artifacts.append(write_manifest(out, args, argv, cfg, inputs, artifacts))
    label = f" (without {args.ablate})" if args.ablate else ""
    print(f"{args.split}{label}: mse {report['mse']:.6g} mae {report['mae']:.6g} over {report['windows']} windows")
    return artifacts


def cmd_check_invariance(args, argv) -> list:
    from . import plotting
    from .invariance import deformation_suite, translation_suite

    out = _out_dir(args)
    kernels, inputs = None, {}
    if args.checkpoint:
        ckpt, _ = model_from_checkpoint(args.checkpoint)
        kernels = ckpt.params.get("bank.kernels")
        inputs[str(args.checkpoint)] = sha256_file(args.checkpoint)
        if kernels is None:
            log.warning("checkpoint has frozen wavelets; measuring the fixed bank")
    Js = parse_int_list(args.J)
    eps = [float(e) for e in args.eps.split(",")]
    seeds = range(args.seed, args.seed + args.signals)
    trans = translation_suite(Js, seeds, args.T, args.shift, kernels=kernels)
    deform = deformation_suite(eps, seeds, args.T, args.deform_J, kernels=kernels)
    report = {"translation": trans, "deformation": deform, "pass": trans["pass"] and deform["pass"]}
    artifacts = [dump_json(out / "invariance.json", report)]
    artifacts.append(plotting.translation_decay(trans, out / "translation.png"))
    artifacts.append(plotting.deformation_slope(deform, out / "deformation.png"))
    config = {k: getattr(args, k) for k in ("J", "eps", "T", "shift", "deform_J", "signals", "seed", "checkpoint")}
    artifacts.append(write_manifest(out, args, argv, config, inputs, artifacts))
    print(
        f"translation: {trans['monotone']}/{trans['count']} monotone, mean ratio {trans['mean_ratio']:.3f}"
        f" -> {'PASS' if trans['pass'] else 'FAIL'}"
    )
    slopes = ", ".join(f"{r['slope']:.2f}" for r in deform["signals"])
    print(f"deformation: {deform['passed']}/{deform['count']} slopes in range [{slopes}] -> {'PASS' if deform['pass'] else 'FAIL'}")
    if args.strict and not report["pass"]:
        args._status = 1
    return artifacts


def cmd_bench(args, argv) -> list:
    from . import bench, plotting
    from .dataio import write_csv
    from .forecaster import ModelConfig

    out = _out_dir(args)
    cfg = resolve_config(args, MODEL_FLAGS)
    m = cfg["model"]
    m["C"] = args.C
    if args.T_p is None:
        m["T_p"] = 96
    base = ModelConfig.from_dict(m)
    report = bench.run(parse_int_list(args.lengths), base, args.repeats)
    artifacts = [dump_json(out / "bench.json", report)]
    path = out / "bench.csv"
    write_csv(path, ["length", "median_s"], ((r["length"], repr(r["median_s"])) for r in report["rows"]))
    artifacts += [path, plotting.bench_growth(report, out / "bench.png")]
    artifacts.append(write_manifest(out, args, argv, {"model": base.to_dict(), "repeats": args.repeats}, {}, artifacts))
    print(bench.format_table(report))
    if args.strict and not report["pass"]:
        args._status = 1
    return artifacts


# ---------------------------------------------------------------- parser


def _add_data(p, with_split=False):
    p.add_argument("--data", help="input CSV (header row required)")
    p.add_argument("--synth", help="synthetic input instead of --data: KIND[:n=5000,channels=2,seed=0,...]")
    p.add_argument("--timestamp-column", dest="timestamp_column", help="name of the timestamp column")
    p.add_argument("--on-missing", dest="on_missing", choices=("reject", "interpolate"), help="blank cell policy")
    if with_split:
        p.add_argument("--strict-boundary", dest="strict_boundary", action="store_true", default=None,
                       help="windows never read values from the preceding split")
        p.add_argument("--stride", type=int, help="step between consecutive windows")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--T-s", dest="T_s", type=int, help="input length")
    g.add_argument("--T-p", dest="T_p", type=int, help="forecast horizon")
    g.add_argument("--D", type=int, help="model width")
    g.add_argument("--d", type=int, help="attention head width")
    g.add_argument("--J", type=int, help="number of wavelet scales")
    g.add_argument("--strides", help="MRTA pooling strides, e.g. 1,2,4")
    g.add_argument("--layers", type=int, help="number of MRTA blocks")
    g.add_argument("--K-g", dest="K_g", type=int, help="learnable kernel length (odd)")
    g.add_argument("--seed", type=int, help="parameter initialisation seed")


def _add_train(p):
    g = p.add_argument_group("training")
    g.add_argument("--lr-max", dest="lr_max", type=float)
    g.add_argument("--lr-min", dest="lr_min", type=float)
    g.add_argument("--weight-decay", dest="weight_decay", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--clip-norm", dest="clip_norm", type=float)
    g.add_argument("--max-steps", dest="max_steps", type=int)
    g.add_argument("--period", type=int, help="decomposition period (default: autocorrelation peak)")
    g.add_argument("--beta", type=float, help="weight of the decomposition loss")


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    common.add_argument("--deterministic", action="store_true", help="single thread, reproducible outputs")
    common.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--out", default=".", help="output directory")

    parser = Parser(prog="scatterfusion", description="Scattering-based time series forecaster.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func, _parser=p)
        return p

    p = add("scatter", cmd_scatter, "Scattering coefficients of a series (and optionally the filter bank).")
    _add_data(p)
    p.add_argument("--J", type=int, default=4, help="number of wavelet scales")
    p.add_argument("--subsample", action="store_true", help="subsample outputs by 2^(J-1)")
    p.add_argument("--boundary", choices=("reflect", "periodic"), default="reflect")
    p.add_argument("--dump-filters", dest="dump_filters", action="store_true", help="also write filters.csv")

    p = add("decompose", cmd_decompose, "Trend / seasonal / residual split of a series.")
    _add_data(p)
    p.add_argument("--period", type=int, help="seasonal period (default: autocorrelation peak)")

    p = add("train", cmd_train, "Train a forecaster; writes checkpoint, metrics, log and manifest.")
    p.add_argument("--config", help="YAML/JSON config (or a previous manifest.json)")
    _add_data(p, with_split=True)
    _add_model(p)
    _add_train(p)
    p.add_argument("--ablate", choices=("hstm", "safe", "mrta", "tsr"), help="train with one block removed")
    p.add_argument("--ablation-study", dest="ablation_study", action="store_true",
                   help="train the full model and every single-block ablation; write the comparison table")

    for name, func, text in (
        ("predict", cmd_predict, "Forecasts for every window of a split."),
        ("evaluate", cmd_evaluate, "MSE / MAE of a checkpoint on a split."),
    ):
        p = add(name, func, text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--config", help="YAML/JSON config supplying the data section")
        _add_data(p, with_split=True)
        p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        if name == "evaluate":
            p.add_argument("--ablate", choices=("hstm", "safe", "mrta", "tsr"), help="bypass one block at inference")

    p = add("check-invariance", cmd_check_invariance, "Translation and deformation stability of the scattering features.")
    p.add_argument("--J", default="3..6", help="scales to compare, e.g. 3..6 or 3,4,5")
    p.add_argument("--eps", default="0.005,0.01,0.02,0.04", help="peak deformation slopes")
    p.add_argument("--T", type=int, default=1024, help="signal length")
    p.add_argument("--shift", type=int, default=16)
    p.add_argument("--deform-J", dest="deform_J", type=int, default=5, help="J for the deformation suite")
    p.add_argument("--signals", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first signal seed")
    p.add_argument("--checkpoint", help="measure a trained model's filters")
    p.add_argument("--strict", action="store_true", help="exit 1 if any invariant fails")

    p = add("bench", cmd_bench, "Forward time versus input length.")
    p.add_argument("--lengths", default="256,512,1024,2048")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--C", type=int, default=7, help="channels")
    _add_model(p)
    p.add_argument("--strict", action="store_true", help="exit 1 if a doubling ratio exceeds the bound")
    return parser


def _apply_threads(args):
    n = 1 if args.deterministic and args.threads is None else args.threads
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for var in THREAD_VARS:
        os.environ[var] = str(n)
    if "numpy" in sys.modules:
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(n)
        except ImportError:
            log.warning("numpy already loaded; thread cap may not apply")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_threads(args)
        args._status = 0
        args.func(args, argv)
        return args._status
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScatterFusionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
