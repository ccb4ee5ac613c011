import csv
import json

import numpy as np
import pytest

from scatterfusion.cli import load_config_file, main, parse_int_list, parse_synth
from scatterfusion.errors import ConfigError, UsageError
from scatterfusion.forecaster import load_checkpoint

SYNTH = "sine+trend+noise:n=400,channels=2,period=8.0"
MODEL = ["--T-s", "32", "--T-p", "8", "--D", "8", "--d", "4", "--J", "3", "--strides", "1,2", "--layers", "1"]
TRAIN = ["--epochs", "1", "--batch-size", "16", "--stride", "4"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--synth", SYNTH, *MODEL, *TRAIN, "--deterministic", "--out", str(out)])
    assert code == 0
    return out


def test_parse_helpers():
    assert parse_int_list("3..6") == [3, 4, 5, 6]
    assert parse_int_list("256,512") == [256, 512]
    with pytest.raises(UsageError):
        parse_int_list("a..b")
    assert parse_synth("sine:n=100,period=12.5") == {"kind": "sine", "n": 100, "period": 12.5}


def test_usage_errors_exit_2(capsys):
    assert main(["train", "--epoch", "3"]) == 2
    assert "did you mean --epochs" in capsys.readouterr().err
    assert main(["trian"]) == 2
    assert main([]) == 2
    assert main(["bench", "--threads", "0"]) == 2


def test_help_exits_0(capsys):
    assert main(["train", "--help"]) == 0
    assert "--lr-max" in capsys.readouterr().out


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n,3\n")
    assert main(["decompose", "--data", str(bad), "--out", str(tmp_path)]) == 1
    assert "row 3" in capsys.readouterr().err
    assert main(["decompose", "--out", str(tmp_path)]) == 1
    assert main(["evaluate", "--checkpoint", str(bad), "--synth", "sine", "--out", str(tmp_path)]) == 1


def test_train_outputs(trained):
    for name in ("checkpoint.sfc", "metrics.json", "manifest.json", "train_log.jsonl", "loss.png", "forecast.png"):
        assert (trained / name).exists(), name
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["config"]["schema_version"] == 1
    assert manifest["config"]["model"]["C"] == 2 and manifest["config"]["model"]["D"] == 8
    assert manifest["config"]["train"]["epochs"] == 1
    assert manifest["deterministic"] and manifest["seed"] == 0
    assert "checkpoint.sfc" in manifest["artifacts"]
    assert all(len(h) == 64 for h in manifest["inputs"].values())
    metrics = json.loads((trained / "metrics.json").read_text())
    assert {"persistence", "linear"} <= set(metrics["baselines"])
    assert metrics["test"]["mse"] >= 0
    log = [json.loads(line) for line in (trained / "train_log.jsonl").read_text().splitlines()]
    assert log and {"step", "lr", "loss", "mse", "tsr"} <= set(log[0])


def test_rerun_from_manifest_is_bitwise(trained, tmp_path):
    code = main(["train", "--config", str(trained / "manifest.json"), "--deterministic", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "checkpoint.sfc").read_bytes() == (trained / "checkpoint.sfc").read_bytes()
    assert (tmp_path / "train_log.jsonl").read_text() == (trained / "train_log.jsonl").read_text()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "schema_version: 1\n"
        "model: {T_s: 32, T_p: 8, D: 8, d: 4, J: 3, strides: [1, 2], num_mrta_layers: 1}\n"
        "train: {epochs: 1, batch_size: 16, lr_min: 1e-5, max_steps: 2}\n"
        f"data: {{synth: {{kind: sine, n: 400}}, stride: 4}}\n"
    )
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--D", "12", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["model"]["D"] == 12
    assert manifest["config"]["train"]["lr_min"] == 1e-5
    assert load_checkpoint(out / "checkpoint.sfc").config.D == 12


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 2\n")
    with pytest.raises(ConfigError):
        load_config_file(bad)
    bad.write_text("schema_version: 1\noptimizer: {}\n")
    with pytest.raises(ConfigError):
        load_config_file(bad)
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_predict_and_evaluate(trained, tmp_path):
    ck = str(trained / "checkpoint.sfc")
    assert main(["predict", "--checkpoint", ck, "--synth", SYNTH, "--out", str(tmp_path / "p")]) == 0
    rows = read_csv(tmp_path / "p" / "predictions.csv")
    assert list(rows[0]) == ["window_id", "t", "channel", "y_true", "y_pred"]
    assert len(rows) % (8 * 2) == 0
    again = tmp_path / "p2"
    assert main(["predict", "--checkpoint", ck, "--synth", SYNTH, "--out", str(again)]) == 0
    assert (again / "predictions.csv").read_bytes() == (tmp_path / "p" / "predictions.csv").read_bytes()

    assert main(["evaluate", "--checkpoint", ck, "--synth", SYNTH, "--out", str(tmp_path / "e")]) == 0
    full = json.loads((tmp_path / "e" / "metrics.json").read_text())
    y = np.array([[float(r["y_true"]), float(r["y_pred"])] for r in rows])
    assert abs(full["mse"] - np.mean((y[:, 0] - y[:, 1]) ** 2)) < 1e-9
    for block in ("safe", "mrta", "hstm", "tsr"):
        out = tmp_path / f"e_{block}"
        assert main(["evaluate", "--checkpoint", ck, "--synth", SYNTH, "--ablate", block, "--out", str(out)]) == 0
        report = json.loads((out / "metrics.json").read_text())
        assert report["ablate"] == block and report["mse"] >= 0
    tsr = json.loads((tmp_path / "e_tsr" / "metrics.json").read_text())
    assert tsr["mse"] == full["mse"]


def test_channel_mismatch_is_data_error(trained, tmp_path):
    ck = str(trained / "checkpoint.sfc")
    assert main(["evaluate", "--checkpoint", ck, "--synth", "sine:n=400", "--out", str(tmp_path)]) == 1


def test_scatter(tmp_path):
    data = tmp_path / "x.csv"
    t = np.arange(128)
    data.write_text("t,a\n" + "".join(f"{i},{np.sin(i / 3):.6f}\n" for i in t))
    assert main(["scatter", "--data", str(data), "--J", "3", "--dump-filters", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "coefficients.csv")
    assert len(rows) == 7 * 128
    assert {(r["order"], r["j1"], r["j2"]) for r in rows} >= {("0", "0", "0"), ("2", "1", "3")}
    assert (tmp_path / "filters.csv").exists() and (tmp_path / "manifest.json").exists()


def test_decompose(tmp_path):
    assert main(["decompose", "--synth", "sine+trend:n=240", "--period", "24", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "decomposition.csv")
    assert list(rows[0]) == ["t", "channel", "trend", "seasonal", "residual"] and len(rows) == 240
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["period"] == 24
    assert main(["decompose", "--synth", "sine:n=480", "--out", str(tmp_path / "auto")]) == 0
    assert json.loads((tmp_path / "auto" / "manifest.json").read_text())["config"]["period"] == 24


def test_check_invariance(tmp_path, capsys):
    args = ["check-invariance", "--J", "3..5", "--signals", "3", "--T", "512", "--deform-J", "4", "--out", str(tmp_path)]
    assert main(args + ["--strict"]) in (0, 1)
    out = capsys.readouterr().out
    assert "translation:" in out and "deformation:" in out
    report = json.loads((tmp_path / "invariance.json").read_text())
    assert report["translation"]["J"] == [3, 4, 5] and len(report["deformation"]["signals"]) == 3


def test_bench(tmp_path, capsys):
    args = ["bench", "--lengths", "64,128", "--repeats", "1", "--C", "1", "--T-p", "8", "--D", "8", "--d", "4",
            "--J", "3", "--layers", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    report = json.loads((tmp_path / "bench.json").read_text())
    assert [r["length"] for r in report["rows"]] == [64, 128]
    assert "ratio" in capsys.readouterr().out.lower()


def test_ablation_study(tmp_path):
    args = ["train", "--synth", SYNTH, *MODEL, *TRAIN, "--max-steps", "2", "--ablation-study", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = json.loads((tmp_path / "ablation.json").read_text())
    assert [r["variant"] for r in rows][0] == "full" and len(rows) == 5
    table = (tmp_path / "ablation.md").read_text()
    assert "- SAFE" in table and "%" in table


def test_unknown_train_key_exit_1(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("schema_version: 1\ntrain: {learning_rate: 0.1}\ndata: {synth: {kind: sine, n: 400}}\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "learning_rate" in capsys.readouterr().err
