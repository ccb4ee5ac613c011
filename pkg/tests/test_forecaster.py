import numpy as np
import pytest

from scatterfusion import diffcore as dc
from scatterfusion.errors import CheckpointError, ConfigError, DataError, DimensionError, SupportError
from scatterfusion.forecaster import (
    Checkpoint,
    ModelConfig,
    ScatterFusion,
    group_rows,
    load_checkpoint,
    positional_encoding,
    save_checkpoint,
)

SMALL = dict(T_s=32, T_p=8, C=2, D=8, d=4, J=3, strides=(1, 2), num_mrta_layers=1)


def small(**kw):
    return ScatterFusion(ModelConfig(**{**SMALL, **kw}))


def test_embed_examples(rng):
    m = small()
    m.embed_proj.bias.data[...] = 0
    assert np.array_equal(m.embed(np.zeros((32, 2))).data, positional_encoding(32, 8))
    x, y = rng.normal(size=(32, 2)), rng.normal(size=(32, 2))
    lhs = m.embed(x + y).data
    rhs = m.embed(x).data + m.embed(y).data - m.embed(np.zeros((32, 2))).data
    assert np.abs(lhs - rhs).max() < 1e-12
    wide = ScatterFusion(ModelConfig(T_s=96, T_p=24, C=7, D=16, d=8))
    assert wide.embed(np.zeros((96, 7))).shape == (96, 16)


@pytest.mark.parametrize("T_p", [96, 192, 336, 720])
def test_output_shape_for_long_horizons(rng, T_p):
    m = ScatterFusion(ModelConfig(T_s=96, T_p=T_p, C=3, D=8, d=4, J=3, num_mrta_layers=1))
    assert m.predict(rng.normal(size=(96, 3))).shape == (T_p, 3)
    assert m.predict(rng.normal(size=(2, 96, 3))).shape == (2, T_p, 3)


def test_forward_is_deterministic(rng):
    x = rng.normal(size=(4, 32, 2))
    a, b = small(seed=3), small(seed=3)
    assert np.array_equal(a.predict(x), a.predict(x))
    assert np.array_equal(a.predict(x), b.predict(x))
    assert not np.array_equal(a.predict(x), small(seed=4).predict(x))


def test_forward_input_errors(rng):
    m = small()
    with pytest.raises(DimensionError):
        m.predict(rng.normal(size=(32, 3)))
    bad = rng.normal(size=(32, 2))
    bad[3, 1] = np.nan
    with pytest.raises(DataError):
        m.predict(bad)


def test_end_to_end_gradient(rng):
    m = small(T_p=2)
    for p in m.parameters():
        p.data += 0.05 * rng.normal(size=p.shape)
    x, y = rng.normal(size=(2, 32, 2)), rng.normal(size=(2, 2, 2))
    c = dc.Tensor(rng.normal(size=y.shape))
    params = [m.named_parameters()[k] for k in ("bank.kernels", "safe.w_alpha", "blocks.0.w_logits", "group_proj.1.weight")]

    def loss():
        return dc.tsum(m.forward_normalized(x) * c) + dc.mse(m.forward_normalized(x), dc.Tensor(y))

    assert dc.finite_diff_check(loss, params) < 1e-4


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(T_p=721)
    with pytest.raises(ConfigError):
        ModelConfig(J=1)
    with pytest.raises(ConfigError):
        ModelConfig(strides=(2, 1))
    with pytest.raises(SupportError):
        ModelConfig(T_s=16, J=4)
    with pytest.raises(ConfigError):
        ModelConfig().ablate("attention")
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"T_s": 96, "colour": 1})


def test_group_rows_cover_every_coefficient():
    for J in (2, 3, 4, 5):
        rows = group_rows(J)
        covered = sorted({r for g in rows for r in g if r != 0})
        assert covered == list(range(1, 1 + J + J * (J - 1) // 2))
        assert all(g[0] == 0 for g in rows)


def test_ablation_parameter_counts():
    base = ModelConfig(**SMALL)
    full = ScatterFusion(base).num_parameters()
    counts = {}
    for name in ("hstm", "safe", "mrta", "tsr"):
        counts[name] = ScatterFusion(base.ablate(name)).num_parameters()
        assert counts[name] <= full
    assert full - counts["hstm"] == 3 * 7
    assert full - counts["safe"] == 3 * 8
    assert counts["tsr"] == full
    assert counts["mrta"] < full
    both = ScatterFusion(base.ablate("safe", "mrta")).num_parameters()
    assert both <= min(counts["safe"], counts["mrta"])


def test_checkpoint_roundtrip_is_bitwise(tmp_path, rng):
    m = small(seed=7)
    for p in m.parameters():
        p.data += rng.normal(size=p.shape) / 3
    path = tmp_path / "m.sfc"
    extra = {"optim.t": np.array([4.0])}
    save_checkpoint(Checkpoint.from_model(m, step=12, extra_blocks=extra, meta={"period": 4}), path)
    ck = load_checkpoint(path)
    assert ck.step == 12 and ck.meta == {"period": 4}
    assert np.array_equal(ck.extra_blocks["optim.t"], [4.0])
    x = rng.normal(size=(3, 32, 2))
    assert np.array_equal(ck.build_model().predict(x), m.predict(x))
    for k, v in m.state().items():
        assert np.array_equal(ck.params[k], v)


def test_checkpoint_mismatch_names_keys(tmp_path):
    path = tmp_path / "m.sfc"
    save_checkpoint(Checkpoint.from_model(small()), path)
    params = load_checkpoint(path).params
    other = small(strides=(1, 2, 4))
    with pytest.raises(CheckpointError, match=r"missing=\['blocks\.0\.wk\.2'"):
        other.load_state(params)
    with pytest.raises(CheckpointError, match="wrong_shape"):
        small(D=16, d=4).load_state(params)


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "m.sfc"
    save_checkpoint(Checkpoint.from_model(small()), path)
    raw = path.read_bytes()
    for cut in (4, 20, len(raw) - 8):
        bad = tmp_path / f"cut{cut}.sfc"
        bad.write_bytes(raw[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)
    flipped = bytearray(raw)
    flipped[-3] ^= 0xFF
    (tmp_path / "flip.sfc").write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "flip.sfc")
    (tmp_path / "junk.sfc").write_bytes(b"hello world, not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.sfc")


def test_checkpoint_version_mismatch(tmp_path):
    import json
    import struct

    from scatterfusion.forecaster import MAGIC

    path = tmp_path / "m.sfc"
    save_checkpoint(Checkpoint.from_model(small()), path)
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen])
    header["version"] = 99
    head = json.dumps(header).encode()
    path.write_bytes(MAGIC + struct.pack("<Q", len(head)) + head + raw[16 + hlen :])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
