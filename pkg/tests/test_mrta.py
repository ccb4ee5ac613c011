import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterfusion import diffcore as dc
from scatterfusion import mrta
from scatterfusion.diffcore import Tensor
from scatterfusion.errors import ConfigError, ContractError, DimensionError
from scatterfusion.mrta import MRTA, attention, combine, pool, upsample, validate_strides


def loop_attention(H, wq, wk, wv):
    Q, K, V = H @ wq, H @ wk, H @ wv
    T, d = Q.shape
    out = np.zeros((T, V.shape[1]))
    A = np.zeros((T, T))
    for i in range(T):
        s = np.array([sum(Q[i, k] * K[j, k] for k in range(d)) / np.sqrt(d) for j in range(T)])
        e = np.exp(s - s.max())
        A[i] = e / e.sum()
        for j in range(T):
            out[i] += A[i, j] * V[j]
    return out, A


def test_pool_examples():
    H = Tensor(np.array([1.0, 3.0, 5.0, 7.0])[:, None])
    assert np.array_equal(pool(H, 1).data, H.data)
    assert np.array_equal(pool(H, 2).data[:, 0], [2.0, 6.0])
    five = pool(Tensor(np.arange(5.0)[:, None]), 2).data[:, 0]
    assert five.shape == (3,) and five[-1] == 4.0
    with pytest.raises(ContractError):
        pool(H, 0)


def test_attention_examples(rng):
    H = rng.normal(size=(1, 4))
    wq, wk, wv = (rng.normal(size=(4, 3)) for _ in range(3))
    C, A = attention(Tensor(H), Tensor(wq), Tensor(wk), Tensor(wv))
    assert np.array_equal(A.data, [[1.0]]) and np.allclose(C.data, H @ wv, atol=1e-15)

    H = rng.normal(size=(6, 4))
    C, A = attention(Tensor(H), Tensor(np.zeros((4, 3))), Tensor(wk), Tensor(wv))
    assert np.allclose(A.data, 1 / 6, atol=1e-15)
    assert np.allclose(C.data, np.tile((H @ wv).mean(axis=0), (6, 1)), atol=1e-12)

    C, A = attention(Tensor(H), Tensor(wq), Tensor(wk), Tensor(wv))
    Co, Ao = loop_attention(H, wq, wk, wv)
    assert np.abs(C.data - Co).max() < 1e-10 and np.abs(A.data - Ao).max() < 1e-10


def test_blocked_attention_matches_full(rng):
    T = 3 * mrta.ATTENTION_BLOCK + 17
    H = Tensor(rng.normal(size=(2, T, 8)))
    w = [Tensor(rng.normal(size=(8, 4)) * 0.3) for _ in range(3)]
    with dc.no_grad():
        blocked, A = attention(H, *w, record=False)
    assert A is None
    wg = [Tensor(x.data, requires_grad=True) for x in w]
    with dc.Tape():
        full, A = attention(H, *wg)
    assert np.abs(blocked.data - full.data).max() < 1e-12
    assert np.abs(A.data.sum(axis=-1) - 1).max() < 1e-12


def test_upsample_examples(rng):
    C = Tensor(rng.normal(size=(8, 3)))
    assert upsample(C, 8, 1) is C
    const = upsample(Tensor(np.full((4, 2), 1.5)), 16, 4).data
    assert np.allclose(const, 1.5, atol=1e-15)
    with pytest.raises(ContractError):
        upsample(C, 4, 2)


@pytest.mark.parametrize("r", [2, 4])
def test_ramp_survives_pool_then_upsample(r):
    L = 64
    ramp = Tensor((0.3 * np.arange(L) - 2.0)[:, None])
    back = upsample(pool(ramp, r), L, r).data[:, 0]
    interior = slice(r, L - r)
    assert np.abs(back[interior] - ramp.data[interior, 0]).max() < 1e-10


def test_combine_examples(rng):
    v = Tensor(rng.normal(size=(5, 3)))
    assert np.array_equal(combine([v], Tensor([0.7])).data, v.data)
    same = combine([v, v, v], Tensor(rng.normal(size=3))).data
    assert np.allclose(same, v.data, atol=1e-14)
    views = [rng.normal(size=(5, 3)) for _ in range(3)]
    logits = rng.normal(size=3)
    w = np.exp(logits) / np.exp(logits).sum()
    loop = np.zeros((5, 3))
    for i in range(3):
        for t in range(5):
            for d in range(3):
                loop[t, d] += w[i] * views[i][t, d]
    assert np.allclose(combine([Tensor(x) for x in views], Tensor(logits)).data, loop, atol=1e-12, rtol=0)
    with pytest.raises(DimensionError):
        combine([v, Tensor(np.zeros((4, 3)))], Tensor(np.zeros(2)))


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_combine_is_convex(logits, seed):
    views = [Tensor(x) for x in np.random.default_rng(seed).normal(size=(3, 7))]
    out = combine(views, Tensor(np.array(logits))).data
    stacked = np.stack([v.data for v in views])
    assert np.all(out >= stacked.min(axis=0) - 1e-12) and np.all(out <= stacked.max(axis=0) + 1e-12)


def test_validate_strides():
    assert validate_strides((1, 2, 4)) == [1, 2, 4]
    for bad in ((), (0, 1), (2, 2), (4, 2)):
        with pytest.raises(ConfigError):
            validate_strides(bad)


@given(st.integers(0, 2**31 - 1), st.integers(3, 20))
def test_block_normalisation(seed, T):
    r = np.random.default_rng(seed)
    block = MRTA(6, 3, (1, 2, 4), r)
    block.w_logits.data[...] = r.normal(size=3)
    block.record = True
    block(Tensor(r.normal(size=(2, T, 6))))
    assert len(block.last_attention) == 3
    for A in block.last_attention:
        assert np.abs(A.sum(axis=-1) - 1).max() < 1e-12
    assert abs(block.last_weights.sum() - 1) < 1e-12


def test_block_gradient(rng):
    block = MRTA(4, 3, (1, 2), rng)
    block.w_logits.data[...] = rng.normal(size=2)
    H = Tensor(rng.normal(size=(1, 7, 4)))
    c = rng.normal(size=(1, 7, 4))
    assert dc.finite_diff_check(lambda: dc.tsum(block(H) * Tensor(c)), block.parameters()) < 1e-6


def test_multi_resolution_runtime_overhead():
    rng = np.random.default_rng(0)
    multi, single = MRTA(64, 32, (1, 2, 4), rng), MRTA(64, 32, (1,), rng)
    H = Tensor(rng.normal(size=(1, 1024, 64)))

    def median(block):
        with dc.no_grad():
            block.mix(H)
            times = []
            for _ in range(7):
                t0 = time.perf_counter()
                block.mix(H)
                times.append(time.perf_counter() - t0)
        return np.median(times)

    assert median(multi) <= 1.4 * median(single)
