import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scatterfusion import diffcore as dc
from scatterfusion.diffcore import Tensor
from scatterfusion.errors import ContractError, DimensionError
from scatterfusion.safe import SAFE, context_vectors, enhance, horizon_gate, scale_attention

small = st.floats(-10, 10, allow_nan=False)


def test_context_vectors_examples(rng):
    H = np.broadcast_to(rng.normal(size=(3, 1, 5)), (3, 7, 5))
    assert np.allclose(context_vectors(Tensor(H)).data, H[:, 0], atol=1e-15)
    v = rng.normal(size=4)
    assert np.array_equal(context_vectors(Tensor(np.stack([v, -v])[None])).data, np.zeros((1, 4)))
    H = rng.normal(size=(4, 9, 3))
    loop = np.zeros((4, 3))
    for j in range(4):
        for t in range(9):
            loop[j] += H[j, t]
    assert np.allclose(context_vectors(Tensor(H)).data, loop / 9, atol=1e-12, rtol=0)


def test_scale_attention_examples(rng):
    h = np.tile(rng.normal(size=6), (4, 1))
    assert np.allclose(scale_attention(Tensor(h), Tensor(rng.normal(size=6))).data, 0.25, atol=1e-15)
    assert np.array_equal(scale_attention(Tensor(rng.normal(size=(1, 6))), Tensor(rng.normal(size=6))).data, [1.0])
    assert np.allclose(scale_attention(Tensor(rng.normal(size=(5, 6))), Tensor(np.zeros(6))).data, 0.2, atol=1e-15)


@given(arrays(np.float64, (4, 3), elements=small), arrays(np.float64, 3, elements=small), arrays(np.float64, 3, elements=small))
def test_alpha_sums_to_one_and_is_shift_invariant(h, w, c):
    a = scale_attention(Tensor(h), Tensor(w)).data
    assert abs(a.sum() - 1) < 1e-12 and np.all(a >= 0)
    shifted = scale_attention(Tensor(h + c), Tensor(w)).data
    assert np.allclose(shifted, a, atol=1e-12)


def test_horizon_gate_examples():
    g = horizon_gate(96, Tensor(np.zeros(4)), Tensor(np.zeros(4)), 720)
    assert np.array_equal(g.data, np.full(4, 0.5))
    vals = [horizon_gate(96, Tensor(np.ones(2)), Tensor(np.full(2, b)), 720).data[0] for b in (0, 5, 20, 50)]
    assert all(b > a for a, b in zip(vals, vals[1:-1])) and vals[-1] > 1 - 1e-12
    with pytest.raises(ContractError):
        horizon_gate(0, Tensor(np.zeros(2)), Tensor(np.zeros(2)), 720)
    with pytest.raises(ContractError):
        horizon_gate(721, Tensor(np.zeros(2)), Tensor(np.zeros(2)), 720)


def test_horizon_gate_gradient(rng):
    w, b = Tensor(rng.normal(size=5), requires_grad=True), Tensor(rng.normal(size=5), requires_grad=True)
    c = rng.normal(size=5)
    assert dc.finite_diff_check(lambda: dc.tsum(horizon_gate(336, w, b, 720) * Tensor(c)), [w, b]) < 1e-6


def test_enhance_examples(rng):
    H = rng.normal(size=(1, 6, 4))
    assert np.array_equal(enhance(Tensor(H), Tensor([1.0]), Tensor(np.ones(4))).data, H[0])
    H = rng.normal(size=(3, 6, 4))
    gamma = rng.uniform(size=4)
    out = enhance(Tensor(H), Tensor([0.0, 1.0, 0.0]), Tensor(gamma)).data
    assert np.array_equal(out, H[1] * gamma)
    alpha = rng.dirichlet(np.ones(3))
    loop = np.zeros((6, 4))
    for j in range(3):
        for t in range(6):
            for d in range(4):
                loop[t, d] += alpha[j] * H[j, t, d] * gamma[d]
    assert np.allclose(enhance(Tensor(H), Tensor(alpha), Tensor(gamma)).data, loop, atol=1e-12, rtol=0)
    with pytest.raises(DimensionError):
        enhance(Tensor(H), Tensor([0.5, 0.5]), Tensor(gamma))


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_enhance_is_linear_in_H(seed, a, b):
    r = np.random.default_rng(seed)
    X, Y = r.normal(size=(3, 5, 2)), r.normal(size=(3, 5, 2))
    alpha, gamma = Tensor(r.dirichlet(np.ones(3))), Tensor(r.uniform(size=2))
    lhs = enhance(Tensor(a * X + b * Y), alpha, gamma).data
    rhs = a * enhance(Tensor(X), alpha, gamma).data + b * enhance(Tensor(Y), alpha, gamma).data
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_safe_block_gradient_and_bypass(rng):
    block = SAFE(4, rng)
    H = Tensor(rng.normal(size=(2, 3, 5, 4)))
    c = rng.normal(size=(2, 5, 4))
    params = block.parameters()
    assert len(params) == 3
    assert dc.finite_diff_check(lambda: dc.tsum(block(H, 24, 720) * Tensor(c)), params) < 1e-6
    assert np.allclose(block.last_alpha.sum(axis=-1), 1, atol=1e-12)

    off = SAFE(4, rng, enabled=False)
    assert off.named_parameters() == {}
    assert np.allclose(off(H, 24, 720).data, H.data.mean(axis=1), atol=1e-15)
