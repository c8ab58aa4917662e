import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttvos import tensor as T
from ttvos.config import ModelConfig
from ttvos.errors import DimensionError
from ttvos.nn import Conv2d
from ttvos.template_attention import LongTemplate, TemplateAttention, update_template
from ttvos.tensor import Tensor

CFG = ModelConfig()


@pytest.fixture(scope="module")
def ta():
    return TemplateAttention(CFG, np.random.default_rng(0))


def row_stochastic(rng, n):
    x = rng.random((n, n))
    return x / x.sum(axis=1, keepdims=True)


def test_embedding_identity_example():
    f = Tensor(np.eye(2))
    gram = T.matmul(f, T.transpose(f))
    np.testing.assert_allclose(T.softmax(gram, axis=1).data, [[0.7311, 0.2689], [0.2689, 0.7311]], atol=1e-4)


def test_embedding_loop_oracle(ta, rng):
    x = Tensor(rng.standard_normal((24, 4, 4)))
    i = ta.embedding_matrix(x).data
    f = ta.branch(x, "f").data.reshape(32, -1)
    g = ta.branch(x, "g").data.reshape(32, -1)
    ref = np.empty((32, 32))
    for a in range(32):
        row = [sum(f[a, p] * g[b, p] for p in range(16)) for b in range(32)]
        e = np.exp(np.array(row) - max(row))
        ref[a] = e / e.sum()
    np.testing.assert_allclose(i, ref, atol=1e-12, rtol=0)
    np.testing.assert_allclose(i.sum(axis=1), 1.0, atol=1e-9)


def test_template_update_examples():
    junk = LongTemplate(Tensor([[123.0]]), 0)
    i = Tensor([[0.8]])
    assert update_template(junk, i).tp.data[0, 0] == 0.8
    tp2 = update_template(LongTemplate(Tensor([[0.5]]), 1), i)
    assert tp2.t == 2 and tp2.tp.data[0, 0] == pytest.approx(0.65, abs=1e-15)
    with pytest.raises(DimensionError):
        update_template(LongTemplate.empty(3), Tensor(np.eye(2)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_template_running_mean(seed, n):
    rng = np.random.default_rng(seed)
    tp = LongTemplate.empty(6)
    hist = []
    for _ in range(n):
        i = row_stochastic(rng, 6)
        hist.append(i)
        tp = update_template(tp, Tensor(i))
    assert tp.t == n
    np.testing.assert_allclose(tp.tp.data, np.mean(hist, axis=0), atol=1e-12, rtol=0)
    np.testing.assert_allclose(tp.tp.data.sum(axis=1), 1.0, atol=1e-9)


def test_read_examples(ta, rng):
    tp = LongTemplate(Tensor([[0.6, 0.4], [0.4, 0.6]]), 1)
    a = T.matmul(tp.tp, Tensor([[1.0], [-1.0]])).data
    np.testing.assert_allclose(a, [[0.2], [-0.2]], atol=1e-15)
    x = Tensor(rng.standard_normal((24, 4, 4)))
    a, s = ta.attend(LongTemplate(Tensor(np.eye(32)), 1), x)
    np.testing.assert_array_equal(a.data, ta.branch(x, "q").data)
    assert s.kind == "long" and s.values.shape == (16, 4, 4)


def test_read_loop_oracle(ta, rng):
    x = Tensor(rng.standard_normal((24, 4, 4)))
    tp = row_stochastic(rng, 32)
    a, _ = ta.attend(LongTemplate(Tensor(tp), 3), x)
    q = ta.branch(x, "q").data
    ref = np.zeros_like(q)
    for c in range(32):
        for h in range(4):
            for w in range(4):
                ref[c, h, w] = sum(tp[c, k] * q[k, h, w] for k in range(32))
    np.testing.assert_allclose(a.data, ref, atol=1e-12, rtol=0)


def test_attend_needs_template(ta, rng):
    with pytest.raises(DimensionError):
        ta.attend(LongTemplate.empty(32), Tensor(rng.standard_normal((24, 4, 4))))


def test_mask_feature_receptive_field(ta, rng):
    f8 = Tensor(rng.standard_normal((24, 8, 8)))
    h = rng.random((64, 64))
    h2 = h.copy()
    h2[20, 20] += 0.5  # lives in 1/8 cell (2, 2)
    a = ta.mask_feature(f8, Tensor(np.stack([1 - h, h]))).data
    b = ta.mask_feature(f8, Tensor(np.stack([1 - h2, h2]))).data
    diff = np.abs(a - b).max(axis=0) > 0
    assert diff[2, 2]
    ys, xs = np.nonzero(diff)
    assert ys.min() >= 1 and ys.max() <= 3 and xs.min() >= 1 and xs.max() <= 3
    assert a.shape == (24, 8, 8)


def test_branch_group_conv_block_split(ta, rng):
    x = Tensor(rng.standard_normal((24, 4, 4)))
    hidden = T.leaky_relu(ta.q.pw(x), CFG.alpha)
    full = ta.q.gc(hidden).data
    w, b = ta.q.gc.weight.data, ta.q.gc.bias.data
    parts = [
        T.conv2d(Tensor(hidden.data[8 * g : 8 * g + 8]), Tensor(w[8 * g : 8 * g + 8]), Tensor(b[8 * g : 8 * g + 8]), padding=2).data
        for g in range(4)
    ]
    np.testing.assert_allclose(full, np.concatenate(parts), atol=1e-12, rtol=0)
    assert full.shape == (32, 4, 4)
