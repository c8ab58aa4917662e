import numpy as np
import pytest

from ttvos import tensor as T
from ttvos.config import ModelConfig
from ttvos.errors import DimensionError
from ttvos.short_term import ShortTemplate, ShortTerm, pool_heat
from ttvos.tensor import Tensor


@pytest.fixture(scope="module")
def st():
    return ShortTerm(ModelConfig(), np.random.default_rng(0))


def heat_of(fg):
    return Tensor(np.stack([1.0 - fg, fg]))


def test_template_shape_and_mask_sensitivity(st, rng):
    f16 = Tensor(rng.standard_normal((32, 4, 7)))
    bg = st.build_template(f16, heat_of(np.zeros((64, 112))))
    fg = st.build_template(f16, heat_of(np.ones((64, 112))))
    assert bg.embed.shape == (32, 4, 7)
    assert not np.allclose(bg.embed.data, fg.embed.data)


def test_match_shape(st, rng):
    tpl = st.build_template(Tensor(rng.standard_normal((32, 4, 7))), heat_of(np.zeros((64, 112))))
    s = st.match(tpl, Tensor(rng.standard_normal((32, 4, 7))))
    assert s.kind == "short" and s.values.shape == (16, 8, 14)


def test_zero_template_gives_bias_response(st, rng):
    zero = ShortTemplate(Tensor(np.zeros((32, 4, 4))))
    f16 = Tensor(rng.standard_normal((32, 4, 4)))
    assert not st.correlate(zero, f16).data.any()
    s = st.match(zero, f16).values.data
    np.testing.assert_allclose(s, np.broadcast_to(st.fuse.bias.data[:, None, None], s.shape), atol=1e-15)


def test_correlation_linear_in_template(st, rng):
    e = rng.standard_normal((32, 4, 4))
    f16 = Tensor(rng.standard_normal((32, 4, 4)))
    base = st.correlate(ShortTemplate(Tensor(e)), f16).data
    scaled = st.correlate(ShortTemplate(Tensor(2.0 * e)), f16).data
    np.testing.assert_array_equal(scaled, 2.0 * base)


def test_translation_equivariance(rng):
    st = ShortTerm(ModelConfig(), np.random.default_rng(5))
    for c in (st.embed1, st.embed2, st.proj):
        c.bias.data[:] = rng.standard_normal(c.bias.shape)
    f_prev, f_cur = rng.standard_normal((32, 8, 8)), rng.standard_normal((32, 8, 8))
    heat = rng.random((8, 8))

    def corr(fp, fc, h):
        t = st.build_template(Tensor(fp), heat_of(h))
        return st.correlate(t, Tensor(fc)).data

    a = corr(f_prev, f_cur, heat)
    b = corr(np.roll(f_prev, 1, axis=2), np.roll(f_cur, 1, axis=2), np.roll(heat, 1, axis=1))
    # two stacked 3x3 convs: columns more than 2 from either border are unaffected by padding
    np.testing.assert_allclose(np.roll(a, 1, axis=2)[:, :, 3:-3], b[:, :, 3:-3], atol=1e-12)


def test_misaligned(st, rng):
    tpl = ShortTemplate(Tensor(np.zeros((32, 4, 4))))
    with pytest.raises(DimensionError):
        st.match(tpl, Tensor(rng.standard_normal((32, 4, 5))))
    with pytest.raises(DimensionError):
        pool_heat(Tensor(np.zeros((2, 30, 64))), Tensor(np.zeros((32, 4, 4))))


def test_pool_heat_average(rng):
    h = rng.random((2, 32, 32))
    pooled = pool_heat(Tensor(h), Tensor(np.zeros((1, 2, 2)))).data
    np.testing.assert_allclose(pooled[1, 0, 1], h[1, :16, 16:].mean())
