import numpy as np
import pytest

from ttvos import tensor as T
from ttvos.backbone import Backbone
from ttvos.config import ModelConfig
from ttvos.errors import ConfigurationError, DimensionError


@pytest.fixture(scope="module")
def bb():
    return Backbone(ModelConfig(), np.random.default_rng(0))


def test_shapes(bb):
    p = bb.extract(np.random.default_rng(1).random((3, 64, 64)))
    assert p.f4.shape == (16, 16, 16)
    assert p.f8.shape == (24, 8, 8)
    assert p.f16.shape == (32, 4, 4)


def test_rectangular_shapes(bb):
    p = bb.extract(np.zeros((3, 64, 112)))
    assert (p.f4.shape[1:], p.f8.shape[1:], p.f16.shape[1:]) == ((16, 28), (8, 14), (4, 7))


def test_deterministic(bb):
    img = np.random.default_rng(2).random((3, 32, 48))
    a, b = bb.extract(img), bb.extract(img.copy())
    for x, y in ((a.f4, b.f4), (a.f8, b.f8), (a.f16, b.f16)):
        np.testing.assert_array_equal(x.data, y.data)


def test_zero_image_is_bias_propagation():
    # zero bias + zero input -> every tap is exactly zero; non-zero biases -> a replayable constant
    bb = Backbone(ModelConfig(), np.random.default_rng(0))
    p = bb.extract(np.zeros((3, 32, 32)))
    assert not p.f16.data.any()
    for layer in bb.layers():
        layer.bias.data[:] = 0.1
    a, b = bb.extract(np.zeros((3, 32, 32))), Backbone.__new__(Backbone)
    b.__dict__.update(bb.__dict__)
    np.testing.assert_array_equal(a.f8.data, b.extract(np.zeros((3, 32, 32))).f8.data)
    # away from borders a constant input gives a spatially constant response
    assert np.ptp(a.f4.data[:, 3:-3, 3:-3], axis=(1, 2)).max() < 1e-12


@pytest.mark.parametrize("shape,err", [((3, 40, 64), ConfigurationError), ((1, 32, 32), DimensionError)])
def test_bad_input(bb, shape, err):
    with pytest.raises(err):
        bb.extract(np.zeros(shape))


def test_gradients_reach_every_layer(bb):
    with T.recording():
        p = bb.extract(np.random.default_rng(3).random((3, 32, 32)))
        T.backward(T.add(T.add(T.tsum(p.f4), T.tsum(p.f8)), T.tsum(p.f16)))
    assert all(np.abs(prm.grad).sum() > 0 for prm in bb.parameters())
    bb.zero_grad()
