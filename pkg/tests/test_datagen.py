import numpy as np
import pytest

from ttvos.datagen import AffineRanges, ShapeSpec, gen_affine_clip, gen_shape_clip, render_shapes
from ttvos.errors import ConfigurationError, InputError


def square_scene(h=64, w=112):
    img = np.random.default_rng(0).random((3, h, w))
    m = np.zeros((h, w), int)
    m[24:40, 40:60] = 1
    return img, m


def test_identity_ranges_copy_input():
    img, m = square_scene()
    c = gen_affine_clip(img, m, 4, AffineRanges.identity(), seed=1)
    for f, k in zip(c.frames, c.masks):
        np.testing.assert_allclose(f, img, atol=1e-12)
        np.testing.assert_array_equal(k, m)


def test_translation_moves_centroid():
    img, m = square_scene()
    dx = 8 / 112
    r = AffineRanges((0.0, 0.0), (1.0, 1.0), (dx, dx), (0.0, 0.0), (0.0, 0.0))
    c = gen_affine_clip(img, m, 4, r, seed=0)
    xs = [np.nonzero(k)[1].mean() for k in c.masks]
    ys = [np.nonzero(k)[0].mean() for k in c.masks]
    np.testing.assert_allclose(np.diff(xs), 8.0, atol=0.5)
    np.testing.assert_allclose(np.diff(ys), 0.0, atol=0.5)


def test_affine_mask_is_nearest_warp_of_indicator():
    img, m = square_scene()
    c = gen_affine_clip(img, m, 3, seed=7)
    assert c.params[0].rotation == 0.0
    for k in c.masks:
        assert set(np.unique(k)) <= {0, 1}


def test_affine_errors():
    img, m = square_scene()
    with pytest.raises(InputError):
        gen_affine_clip(img, m[:32], 3)
    with pytest.raises(ConfigurationError):
        gen_affine_clip(img[:, :40], m[:40], 3)


def test_determinism():
    a, b = gen_shape_clip(5, 2, seed=11), gen_shape_clip(5, 2, seed=11)
    assert all((x == y).all() for x, y in zip(a.frames + a.masks, b.frames + b.masks))
    img, m = square_scene()
    c, d = gen_affine_clip(img, m, 3, seed=2), gen_affine_clip(img, m, 3, seed=2)
    assert all((x == y).all() for x, y in zip(c.frames, d.frames))


def test_valid_label_maps():
    c = gen_shape_clip(6, 3, seed=5)
    assert len(c) == 6 and c.n_objects == 3
    for k, f in zip(c.masks, c.frames):
        assert k.shape == (64, 112) and k.min() >= 0 and k.max() <= 3
        assert f.shape == (3, 64, 112) and f.min() >= 0 and f.max() <= 1
    assert all((c.masks[0] == i).sum() >= 12 for i in (1, 2, 3))


def test_static_shape():
    spec = ShapeSpec("ellipse", (32, 56), (0.0, 0.0), (8, 10))
    c = render_shapes([spec], 4, (64, 112), np.zeros((3, 64, 112)))
    assert all((k == c.masks[0]).all() for k in c.masks)


def test_crossing_occlusion_order():
    a = ShapeSpec("ellipse", (32, 20), (0.0, 6.0), (8, 8), color=(1, 0, 0))
    b = ShapeSpec("ellipse", (32, 92), (0.0, -6.0), (8, 8), color=(0, 0, 1))
    c = render_shapes([a, b], 13, (64, 112), np.zeros((3, 64, 112)))
    cross = c.masks[6]  # both centred at x=56
    assert (cross == 2).sum() > 0 and (cross == 1).sum() == 0
    assert (c.masks[0] == 1).sum() == (c.masks[0] == 2).sum()


def test_bad_arguments():
    with pytest.raises(ConfigurationError):
        gen_shape_clip(3, 0)
    with pytest.raises(ConfigurationError):
        gen_shape_clip(3, 1, (60, 112))
