import dataclasses

import numpy as np
import pytest

from ttvos.config import ModelConfig
from ttvos.datagen import gen_shape_clip
from ttvos.errors import InputError
from ttvos.model import TTVOS
from ttvos.tracker import Tracker, box_mask


@pytest.fixture(scope="module")
def model():
    return TTVOS(seed=0)


@pytest.fixture(scope="module")
def clip3():
    return gen_shape_clip(5, 3, (32, 48), seed=4)


def check_invariants(state, frames_done):
    assert state.t == frames_done
    for obj in state.objects:
        assert obj.long.t == frames_done
        np.testing.assert_allclose(obj.long.tp.data, np.mean(obj.i_history, axis=0), atol=1e-12)
        h = obj.prev_heat
        assert h.min() >= 0 and h.max() <= 1
        np.testing.assert_allclose(h.sum(axis=0), 1.0, atol=1e-9)


def test_init_single_object(model):
    c = gen_shape_clip(2, 1, (32, 48), seed=1)
    st = Tracker(model).init(c.frames[0], c.masks[0])
    assert len(st.objects) == 1 and st.objects[0].long.t == 1 and st.t == 1
    np.testing.assert_array_equal(st.objects[0].prev_heat[1], c.masks[0] == 1)


def test_init_deterministic(model, clip3):
    a = Tracker(model).init(clip3.frames[0], clip3.masks[0])
    b = Tracker(model).init(clip3.frames[0], clip3.masks[0])
    assert len(a.objects) == 3
    for x, y in zip(a.objects, b.objects):
        np.testing.assert_array_equal(x.long.tp.data, y.long.tp.data)
        np.testing.assert_array_equal(x.short.embed.data, y.short.embed.data)


def test_step_invariants_and_backbone_once(model, clip3):
    tr = Tracker(model)
    st = tr.init(clip3.frames[0], clip3.masks[0])
    check_invariants(st, 1)
    for k, f in enumerate(clip3.frames[1:], start=2):
        labels, heats, st = tr.step(st, f)
        assert labels.shape == (32, 48) and labels.max() <= 3 and len(heats) == 3
        check_invariants(st, k)
    assert tr.backbone_calls == len(clip3)


def test_run_deterministic(model, clip3):
    a = Tracker(model).run(clip3.frames, clip3.masks[0])
    b = Tracker(model).run(clip3.frames, clip3.masks[0])
    assert all((x == y).all() for x, y in zip(a, b))


def test_single_object_matches_raw_threshold(model):
    # N=1: aggregated argmax equals thresholding the raw foreground probability at 0.5
    c = gen_shape_clip(3, 1, (32, 48), seed=2)
    tr = Tracker(model)
    st = tr.init(c.frames[0], c.masks[0])
    labels, heats, _ = tr.step(st, c.frames[1])
    np.testing.assert_array_equal(labels, (heats[0].probs.data[1] > 0.5).astype(int))


def test_empty_object_warns(model, caplog):
    c = gen_shape_clip(2, 1, (32, 48), seed=3)
    lab = np.where(c.masks[0] == 1, 2, 0)
    st = Tracker(model).init(c.frames[0], lab)
    assert len(st.objects) == 2 and not st.objects[0].prev_heat[1].any()
    assert "no pixels" in caplog.text


def test_errors(model):
    c = gen_shape_clip(2, 1, (32, 48), seed=3)
    tr = Tracker(model)
    with pytest.raises(InputError):
        tr.init(c.frames[0], np.zeros((32, 48), int))
    st = tr.init(c.frames[0], c.masks[0])
    with pytest.raises(InputError):
        tr.step(st, np.zeros((3, 32, 32)))


def test_box_init_and_no_update():
    cfg = dataclasses.replace(ModelConfig(), box_init=True, template_update=False)
    c = gen_shape_clip(4, 1, (32, 48), seed=5)
    tr = Tracker(TTVOS(cfg))
    st = tr.init(c.frames[0], c.masks[0])
    np.testing.assert_array_equal(st.objects[0].prev_heat[1], box_mask(c.masks[0] == 1))
    for f in c.frames[1:]:
        _, _, st = tr.step(st, f)
    assert st.objects[0].long.t == 1 and st.t == 4


@pytest.mark.parametrize("flags", [dict(short_matching=False), dict(long_matching=False)])
def test_fallback_paths_run(flags):
    c = gen_shape_clip(3, 2, (32, 48), seed=6)
    out = Tracker(TTVOS(dataclasses.replace(ModelConfig(), **flags))).run(c.frames, c.masks[0])
    assert len(out) == 3


def test_box_mask():
    m = np.zeros((5, 5))
    m[1, 2] = m[3, 1] = 1
    b = box_mask(m)
    assert b.sum() == 6 and b[1:4, 1:3].all()
    assert not box_mask(np.zeros((3, 3))).any()
