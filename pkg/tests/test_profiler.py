import dataclasses
import itertools

import pytest

from ttvos.config import ModelConfig
from ttvos.errors import ConfigurationError, DimensionError
from ttvos.model import TTVOS
from ttvos.profiler import flops_conv, measured_params, profile_model, runtime_counts

SWITCHES = ("short_matching", "long_matching", "template_update", "box_init")


def test_flops_conv_examples():
    assert flops_conv(2, 4, 1, 1, 8, 8) == 1280
    assert flops_conv(8, 8, 3, 2, 5, 5, bias=False) * 2 == flops_conv(8, 8, 3, 1, 5, 5, bias=False)
    with pytest.raises(DimensionError):
        flops_conv(3, 4, 3, 2, 4, 4)


def test_blend_row_is_three_ctp_squared():
    cfg = ModelConfig()
    rows = {r.name: r for r in profile_model(cfg).rows}
    assert rows["tattn.blend"].flops == 3 * cfg.c_tp**2 and rows["tattn.blend"].stage == "update"


def test_stage_totals_are_row_sums():
    rep = profile_model(ModelConfig(), n_objects=2)
    for stage, total in rep.by_stage().items():
        assert total == sum(r.flops for r in rep.rows if r.stage == stage)


def test_conv_rows_scale_by_four():
    a = {r.name: r for r in profile_model(ModelConfig(), (64, 112)).rows}
    b = {r.name: r for r in profile_model(ModelConfig(), (128, 224)).rows}
    convs = [n for n, r in a.items() if r.params and r.flops]
    assert len(convs) > 10
    for n in convs:
        assert b[n].flops == 4 * a[n].flops
    assert b["tattn.blend"].flops == a["tattn.blend"].flops


@pytest.mark.parametrize("flags", list(itertools.product([True, False], repeat=4)))
def test_analytic_equals_runtime(flags):
    model = TTVOS(dataclasses.replace(ModelConfig(), **dict(zip(SWITCHES, flags))))
    rep = profile_model(model)
    analytic = {k: v for k, v in rep.by_stage().items() if k != "train"}
    assert analytic == runtime_counts(model)
    assert rep.params == measured_params(model)


def test_analytic_equals_runtime_multi_object():
    model = TTVOS()
    analytic = {k: v for k, v in profile_model(model, n_objects=3).by_stage().items() if k != "train"}
    assert analytic == runtime_counts(model, n_objects=3)


def test_update_small_against_seg():
    rep = profile_model(ModelConfig())
    assert 0 < rep.update_flops < 0.02 * rep.seg_flops
    assert "update/seg" in rep.table()


def test_bad_extent():
    with pytest.raises(ConfigurationError):
        profile_model(ModelConfig(), (60, 112))
