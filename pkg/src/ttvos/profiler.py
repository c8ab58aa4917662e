"""Analytic FLOP and parameter accounting for one tracked frame.

Convention: a multiply-add is 2 FLOPs, bias adds are counted, and
elementwise ops cost 1 FLOP per output scalar (softmax 5, bilinear 7,
avg-pool 1 per input scalar). Stage tags:

* read: the template-times-query product
* update: Gram product, row softmax and running-average blend
* seg: every convolutional feature computation outside the decoder
  (backbone, both matching branches, masked features, f/g/q branches,
  similarity fusion, next-frame template embeddings)
* decode: decoder (excluded from Seg, reported separately)
* train: transition head, only evaluated while training
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .decoder import SHUFFLE
from .errors import ConfigurationError, DimensionError

STAGES = ("read", "seg", "update", "decode", "train")


def flops_conv(c_in: int, c_out: int, k: int, groups: int, h_out: int, w_out: int, bias: bool = True) -> int:
    if c_in % groups or c_out % groups:
        raise DimensionError(f"channels ({c_in}, {c_out}) not divisible by groups {groups}")
    macs = k * k * (c_in // groups) * c_out * h_out * w_out
    return 2 * macs + (c_out * h_out * w_out if bias else 0)


def flops_conv_transpose(c_in: int, c_out: int, k: int, h_in: int, w_in: int, h_out: int, w_out: int) -> int:
    return 2 * k * k * c_in * c_out * h_in * w_in + c_out * h_out * w_out


def flops_matmul(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def conv_params(c_in, c_out, k, groups=1) -> int:
    return c_out * (c_in // groups) * k * k + c_out


@dataclass
class FlopRow:
    name: str
    stage: str
    flops: int
    params: int = 0


@dataclass
class FlopReport:
    rows: list[FlopRow] = field(default_factory=list)
    params: int = 0

    def stage_total(self, stage: str) -> int:
        return sum(r.flops for r in self.rows if r.stage == stage)

    @property
    def read_flops(self) -> int:
        return self.stage_total("read")

    @property
    def seg_flops(self) -> int:
        return self.stage_total("seg")

    @property
    def update_flops(self) -> int:
        return self.stage_total("update")

    @property
    def decode_flops(self) -> int:
        return self.stage_total("decode")

    def by_stage(self) -> dict[str, int]:
        out = {}
        for r in self.rows:
            out[r.stage] = out.get(r.stage, 0) + r.flops
        return {k: v for k, v in out.items() if v}

    def table(self) -> str:
        def g(n):
            return f"{n / 1e6:9.3f} M"

        return "\n".join(
            [
                f"{'Read':<8s}{'Seg':>12s}{'Update':>12s}{'#Param':>12s}",
                f"{g(self.read_flops):<8s}{g(self.seg_flops):>12s}{g(self.update_flops):>12s}{self.params:>12d}",
                f"(decoder {g(self.decode_flops).strip()}, update/seg = {self.update_flops / self.seg_flops:.4f})",
            ]
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["name", "stage", "flops", "params"])
            for r in self.rows:
                wr.writerow([r.name, r.stage, r.flops, r.params])


class _Builder:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.rows: list[FlopRow] = []

    def conv(self, name, stage, c_in, c_out, k, h, w, groups=1, act=False):
        self.rows.append(FlopRow(name, stage, flops_conv(c_in, c_out, k, groups, h, w), conv_params(c_in, c_out, k, groups)))
        if act:
            self.op(name + ".act", stage, c_out * h * w)

    def op(self, name, stage, flops):
        self.rows.append(FlopRow(name, stage, int(flops)))


def profile_model(model_or_cfg, extent=(64, 112), n_objects: int = 1) -> FlopReport:
    """Per-layer FLOPs of one inference step (frame t >= 2) for ``n_objects`` objects."""
    cfg = model_or_cfg if isinstance(model_or_cfg, ModelConfig) else model_or_cfg.cfg
    h, w = extent
    if h % 16 or w % 16:
        raise ConfigurationError(f"extent {extent} must be divisible by 16")
    b = _Builder(cfg)
    h2, w2, h4, w4, h8, w8, h16, w16 = h // 2, w // 2, h // 4, w // 4, h // 8, w // 8, h // 16, w // 16
    c4, c8, c16, ctp, csim, cst, cdec = cfg.c4, cfg.c8, cfg.c16, cfg.c_tp, cfg.c_sim, cfg.c_st, cfg.c_dec
    hw, gk, gr = h * w, cfg.group_kernel, cfg.groups

    b.conv("backbone.stem", "seg", 3, c4, 4, h2, w2, act=True)
    b.conv("backbone.down4", "seg", c4, c4, 4, h4, w4, act=True)
    b.conv("backbone.refine4", "seg", c4, c4, 3, h4, w4, act=True)
    b.conv("backbone.down8", "seg", c4, c8, 4, h8, w8, act=True)
    b.conv("backbone.refine8", "seg", c8, c8, 3, h8, w8, act=True)
    b.conv("backbone.down16", "seg", c8, c16, 4, h16, w16, act=True)
    b.conv("backbone.refine16", "seg", c16, c16, 3, h16, w16, act=True)

    for n in range(n_objects):
        p = f"obj{n + 1}." if n_objects > 1 else ""
        if cfg.short_matching:
            b.conv(p + "short.proj", "seg", c16, cst, 3, h16, w16)
            b.op(p + "short.correlate", "seg", cst * h16 * w16)
            b.conv(p + "short.fuse", "seg", cst, csim, 1, h16, w16)
        else:
            b.op(p + "short.pool_heat", "seg", 2 * hw)
            b.conv(p + "short.conv1", "seg", c16 + 2, cst, 3, h16, w16, act=True)
            b.conv(p + "short.conv2", "seg", cst, csim, 3, h16, w16, act=True)
        b.op(p + "short.upsample", "seg", 7 * csim * h8 * w8)

        if cfg.long_matching:
            b.op(p + "tattn.pool_heat", "seg", 2 * hw)
            b.conv(p + "tattn.mask_proj", "seg", c8 + 2, c8, 3, h8, w8, act=True)
            b.conv(p + "tattn.q.pw", "seg", c8, ctp, 1, h8, w8, act=True)
            b.conv(p + "tattn.q.gc", "seg", ctp, ctp, gk, h8, w8, groups=gr)
            b.op(p + "tattn.read", "read", flops_matmul(ctp, ctp, h8 * w8))
            b.conv(p + "tattn.fuse", "seg", ctp + c8, csim, 3, h8, w8, act=True)
        else:
            b.op(p + "long.pool_heat", "seg", 2 * hw)
            b.conv(p + "long.conv1", "seg", c8 + 2, c8, 3, h8, w8, act=True)
            b.conv(p + "long.conv2", "seg", c8, csim, 3, h8, w8, act=True)

        b.conv(p + "decoder.fuse", "decode", 2 * csim, cdec, 3, h8, w8, act=True)
        b.rows.append(
            FlopRow(p + "decoder.up", "decode", flops_conv_transpose(cdec, cdec, 2, h8, w8, h4, w4), cdec * cdec * 4 + cdec)
        )
        b.conv(p + "decoder.skip", "decode", c4, cdec, 1, h4, w4)
        b.op(p + "decoder.add", "decode", cdec * h4 * w4)
        b.conv(p + "decoder.refine", "decode", cdec, cdec, 3, h4, w4, act=True)
        b.conv(p + "decoder.head", "decode", cdec, 2 * SHUFFLE * SHUFFLE, 3, h4, w4)
        b.op(p + "decoder.softmax", "decode", 5 * 2 * hw)

        # next-frame templates
        if cfg.short_matching:
            b.op(p + "short.template.pool_heat", "seg", 2 * hw)
            b.conv(p + "short.embed1", "seg", c16 + 2, cst, 3, h16, w16, act=True)
            b.conv(p + "short.embed2", "seg", cst, cst, 3, h16, w16, act=True)
        if cfg.long_matching and cfg.template_update:
            b.op(p + "tattn.update.pool_heat", "seg", 2 * hw)
            b.conv(p + "tattn.update.mask_proj", "seg", c8 + 2, c8, 3, h8, w8, act=True)
            for br in ("f", "g"):
                b.conv(p + f"tattn.{br}.pw", "seg", c8, ctp, 1, h8, w8, act=True)
                b.conv(p + f"tattn.{br}.gc", "seg", ctp, ctp, gk, h8, w8, groups=gr)
            b.op(p + "tattn.gram", "update", flops_matmul(ctp, h8 * w8, ctp))
            b.op(p + "tattn.softmax", "update", 5 * ctp * ctp)
            b.op(p + "tattn.blend", "update", 3 * ctp * ctp)

    b.rows.append(FlopRow("pihead.conv", "train", 0, conv_params(csim, 2, 3)))
    report = FlopReport(b.rows)
    _fix_param_rows(report, cfg)
    report.params = sum(r.params for r in report.rows)
    return report


def _fix_param_rows(report: FlopReport, cfg: ModelConfig) -> None:
    """Per-object rows repeat shared weights; keep params only on the first
    occurrence, and attach weights used only during template building."""
    seen = set()
    for r in report.rows:
        key = r.name.split(".", 1)[1] if r.name.startswith("obj") else r.name
        key = key.replace("update.", "")
        if key in seen:
            r.params = 0
        seen.add(key)
    if cfg.long_matching and not cfg.template_update:
        # f and g weights exist (and build the first template) but cost nothing per frame
        for br in ("f", "g"):
            report.rows.append(FlopRow(f"tattn.{br}.pw", "update", 0, conv_params(cfg.c8, cfg.c_tp, 1)))
            report.rows.append(FlopRow(f"tattn.{br}.gc", "update", 0, conv_params(cfg.c_tp, cfg.c_tp, cfg.group_kernel, cfg.groups)))


def runtime_counts(model, extent=(64, 112), seed: int = 0, n_objects: int = 1) -> dict[str, int]:
    """Instrumented FLOPs of one real tracking step, bucketed by stage."""
    from .datagen import gen_shape_clip
    from .tracker import Tracker

    clip = gen_shape_clip(2, n_objects, extent, seed=seed)
    tracker = Tracker(model)
    state = tracker.init(clip.frames[0], clip.masks[0])
    with T.counting() as counter:
        tracker.step(state, clip.frames[1])
    return {k: v for k, v in counter.by_stage.items() if v}


def measured_params(model) -> int:
    return int(sum(np.prod(p.shape) for p in model.parameters()))
