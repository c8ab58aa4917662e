"""Sequence-level inference: one backbone pass per frame, per-object matching and decoding,
soft aggregation, then template updates from the aggregated heatmaps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .aggregation import argmax_labels, soft_aggregate
from .backbone import FeaturePyramid
from .decoder import Heatmap
from .errors import InputError
from .model import TTVOS
from .short_term import ShortTemplate, SimilarityMap
from .template_attention import LongTemplate, update_template
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class ObjectState:
    obj_id: int
    prev_heat: np.ndarray  # (2, H, W), the heatmap fed to the next frame
    short: ShortTemplate | None = None
    short_src: tuple[np.ndarray, np.ndarray] | None = None  # (f16, heat) the short template came from
    long: LongTemplate | None = None
    long_base: LongTemplate | None = None  # template before the most recent fold-in
    long_src: tuple[np.ndarray, np.ndarray] | None = None  # (f8, heat) of the most recent fold-in
    i_history: list[np.ndarray] = field(default_factory=list)


@dataclass
class TrackerState:
    objects: list[ObjectState]
    t: int
    extent: tuple[int, int]


@dataclass
class ObjectOutput:
    heat: Heatmap
    s_long: SimilarityMap
    pi_hat: Tensor | None = None


def box_mask(mask: np.ndarray) -> np.ndarray:
    """Filled bounding box of a binary mask (empty stays empty)."""
    ys, xs = np.nonzero(mask)
    out = np.zeros(mask.shape, dtype=np.float64)
    if ys.size:
        out[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1] = 1.0
    return out


class Tracker:
    """Drives a :class:`TTVOS` model over a sequence.

    With gradients enabled (training), ``forward`` rebuilds the most recent
    template contributions from the stored previous-frame features inside the
    current graph, so the template branches receive gradients while earlier
    frames' activations stay constant.
    """

    def __init__(self, model: TTVOS):
        self.model = model
        self.cfg = model.cfg
        self.backbone_calls = 0

    def extract(self, frame, index: int) -> FeaturePyramid:
        self.backbone_calls += 1
        with T.stage("seg"):
            return self.model.backbone.extract(T.as_tensor(frame), index)

    def init(self, frame, gt_labels) -> TrackerState:
        labels = np.asarray(gt_labels)
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim != 3 or labels.shape != frame.shape[1:]:
            raise InputError(f"label map {labels.shape} does not match frame {frame.shape}")
        n = int(labels.max())
        if n < 1:
            raise InputError("first-frame annotation contains no object")
        with T.no_grad():
            pyr = self.extract(frame, 1)
            objects = []
            for obj_id in range(1, n + 1):
                m = (labels == obj_id).astype(np.float64)
                if not m.any():
                    log.warning("object %d has no pixels in the first frame; tracking as background", obj_id)
                if self.cfg.box_init:
                    m = box_mask(m)
                heat = np.stack([1.0 - m, m])
                obj = ObjectState(obj_id, heat)
                if self.cfg.long_matching:
                    obj.long = LongTemplate.empty(self.cfg.c_tp)
                self._fold_in(obj, pyr, heat)
                objects.append(obj)
        return TrackerState(objects, 1, labels.shape)

    def _fold_in(self, obj: ObjectState, pyr: FeaturePyramid, heat: np.ndarray) -> None:
        model, cfg = self.model, self.cfg
        ht = Tensor(heat)
        with T.stage("seg"):
            if cfg.short_matching:
                obj.short = model.short.build_template(pyr.f16, ht, pyr.frame)
                obj.short_src = (pyr.f16.data, heat)
            if cfg.long_matching and (cfg.template_update or obj.long.t == 0):
                i = model.tattn.embedding_matrix(model.tattn.mask_feature(pyr.f8, ht))
                obj.i_history.append(i.data)
                obj.long_base = obj.long
                obj.long = update_template(obj.long, i)
                obj.long_src = (pyr.f8.data, heat)
        obj.prev_heat = heat

    def forward(self, state: TrackerState, frame) -> tuple[FeaturePyramid, list[ObjectOutput]]:
        """Segment ``frame`` for every object without touching ``state``."""
        frame = T.as_tensor(frame)
        if frame.shape[1:] != tuple(state.extent):
            raise InputError(f"frame extent {frame.shape[1:]} differs from first frame {state.extent}")
        model, cfg = self.model, self.cfg
        in_graph = T.grad_enabled()
        pyr = self.extract(frame, state.t + 1)
        outputs = []
        for obj in state.objects:
            heat_prev = Tensor(obj.prev_heat)
            with T.stage("seg"):
                if cfg.short_matching:
                    short = obj.short
                    if in_graph:
                        f16_src, h_src = obj.short_src
                        short = model.short.build_template(Tensor(f16_src), Tensor(h_src))
                    s_short = model.short.match(short, pyr.f16)
                else:
                    s_short = model.short(pyr.f16, heat_prev)
                if cfg.long_matching:
                    tp = obj.long
                    if in_graph:
                        f8_src, h_src = obj.long_src
                        x_src = model.tattn.mask_feature(Tensor(f8_src), Tensor(h_src))
                        tp = update_template(obj.long_base, model.tattn.embedding_matrix(x_src))
                    x_cur = model.tattn.mask_feature(pyr.f8, heat_prev)
                    _, s_long = model.tattn.attend(tp, x_cur)
                else:
                    s_long = model.tattn(pyr.f8, heat_prev)
            with T.stage("decode"):
                heat = model.decoder(s_short, s_long, pyr.f4)
            pi_hat = None
            if in_graph:
                with T.stage("train"):
                    pi_hat = model.pihead(s_long)
            outputs.append(ObjectOutput(heat, s_long, pi_hat))
        return pyr, outputs

    def advance(self, state: TrackerState, pyr: FeaturePyramid, outputs: list[ObjectOutput]):
        """Aggregate, emit labels, and update every object's templates for the next frame."""
        with T.no_grad():
            dist = soft_aggregate([o.heat.probs.data[1] for o in outputs])
            labels = argmax_labels(dist)
            pyr = pyr.detach()
            for i, obj in enumerate(state.objects):
                q = dist[i + 1]
                self._fold_in(obj, pyr, np.stack([1.0 - q, q]))
            state.t += 1
        return labels, [o.heat for o in outputs], state

    def step(self, state: TrackerState, frame):
        with T.no_grad():
            pyr, outputs = self.forward(state, frame)
            return self.advance(state, pyr, outputs)

    def run(self, frames, first_labels) -> list[np.ndarray]:
        """Label maps for every frame; frame 0 returns the given annotation."""
        state = self.init(frames[0], first_labels)
        out = [np.asarray(first_labels).astype(np.int64)]
        for frame in frames[1:]:
            labels, _, state = self.step(state, frame)
            out.append(labels)
        return out
