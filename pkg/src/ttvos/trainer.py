"""Clip-based training with cross-entropy plus the transition consistency loss."""

from __future__ import annotations

import csv
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from . import tensor as T
from .config import TrainConfig, model_config_for
from .datagen import Clip
from .decoder import Heatmap, transition_target
from .errors import NumericalError
from .losses import ce_loss, tc_loss, total_loss
from .metrics import jaccard, score_sequence
from .model import TTVOS
from .optim import Adam
from .tracker import Tracker

log = logging.getLogger(__name__)


@dataclass
class ClipResult:
    loss: float
    ce: float
    tc: float
    frame_j: list[float] = field(default_factory=list)
    max_tape_nodes: int = 0
    skipped: bool = False

    @property
    def mean_j(self) -> float:
        return float(np.mean(self.frame_j)) if self.frame_j else float("nan")


def is_degenerate(clip: Clip) -> bool:
    """True if the first frame has no object, or one is absent from every later frame."""
    n = clip.n_objects
    return n == 0 or any(not any((m == i).any() for m in clip.masks[1:]) for i in range(1, n + 1))


def train_clip(model: TTVOS, clip: Clip, cfg: TrainConfig) -> ClipResult:
    """Forward/backward one clip, accumulating parameter gradients (no optimizer step).

    Frames 2..T are supervised. Each frame is recorded on its own tape and
    back-propagated immediately; recurrent inputs from earlier frames are
    constants, so this equals one backward of the frame-averaged loss.
    """
    if is_degenerate(clip):
        log.warning("skipping clip %s: no first-frame object, or one vanishes from all supervised frames", clip.name or "<unnamed>")
        return ClipResult(float("nan"), float("nan"), float("nan"), skipped=True)
    tracker = Tracker(model)
    state = tracker.init(clip.frames[0], clip.masks[0])
    n_obj = len(state.objects)
    n_frames = len(clip) - 1
    scale = 1.0 / (n_obj * n_frames)
    res = ClipResult(0.0, 0.0, 0.0)
    for t in range(1, len(clip)):
        gt = clip.masks[t]
        with T.recording() as tape:
            pyr, outs = tracker.forward(state, clip.frames[t])
            terms, ces, tcs = [], [], []
            for i, out in enumerate(outs):
                gt_i = (gt == i + 1).astype(np.float64)
                ce = ce_loss(out.heat.logits, gt_i)
                pi = transition_target(Heatmap.from_mask(gt_i), state.objects[i].prev_heat)
                tc = tc_loss(out.pi_hat, pi)
                terms.append(total_loss(ce, tc, cfg.loss))
                ces.append(ce.item())
                tcs.append(tc.item())
            loss = T.mul(sum(terms[1:], terms[0]), scale)
            if not math.isfinite(loss.item()):
                _dump_nan(clip, t, outs)
            res.max_tape_nodes = max(res.max_tape_nodes, len(tape))
            T.backward(loss)
        res.loss += loss.item()
        res.ce += sum(ces) * scale
        res.tc += sum(tcs) * scale
        labels, _, state = tracker.advance(state, pyr, outs)
        res.frame_j.append(float(np.mean([jaccard(labels == i, gt == i) for i in range(1, n_obj + 1)])))
    return res


def _dump_nan(clip: Clip, t: int, outs) -> None:
    lines = [f"non-finite loss on clip {clip.name or '<unnamed>'} frame {t + 1}"]
    for i, o in enumerate(outs):
        lg = o.heat.logits.data
        ok = lg[np.isfinite(lg)]
        rng = f"({ok.min():.3g}, {ok.max():.3g})" if ok.size else "(none finite)"
        lines.append(
            f"  obj{i + 1}: logits finite={np.isfinite(lg).all()} range={rng}; "
            f"pi_hat finite={np.isfinite(o.pi_hat.data).all()}"
        )
    raise NumericalError("\n".join(lines))


def train_step(model: TTVOS, optimizer: Adam, clips: list[Clip], cfg: TrainConfig) -> list[ClipResult]:
    """Accumulate gradients over a batch of clips, then take one Adam step."""
    optimizer.zero_grad()
    results = [train_clip(model, c, cfg) for c in clips]
    used = sum(not r.skipped for r in results)
    if used:
        optimizer.step(scale=1.0 / used)
    optimizer.zero_grad()
    return results


def build_model(cfg: TrainConfig) -> TTVOS:
    return TTVOS(model_config_for(cfg.ablate), seed=cfg.seed)


def load_clips(seq_dirs) -> list[Clip]:
    clips = []
    for d in seq_dirs:
        frames, masks = fileio.load_sequence(d)
        clips.append(Clip(frames, [m.astype(np.int64) for m in masks], Path(d).name))
    return clips


def split_sequences(data_dir, val_dir, val_fraction: float):
    train = fileio.list_sequences(data_dir)
    if val_dir is not None:
        return train, fileio.list_sequences(val_dir)
    n_val = int(round(len(train) * val_fraction)) if len(train) > 1 else 0
    if n_val == 0:
        return train, []
    return train[:-n_val], train[-n_val:]


def validate(model: TTVOS, clips: list[Clip]) -> tuple[float, float, float]:
    """(mean J, mean F, J&F) with the DAVIS frame convention."""
    rows = []
    for c in clips:
        preds = Tracker(model).run(c.frames, c.masks[0])
        rows.extend(score_sequence(c.name, preds, c.masks))
    if not rows:
        return float("nan"), float("nan"), float("nan")
    j = float(np.mean([r.j for r in rows]))
    f = float(np.mean([r.f for r in rows]))
    return j, f, (j + f) / 2


def _window(clip: Clip, length: int, rng: np.random.Generator) -> Clip:
    if len(clip) <= length:
        return clip
    s = int(rng.integers(0, len(clip) - length + 1))
    return Clip(clip.frames[s : s + length], clip.masks[s : s + length], clip.name)


def augment_clip(clip: Clip, rng: np.random.Generator) -> Clip:
    """Label-preserving random flips, time reversal and RGB permutation."""
    frames, masks = list(clip.frames), list(clip.masks)
    if rng.random() < 0.5:
        frames, masks = [f[:, :, ::-1] for f in frames], [m[:, ::-1] for m in masks]
    if rng.random() < 0.5:
        frames, masks = [f[:, ::-1, :] for f in frames], [m[::-1, :] for m in masks]
    if rng.random() < 0.5:
        frames, masks = frames[::-1], masks[::-1]
    perm = rng.permutation(3)
    frames = [np.ascontiguousarray(f[perm]) for f in frames]
    return Clip(frames, [np.ascontiguousarray(m) for m in masks], clip.name)


def epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.lr
    return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * (epoch - 1) / cfg.epochs))


@dataclass
class FitResult:
    history: list[dict]
    best_jf: float
    best_epoch: int
    model: TTVOS


LOG_FIELDS = ["epoch", "steps", "loss", "ce", "tc", "train_j", "val_j", "val_f", "val_jf"]


def fit(model: TTVOS | None, data_dir, cfg: TrainConfig, out_dir, val_dir=None, init_from=None) -> FitResult:
    """Train for ``cfg.epochs`` epochs; writes log.csv, ckpt/epoch_NNN/ and ckpt/best/."""
    out = fileio.ensure_dir(out_dir)
    model = model or build_model(cfg)
    if init_from is not None:
        model.load_state_dict(fileio.load_checkpoint(init_from))
    train_dirs, val_dirs = split_sequences(data_dir, val_dir, cfg.val_fraction)
    train_clips, val_clips = load_clips(train_dirs), load_clips(val_dirs)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    history, best_jf, best_epoch = [], -1.0, 0
    with open(out / "log.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        wr.writeheader()
        for epoch in range(1, cfg.epochs + 1):
            opt.lr = epoch_lr(cfg, epoch)
            order = rng.permutation(len(train_clips))
            results = []
            for b in range(0, len(order), cfg.batch_size):
                batch = [_window(train_clips[i], cfg.clip_length, rng) for i in order[b : b + cfg.batch_size]]
                if cfg.augment:
                    batch = [augment_clip(c, rng) for c in batch]
                results.extend(train_step(model, opt, batch, cfg))
            done = [r for r in results if not r.skipped]
            vj, vf, vjf = validate(model, val_clips) if val_clips else (float("nan"),) * 3
            row = {
                "epoch": epoch,
                "steps": opt.state.step,
                "loss": _fmt(np.mean([r.loss for r in done]) if done else float("nan")),
                "ce": _fmt(np.mean([r.ce for r in done]) if done else float("nan")),
                "tc": _fmt(np.mean([r.tc for r in done]) if done else float("nan")),
                "train_j": _fmt(np.mean([r.mean_j for r in done]) if done else float("nan")),
                "val_j": _fmt(vj),
                "val_f": _fmt(vf),
                "val_jf": _fmt(vjf),
            }
            wr.writerow(row)
            fh.flush()
            history.append(row)
            log.info("epoch %d: %s", epoch, row)
            ckpt = out / "ckpt" / f"epoch_{epoch:03d}"
            model.save(ckpt)
            score = vjf if val_clips else -float(row["loss"])
            if score > best_jf:
                best_jf, best_epoch = score, epoch
                shutil.rmtree(out / "ckpt" / "best", ignore_errors=True)
                shutil.copytree(ckpt, out / "ckpt" / "best")
    return FitResult(history, best_jf, best_epoch, model)


def _fmt(x: float) -> str:
    return f"{x:.6f}"
