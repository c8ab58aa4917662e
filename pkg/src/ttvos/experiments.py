"""Scaled experiments shared by scripts/ and the acceptance suite."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .cli import main as cli_main
from .config import TrainConfig
from .datagen import gen_affine_clip, gen_shape_clip
from .metrics import jaccard
from .optim import Adam
from .trainer import build_model, fit, load_clips, train_step, validate
from .tracker import Tracker

log = logging.getLogger(__name__)

# ablation rows: name -> disabled components
ABLATION_ROWS = {
    "short_only": ("long", "update", "tc"),
    "long_only": ("short", "tc"),
    "no_tc": ("tc",),
    "box_init": ("boxinit",),
    "no_update": ("update",),
    "full": (),
}


# -- overfit sanity -------------------------------------------------------------


@dataclass
class OverfitResult:
    steps: int
    reached: bool
    history: list[tuple[int, float, float]] = field(default_factory=list)  # (step, loss, min frame J)
    seconds: float = 0.0


def frame_j(model, clip) -> list[float]:
    """Per-frame mean object J of inference tracking, frames 2..T."""
    preds = Tracker(model).run(clip.frames, clip.masks[0])
    n = clip.n_objects
    return [float(np.mean([jaccard(p == i, g == i) for i in range(1, n + 1)])) for p, g in zip(preds[1:], clip.masks[1:])]


def overfit(clip_seed: int = 0, steps: int = 300, check_every: int = 50, target: float = 0.9, cfg: TrainConfig | None = None) -> OverfitResult:
    """Fit one 64x112, T=8 shape clip; stop once every tracked frame has J >= target."""
    cfg = cfg or TrainConfig(augment=False)
    clip = gen_shape_clip(8, 1, (64, 112), seed=clip_seed)
    model = build_model(cfg)
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    res = OverfitResult(0, False)
    t0 = time.perf_counter()
    for s in range(1, steps + 1):
        loss = train_step(model, opt, [clip], cfg)[0].loss
        if s % check_every == 0 or s == steps:
            js = frame_j(model, clip)
            res.history.append((s, loss, min(js)))
            log.info("step %d loss %.4f min J %.3f", s, loss, min(js))
            if min(js) >= target:
                res.steps, res.reached = s, True
                break
    res.steps = res.steps or steps
    res.seconds = time.perf_counter() - t0
    return res


# -- desk-scale generalization --------------------------------------------------


@dataclass
class DeskRecipe:
    n_train: int = 20
    n_val: int = 5
    length: int = 12
    objects: int = 1
    data_seed: int = 100
    pretrain_epochs: int = 10  # stage 1: affine clips warped from the training frames
    pretrain_lr: float = 1e-3
    epochs: int = 40
    lr: float = 1e-3
    batch_size: int = 1
    lr_schedule: str = "cosine"
    augment: bool = True


@dataclass
class DeskRun:
    seed: int
    lambda_tc: float
    j: float
    f: float
    jf: float
    seconds: float


def make_desk_data(root, recipe: DeskRecipe) -> tuple[Path, Path]:
    """Write train/ and val/ shape sequences (disjoint seeds) under ``root``."""
    root = Path(root)
    rng = np.random.default_rng(recipe.data_seed)
    seeds = rng.choice(2**31 - 1, size=recipe.n_train + recipe.n_val, replace=False)
    for split, chunk in (("train", seeds[: recipe.n_train]), ("val", seeds[recipe.n_train :])):
        for i, s in enumerate(chunk):
            d = root / split / f"shapes_{i:04d}"
            if not (d / "frames").is_dir():
                c = gen_shape_clip(recipe.length, recipe.objects, seed=int(s))
                fileio.write_sequence(d, c.frames, c.masks)
    return root / "train", root / "val"


def make_affine_from(seq_root, out_root, seed: int = 0) -> Path:
    """One three-frame affine clip per annotated training frame."""
    out_root = Path(out_root)
    rng = np.random.default_rng(seed)
    for seq in fileio.list_sequences(seq_root):
        frames, masks = fileio.load_sequence(seq)
        for k, (f, m) in enumerate(zip(frames, masks)):
            d = out_root / f"{Path(seq).name}_{k:03d}"
            s = int(rng.integers(0, 2**31 - 1))
            if (m > 0).any() and not (d / "frames").is_dir():
                c = gen_affine_clip(f, m.astype(np.int64), 3, seed=s)
                fileio.write_sequence(d, c.frames, c.masks)
    return out_root


def desk_run(root, recipe: DeskRecipe, seed: int, lambda_tc: float) -> DeskRun:
    """Train on train/, score the final-epoch model on the held-out val/."""
    train_dir, val_dir = make_desk_data(root, recipe)
    out = Path(root) / f"run_lam{lambda_tc:g}_seed{seed}"
    t0 = time.perf_counter()
    init = None
    if recipe.pretrain_epochs:
        pre_dir = make_affine_from(train_dir, Path(root) / "pretrain", seed=recipe.data_seed)
        pre = TrainConfig(
            stage="pretrain",
            epochs=recipe.pretrain_epochs,
            lr=recipe.pretrain_lr,
            lr_schedule=recipe.lr_schedule,
            augment=recipe.augment,
            lambda_tc=lambda_tc,
            seed=seed,
            val_fraction=0.0,
        )
        fit(None, pre_dir, pre, out / "pretrain")
        init = out / "pretrain" / "ckpt" / f"epoch_{recipe.pretrain_epochs:03d}"
    cfg = TrainConfig(
        epochs=recipe.epochs,
        lr=recipe.lr,
        lr_schedule=recipe.lr_schedule,
        batch_size=recipe.batch_size,
        augment=recipe.augment,
        lambda_tc=lambda_tc,
        seed=seed,
        val_fraction=0.0,
    )
    # the held-out set is scored once, after training, so it never steers anything
    res = fit(None, train_dir, cfg, out / "main", init_from=init)
    j, f, jf = validate(res.model, load_clips(fileio.list_sequences(val_dir)))
    return DeskRun(seed, lambda_tc, j, f, jf, time.perf_counter() - t0)


def desk_generalization(root, recipe: DeskRecipe = DeskRecipe(), seeds=(0, 1, 2, 3, 4), lambdas=(5.0, 0.0)) -> list[DeskRun]:
    runs = []
    for seed in seeds:
        for lam in lambdas:
            r = desk_run(root, recipe, seed, lam)
            log.info("seed %d lambda %g: J&F %.3f (%.0f s)", seed, lam, r.jf, r.seconds)
            runs.append(r)
    return runs


# -- ablation plumbing ----------------------------------------------------------


def ablation_sweep(root, data_dir, epochs: int = 1, rows=ABLATION_ROWS, extra=()) -> dict[str, dict]:
    """Train, track and evaluate every ablation row through the CLI."""
    root = Path(root)
    out = {}
    for name, off in rows.items():
        run, pred, rep = root / name / "train", root / name / "pred", root / name / "eval"
        flags = ["--ablate", ",".join(off)] if off else []
        codes = [
            cli_main(["train", "--data", str(data_dir), "--epochs", str(epochs), "--out", str(run), *flags, *extra]),
            cli_main(["track", "--model", str(run / "ckpt" / "best"), "--data", str(data_dir), "--out", str(pred)]),
            cli_main(["eval", "--pred", str(pred), "--gt", str(data_dir), "--out", str(rep)]),
        ]
        out[name] = {"codes": codes, "ckpt": run / "ckpt" / "best", "report": rep / "report.csv", "ablate": off}
    return out

