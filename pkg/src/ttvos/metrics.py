"""DAVIS-protocol region (J) and boundary (F) scores."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import fileio
from .errors import InputError


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = np.asarray(pred).astype(bool), np.asarray(gt).astype(bool)
    if p.shape != g.shape:
        raise InputError(f"mask extents differ: {p.shape} vs {g.shape}")
    return p, g


def jaccard(pred, gt) -> float:
    p, g = _pair(pred, gt)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background or on the image edge."""
    padded = np.pad(mask.astype(bool), 1, constant_values=False)
    inner = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return mask.astype(bool) & ~inner


def tolerance_radius(shape) -> int:
    return math.ceil(0.008 * math.hypot(*shape))


def disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return yy * yy + xx * xx <= r * r


def boundary_f(pred, gt) -> float:
    p, g = _pair(pred, gt)
    bp, bg = boundary(p), boundary(g)
    np_, ng = bp.sum(), bg.sum()
    if np_ == 0 and ng == 0:
        return 1.0
    if np_ == 0 or ng == 0:
        return 0.0
    se = disk(tolerance_radius(p.shape))
    precision = (bp & ndimage.binary_dilation(bg, se)).sum() / np_
    recall = (bg & ndimage.binary_dilation(bp, se)).sum() / ng
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


@dataclass
class ObjectScore:
    sequence: str
    obj: int
    j: float
    f: float


@dataclass
class EvalReport:
    rows: list[ObjectScore] = field(default_factory=list)

    @property
    def mean_j(self) -> float:
        return float(np.mean([r.j for r in self.rows])) if self.rows else 0.0

    @property
    def mean_f(self) -> float:
        return float(np.mean([r.f for r in self.rows])) if self.rows else 0.0

    @property
    def jf(self) -> float:
        return (self.mean_j + self.mean_f) / 2.0

    def table(self) -> str:
        lines = [f"{'sequence':<20s} {'obj':>3s} {'J':>7s} {'F':>7s}"]
        for r in self.rows:
            lines.append(f"{r.sequence:<20s} {r.obj:>3d} {r.j:7.4f} {r.f:7.4f}")
        lines.append(f"{'MEAN':<20s} {'':>3s} {self.mean_j:7.4f} {self.mean_f:7.4f}")
        lines.append(f"J&F = {self.jf:.4f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sequence", "object", "J", "F"])
            for r in self.rows:
                wr.writerow([r.sequence, r.obj, f"{r.j:.6f}", f"{r.f:.6f}"])
            wr.writerow(["MEAN", "", f"{self.mean_j:.6f}", f"{self.mean_f:.6f}"])


def score_sequence(name: str, preds: list[np.ndarray], gts: list[np.ndarray]) -> list[ObjectScore]:
    """Per-object mean J/F over frames 2..T-1 (first and last frame excluded)."""
    if len(preds) != len(gts):
        raise InputError(f"{name}: {len(preds)} predictions for {len(gts)} ground-truth frames")
    if len(gts) < 3:
        raise InputError(f"{name}: need at least 3 frames to score (first and last are excluded)")
    n_obj = int(max(g.max() for g in gts))
    rows = []
    for obj in range(1, n_obj + 1):
        js, fs = [], []
        for p, g in zip(preds[1:-1], gts[1:-1]):
            js.append(jaccard(p == obj, g == obj))
            fs.append(boundary_f(p == obj, g == obj))
        rows.append(ObjectScore(name, obj, float(np.mean(js)), float(np.mean(fs))))
    return rows


def _pred_dir(pred_root: Path, seq: Path, single: bool) -> Path:
    if single and any(pred_root.glob("*.pgm")):
        return pred_root
    d = pred_root / seq.name
    return d / "masks" if (d / "masks").is_dir() else d


def evaluate(pred_dir, gt_dir) -> EvalReport:
    pred_root = Path(pred_dir)
    seqs = fileio.list_sequences(gt_dir)
    single = len(seqs) == 1 and (Path(gt_dir) / "frames").is_dir()
    report = EvalReport()
    problems = []
    for seq in seqs:
        gt_files = sorted((seq / "masks").glob("*.pgm"))
        pdir = _pred_dir(pred_root, seq, single)
        missing = [str(pdir / f.name) for f in gt_files if not (pdir / f.name).is_file()]
        if missing:
            problems.extend(missing)
            continue
        gts = [fileio.read_pgm(f) for f in gt_files]
        preds = [fileio.read_pgm(pdir / f.name) for f in gt_files]
        report.rows.extend(score_sequence(seq.name, preds, gts))
    if problems:
        raise InputError("missing prediction files:\n  " + "\n  ".join(problems))
    return report
