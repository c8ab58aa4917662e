"""Train, track and evaluate every ablation row on a generated desk dataset."""

import argparse
import csv
import logging
from pathlib import Path

from ttvos.experiments import DeskRecipe, ablation_sweep, make_desk_data


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=1)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    train_dir, val_dir = make_desk_data(Path(a.out) / "data", DeskRecipe())
    res = ablation_sweep(Path(a.out) / "runs", train_dir, epochs=a.epochs, extra=["--val", str(val_dir)])
    for name, r in res.items():
        rows = list(csv.DictReader(open(r["report"]))) if r["report"].exists() else []
        mean = next((row for row in rows if row["sequence"] == "MEAN"), None)
        score = f"J {float(mean['J']):.3f} F {float(mean['F']):.3f}" if mean else "no report"
        print(f"{name:<18s} ablate={','.join(r['ablate']) or '-':<16s} exit={r['codes']}  {score}")


if __name__ == "__main__":
    main()
