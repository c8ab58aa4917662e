"""Overfit one generated 64x112, T=8 shape clip and report per-frame J every 50 steps."""

import argparse
import logging

from ttvos.config import TrainConfig
from ttvos.experiments import overfit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clip-seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--target", type=float, default=0.9)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = overfit(a.clip_seed, a.steps, target=a.target, cfg=TrainConfig(lr=a.lr, augment=False))
    for step, loss, j in res.history:
        print(f"step {step:4d}  loss {loss:.4f}  min frame J {j:.3f}")
    print(f"{'reached' if res.reached else 'missed'} J >= {a.target} after {res.steps} steps in {res.seconds:.0f} s")


if __name__ == "__main__":
    main()
