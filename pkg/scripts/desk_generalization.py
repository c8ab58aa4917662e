"""Train on 20 generated shape sequences, score 5 held-out ones, for lambda 5 and 0 over 5 seeds."""

import argparse
import logging
import time

import numpy as np

from ttvos.experiments import DeskRecipe, desk_generalization


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=DeskRecipe.epochs)
    ap.add_argument("--pretrain-epochs", type=int, default=DeskRecipe.pretrain_epochs)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    recipe = DeskRecipe(epochs=a.epochs, pretrain_epochs=a.pretrain_epochs)
    t0 = time.perf_counter()
    runs = desk_generalization(a.out, recipe, seeds=range(a.seeds))
    by = {(r.seed, r.lambda_tc): r for r in runs}
    wins = 0
    print(f"{'seed':>4s} {'J&F lam=5':>10s} {'J&F lam=0':>10s}")
    for s in range(a.seeds):
        tc, ce = by[(s, 5.0)].jf, by[(s, 0.0)].jf
        wins += tc > ce
        print(f"{s:4d} {tc:10.3f} {ce:10.3f}")
    mean_tc = np.mean([r.jf for r in runs if r.lambda_tc == 5.0])
    print(f"mean J&F with TC {mean_tc:.3f}; TC wins {wins}/{a.seeds}; {time.perf_counter() - t0:.0f} s total")


if __name__ == "__main__":
    main()
