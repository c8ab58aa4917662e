"""Read/Seg/Update FLOP table for the default model and every ablation row."""

import argparse

from ttvos.config import model_config_for
from ttvos.experiments import ABLATION_ROWS
from ttvos.model import TTVOS
from ttvos.profiler import profile_model, runtime_counts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", default="64x112")
    a = ap.parse_args()
    extent = tuple(int(x) for x in a.size.split("x"))
    print(f"{'row':<18s}{'Read':>10s}{'Seg':>10s}{'Update':>10s}{'Decode':>10s}{'#Param':>9s}  upd/seg  runtime==analytic")
    for name, off in ABLATION_ROWS.items():
        model = TTVOS(model_config_for(off))
        rep = profile_model(model, extent)
        analytic = {k: v for k, v in rep.by_stage().items() if k != "train"}
        same = analytic == runtime_counts(model, extent)
        m = [x / 1e6 for x in (rep.read_flops, rep.seg_flops, rep.update_flops, rep.decode_flops)]
        print(f"{name:<18s}{m[0]:9.3f}M{m[1]:9.3f}M{m[2]:9.3f}M{m[3]:9.3f}M{rep.params:9d}  {rep.update_flops / rep.seg_flops:7.4f}  {same}")


if __name__ == "__main__":
    main()
