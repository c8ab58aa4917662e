"""``ttvos`` command line: gen-data, train, track, eval, profile, grad-check.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines whose keys
are the subcommand's long flags; flags given on the command line win. Errors
print one line ``error: <category>: <message>`` and exit with the category's
code (2 usage, 3 config, 4 input, 5 dimension, 6 numerical).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import ABLATIONS, TrainConfig, read_config_file
from .datagen import AffineRanges, gen_affine_clip, gen_shape_clip
from .errors import ConfigurationError, InputError, TTVOSError, UsageError

def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _ablations(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in ABLATIONS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown ablation {bad[0]!r}; choose from {', '.join(sorted(ABLATIONS))}")
    return names


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


# -- subcommands ---------------------------------------------------------------


def cmd_gen_data(a) -> int:
    out = fileio.ensure_dir(Path(a.out) / "seqs")
    rng = np.random.default_rng(a.seed)
    length = a.length or (3 if a.kind == "affine" else 8)
    for i in range(a.n):
        seed = int(rng.integers(0, 2**31 - 1))
        name = f"{a.kind}_{i:04d}"
        if a.kind == "shapes":
            clip = gen_shape_clip(length, a.objects, a.size, seed=seed, name=name)
        else:
            src = gen_shape_clip(1, a.objects, a.size, seed=seed)
            clip = gen_affine_clip(src.frames[0], src.masks[0], length, AffineRanges(), seed=seed + 1, name=name)
        fileio.write_sequence(out / name, clip.frames, clip.masks)
    print(f"wrote {a.n} {a.kind} sequences of {length} frames to {out}")
    return 0


def cmd_train(a) -> int:
    from .trainer import fit

    cfg = TrainConfig(
        stage=a.stage,
        clip_length=a.clip_length,
        batch_size=a.batch_size,
        lr=a.lr,
        lr_schedule=a.lr_schedule,
        epochs=a.epochs,
        lambda_tc=a.lambda_tc,
        seed=a.seed,
        val_fraction=a.val_fraction,
        augment=a.augment,
        ablate=tuple(a.ablate),
    )
    res = fit(None, a.data, cfg, a.out, val_dir=a.val, init_from=a.init)
    for row in res.history:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    print(f"best epoch {res.best_epoch}; checkpoints in {Path(a.out) / 'ckpt'}")
    return 0


def _track_sequence(tracker_model, seq: Path):
    from .tracker import Tracker

    frame_files = sorted((seq / "frames").glob("*.ppm"))
    if not frame_files:
        raise InputError(f"{seq / 'frames'}: no .ppm frames")
    first = seq / "masks" / (frame_files[0].stem + ".pgm")
    if not first.is_file():
        raise InputError(f"{first}: first-frame annotation missing")
    frames = [fileio.read_ppm(f) for f in frame_files]
    labels = Tracker(tracker_model).run(frames, fileio.read_pgm(first).astype(np.int64))
    return [f.stem for f in frame_files], labels


def cmd_track(a) -> int:
    from .model import TTVOS, checkpoint_exists

    if not checkpoint_exists(a.model):
        raise InputError(f"{a.model}: no checkpoint (manifest.txt missing)")
    model = TTVOS.load(a.model)
    out = fileio.ensure_dir(a.out)
    seqs = fileio.list_sequences(a.data)
    for seq in seqs:
        stems, labels = _track_sequence(model, seq)
        d = fileio.ensure_dir(out / seq.name)
        for stem, lab in zip(stems, labels):
            fileio.write_pgm(d / f"{stem}.pgm", lab)
        print(f"{seq.name}: {len(labels)} frames")
    return 0


def cmd_eval(a) -> int:
    from .metrics import evaluate

    report = evaluate(a.pred, a.gt)
    print(report.table())
    out = fileio.ensure_dir(a.out)
    report.write_csv(out / "report.csv")
    return 0


def cmd_profile(a) -> int:
    from .config import ModelConfig, model_config_for
    from .model import TTVOS
    from .profiler import profile_model

    if a.model:
        cfg = TTVOS.load(a.model).cfg
    else:
        cfg = model_config_for(a.ablate, ModelConfig())
    report = profile_model(cfg, a.size, a.objects)
    print(report.table())
    out = fileio.ensure_dir(a.out)
    report.write_csv(out / "flops.csv")
    return 0


def cmd_grad_check(a) -> int:
    from .gradcheck import run_suite, standard_blocks

    names = None if a.all or not a.block else a.block
    known = {n for n, _, _ in standard_blocks(a.seed)}
    if names:
        unknown = sorted(set(names) - known)
        if unknown:
            raise UsageError(f"unknown block(s) {unknown}; choose from {sorted(known)}")
    reports = run_suite(a.tolerance, a.seed, names)
    for r in reports:
        print(r.line())
    ok = all(r.passed for r in reports)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} blocks pass at tolerance {a.tolerance:g}")
    return 0 if ok else 1


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttvos", description="Desk-scale template-attention video object segmentation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="key=value file; command-line flags win")
        sp.set_defaults(func=fn)
        return sp

    g = add("gen-data", cmd_gen_data, "generate synthetic sequences in the DAVIS-style layout")
    g.add_argument("--kind", choices=["shapes", "affine"], default="shapes")
    g.add_argument("--n", type=int, default=25, help="number of sequences")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--length", type=int, default=None, help="frames per sequence (default 8 shapes, 3 affine)")
    g.add_argument("--objects", type=int, default=1, help="objects per sequence")
    g.add_argument("--size", type=_size, default="64x112", help="HxW, both divisible by 16")
    g.add_argument("--out", default=None, required_=True)

    t = add("train", cmd_train, "train a model; writes log.csv and ckpt/")
    t.add_argument("--stage", choices=["pretrain", "main"], default="main")
    t.add_argument("--data", default=None, required_=True)
    t.add_argument("--val", default=None, help="held-out sequences (default: last val-fraction of --data)")
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--lr-schedule", choices=["constant", "cosine"], default="constant")
    t.add_argument("--lambda-tc", type=float, default=5.0)
    t.add_argument("--batch-size", type=int, default=1)
    t.add_argument("--clip-length", type=int, default=None, help="default 3 pretrain, 8 main")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--augment", type=_bool, default=True, help="random flips, time reversal, channel permutation (default on)")
    t.add_argument("--ablate", type=_ablations, action="extend", default=[], help=f"comma list of {','.join(sorted(ABLATIONS))}")
    t.add_argument("--init", default=None, help="checkpoint to start from")
    t.add_argument("--out", default=None, required_=True)

    k = add("track", cmd_track, "segment sequences from their first-frame annotation")
    k.add_argument("--model", default=None, required_=True, help="checkpoint directory")
    k.add_argument("--data", "--seq", dest="data", default=None, required_=True, help="one sequence or a dataset root")
    k.add_argument("--out", default=None, required_=True)

    e = add("eval", cmd_eval, "J/F scores of predictions against ground truth")
    e.add_argument("--pred", default=None, required_=True)
    e.add_argument("--gt", default=None, required_=True)
    e.add_argument("--out", default=None, required_=True, help="directory for report.csv")

    f = add("profile", cmd_profile, "Read/Seg/Update FLOP table and per-layer CSV")
    f.add_argument("--model", default=None, help="checkpoint (default: fresh model)")
    f.add_argument("--ablate", type=_ablations, action="extend", default=[])
    f.add_argument("--size", type=_size, default="64x112")
    f.add_argument("--objects", type=int, default=1)
    f.add_argument("--out", default=None, required_=True, help="directory for flops.csv")

    c = add("grad-check", cmd_grad_check, "finite-difference check of every differentiable block")
    c.add_argument("--all", action="store_true", help="check every block (default when --block is absent)")
    c.add_argument("--block", action="append", default=None, help="check one block (repeatable)")
    c.add_argument("--tolerance", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=0)
    return p


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return sub.choices[command]


def _config_defaults(sp: argparse.ArgumentParser, path: str) -> dict:
    """Typed defaults from a key=value file; keys are the subcommand's long flags."""
    actions = {a.dest: a for a in sp._actions if a.option_strings and a.dest not in ("help", "config")}
    if not Path(path).is_file():
        raise InputError(f"{path}: config file not found")
    out = {}
    for key, raw in read_config_file(path, set(actions)).items():
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            out[key] = _bool(raw)
        elif isinstance(act, argparse._ExtendAction):
            out[key] = _typed(act, raw, path, key)
        elif isinstance(act, argparse._AppendAction):
            out[key] = [s.strip() for s in raw.split(",") if s.strip()]
        else:
            out[key] = _typed(act, raw, path, key)
            if act.choices is not None and out[key] not in act.choices:
                raise ConfigurationError(f"{path}: {key} must be one of {list(act.choices)}")
    return out


def _typed(act, raw: str, path, key):
    try:
        return act.type(raw) if act.type else raw
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: bad value for {key}: {exc}") from None


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    sp = _subparser(parser, args.command)
    if args.config:
        sp.set_defaults(**_config_defaults(sp, args.config))
        args = parser.parse_args(argv)
    missing = [flag for flag, dest in sp.required_flags if getattr(args, dest) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
        )
        return args.func(args)
    except TTVOSError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: input: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return InputError.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 7


class _Parser(argparse.ArgumentParser):
    """Argument errors become UsageError; ``required_=True`` is checked after config merge."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.required_flags: list[tuple[str, str]] = []

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def add_argument(self, *args, required_: bool = False, **kw):
        act = super().add_argument(*args, **kw)
        if required_:
            self.required_flags.append((act.option_strings[-1], act.dest))
            act.help = (act.help + "; " if act.help else "") + "required (flag or config)"
        return act
