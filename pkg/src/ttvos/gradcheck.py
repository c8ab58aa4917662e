"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class GradCheckEntry:
    tensor: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    name: str
    tolerance: float
    max_rel_error: float = 0.0
    n_checked: int = 0
    n_skipped_kinks: int = 0
    entries: list[GradCheckEntry] = field(default_factory=list)
    failure: str | None = None

    @property
    def passed(self) -> bool:
        return self.failure is None and self.n_checked > 0 and self.max_rel_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.failure})" if self.failure else ""
        return (
            f"{status} {self.name:<28s} max_rel_err={self.max_rel_error:.3e} "
            f"checked={self.n_checked} kink_skips={self.n_skipped_kinks}{extra}"
        )


def rel_error(a: float, n: float, floor: float = 1e-4) -> float:
    # floor keeps components with near-zero true gradient from dominating
    return abs(a - n) / max(abs(a), abs(n), floor)


def norm_rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - n) / denom)


def grad_check(
    block,
    inputs,
    tolerance: float = 1e-6,
    h: float = 1e-5,
    seed: int = 0,
    max_checks: int = 12,
    name: str | None = None,
    floor: float = 1e-4,
) -> GradCheckReport:
    """Compare autodiff gradients of ``block`` with central differences.

    ``inputs`` holds shape tuples (filled with standard normals) or explicit
    arrays. Non-scalar outputs are reduced with a fixed random projection.
    The error of a tensor is ``|a - n| / (|a| + |n|)`` over its sampled
    coordinates (vector norms); the report keeps the worst tensor. Per-entry
    errors are kept too, but a lone near-zero component is dominated by
    round-off at h=1e-5 and is not a meaningful failure signal.
    Every input and every parameter of ``block`` (if it is a Module) is
    checked at up to ``max_checks`` random coordinates each; coordinates
    whose perturbation flips any leaky_relu sign are resampled. Never raises.
    """
    name = name or getattr(block, "__name__", type(block).__name__)
    report = GradCheckReport(name=name, tolerance=tolerance)
    rng = np.random.default_rng(seed)
    try:
        arrays = [
            np.array(x, dtype=T.DTYPE) if not isinstance(x, tuple) else rng.standard_normal(x) for x in inputs
        ]
        xs = [Tensor(a, requires_grad=True) for a in arrays]
        params = block.named_parameters() if hasattr(block, "named_parameters") else []
        targets = [(f"input{i}", x) for i, x in enumerate(xs)] + list(params)

        proj = None

        def evaluate(track_grad: bool):
            nonlocal proj
            with T.watching_kinks() as kinks:
                if track_grad:
                    out = block(*xs)
                else:
                    with T.no_grad():
                        out = block(*xs)
            if proj is None:
                proj = np.ones(()) if out.size == 1 else rng.standard_normal(out.shape)
            return out, kinks

        for _, t in targets:
            t.grad = None
        with T.recording():
            out, base_kinks = evaluate(True)
            loss = T.tsum(T.mul(out, proj.reshape(out.shape) if out.size > 1 else proj))
            T.backward(loss)

        def scalar():
            out, kinks = evaluate(False)
            return float(np.sum(out.data * proj)), kinks

        for tname, t in targets:
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            order = rng.permutation(flat.size)
            checked, pairs = 0, []
            for idx in order:
                if checked >= max_checks:
                    break
                orig = flat[idx]
                flat[idx] = orig + h
                fp, kp = scalar()
                flat[idx] = orig - h
                fm, km = scalar()
                flat[idx] = orig
                if not (_same_masks(kp, base_kinks) and _same_masks(km, base_kinks)):
                    report.n_skipped_kinks += 1
                    continue
                num = (fp - fm) / (2 * h)
                ana = float(analytic.reshape(-1)[idx])
                err = rel_error(ana, num, floor)
                report.entries.append(GradCheckEntry(tname, np.unravel_index(idx, t.shape), ana, num, err))
                pairs.append((ana, num))
                report.n_checked += 1
                checked += 1
            if pairs:
                a, n = np.array(pairs).T
                report.max_rel_error = max(report.max_rel_error, norm_rel_error(a, n))
        for _, t in params:
            t.grad = None
    except Exception as exc:  # reported, not raised
        report.failure = f"{type(exc).__name__}: {exc}"
    return report


def _same_masks(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


class Block:
    """Callable plus the module whose parameters it uses."""

    def __init__(self, fn, module=None, name: str = ""):
        self.fn = fn
        self.module = module
        self.__name__ = name

    def __call__(self, *xs):
        return self.fn(*xs)

    def named_parameters(self):
        return self.module.named_parameters() if self.module is not None else []


def _flat(*ts):
    return T.concat([T.reshape(t, (-1,)) for t in ts], axis=0)


def standard_blocks(seed: int = 0):
    """(name, block, inputs) for every differentiable block and primitive."""
    from .config import LossConfig, ModelConfig
    from .losses import ce_loss, tc_loss, total_loss
    from .model import TTVOS
    from .short_term import SimilarityMap
    from .template_attention import LongTemplate, update_template

    rng = np.random.default_rng(seed)
    cfg = ModelConfig()
    model = TTVOS(cfg, seed=seed)
    bb, st, ta = model.backbone, model.short, model.tattn
    dec, pih = model.decoder, model.pihead
    tp0 = LongTemplate(Tensor(rng.dirichlet(np.ones(cfg.c_tp), size=cfg.c_tp)), 1)
    mask = (rng.random((16, 16)) > 0.5).astype(float)
    pi = rng.uniform(-1, 1, (2, 4, 4))

    def tattn_full(f8p, hp, f8c, hc):
        i = ta.embedding_matrix(ta.mask_feature(f8p, hp))
        tp = update_template(tp0, i)
        a, s = ta.attend(tp, ta.mask_feature(f8c, hc))
        return _flat(i, tp.tp, a, s.values)

    def decode(ss, sl, f4):
        h = dec(SimilarityMap(ss, "short"), SimilarityMap(sl, "long"), f4)
        return _flat(h.probs, h.logits)

    w_g = Tensor(rng.standard_normal((8, 1, 3, 3)) * 0.3, requires_grad=True)
    w_t = Tensor(rng.standard_normal((3, 2, 2, 2)) * 0.3, requires_grad=True)

    class _Weights:
        def __init__(self, **kw):
            self.kw = kw

        def named_parameters(self):
            return list(self.kw.items())

    c16, c8, c4, cs = cfg.c16, cfg.c8, cfg.c4, cfg.c_sim
    return [
        ("backbone", Block(lambda x: _flat(*(lambda p: (p.f4, p.f8, p.f16))(bb.extract(x))), bb, "backbone"), [(3, 32, 32)]),
        ("short_term", Block(lambda fp, h, fc: st.match(st.build_template(fp, h), fc).values, st, "short_term"), [(c16, 2, 2), (2, 32, 32), (c16, 2, 2)]),
        ("template_attention", Block(tattn_full, ta, "template_attention"), [(c8, 4, 4), (2, 32, 32), (c8, 4, 4), (2, 32, 32)]),
        ("decoder", Block(decode, dec, "decoder"), [(cs, 2, 2), (cs, 2, 2), (c4, 4, 4)]),
        ("transition_head", Block(lambda s: pih(SimilarityMap(s, "long")), pih, "transition_head"), [(cs, 4, 4)]),
        ("ce_loss", Block(lambda lg: ce_loss(lg, mask), name="ce_loss"), [(2, 16, 16)]),
        ("tc_loss", Block(lambda ph: tc_loss(ph, pi), name="tc_loss"), [(2, 4, 4)]),
        (
            "total_loss",
            Block(lambda lg, ph: total_loss(ce_loss(lg, mask), tc_loss(ph, pi), LossConfig(5.0)), name="total_loss"),
            [(2, 16, 16), (2, 4, 4)],
        ),
        ("conv2d_groups", Block(lambda x: T.conv2d(x, w_g, None, 1, 1, 4), _Weights(w=w_g), "conv2d_groups"), [(4, 6, 6)]),
        ("conv_transpose2d", Block(lambda x: T.conv_transpose2d(x, w_t, None, 2, 0), _Weights(w=w_t), "conv_transpose2d"), [(3, 3, 3)]),
        ("pixel_shuffle", Block(lambda x: T.pixel_shuffle(x, 2), name="pixel_shuffle"), [(8, 3, 3)]),
        ("softmax", Block(lambda x: T.softmax(x, axis=0), name="softmax"), [(4, 3)]),
        ("log_softmax", Block(lambda x: T.log_softmax(x, axis=0), name="log_softmax"), [(4, 3)]),
        ("leaky_relu", Block(lambda x: T.leaky_relu(x, 0.01), name="leaky_relu"), [(5, 5)]),
        ("matmul", Block(lambda a, b: T.matmul(a, b), name="matmul"), [(5, 7), (7, 3)]),
        ("bilinear_resize", Block(lambda x: T.bilinear_resize(x, 6, 10), name="bilinear_resize"), [(2, 3, 5)]),
        ("avg_pool2d", Block(lambda x: T.avg_pool2d(x, 2), name="avg_pool2d"), [(2, 4, 6)]),
        ("concat", Block(lambda a, b: T.concat([a, b], axis=0), name="concat"), [(2, 3, 3), (3, 3, 3)]),
    ]


def run_suite(tolerance: float = 1e-6, seed: int = 0, names=None) -> list[GradCheckReport]:
    reports = []
    for name, block, inputs in standard_blocks(seed):
        if names and name not in names:
            continue
        reports.append(grad_check(block, inputs, tolerance=tolerance, seed=seed, name=name))
    return reports
