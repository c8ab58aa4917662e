"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends one node to the active :class:`Tape`.
``backward`` walks that tape in exact reverse order of recording. A tape can
be replayed only once; recording then continues on a fresh default tape.

The operations double as a runtime FLOP counter: when a :class:`FlopCounter`
is installed with :func:`counting`, each op reports its cost under the
current stage tag.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, UsageError

DTYPE = np.float64

_state = threading.local()


def _local():
    if not hasattr(_state, "stack"):
        _state.stack = []
        _state.default = Tape()
        _state.grad_enabled = True
        _state.counter = None
        _state.kinks = None
    return _state


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], backward: Callable):
        if self.consumed:
            raise UsageError("cannot record onto a tape that has already been replayed")
        out._tape = self
        self.nodes.append((out, inputs, backward))

    def backward(self, loss: "Tensor") -> None:
        if self.consumed:
            raise UsageError("backward already ran on this tape; re-record the computation")
        grads = {id(loss): np.ones_like(loss.data)}
        for out, inputs, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, ig in zip(inputs, fn(g)):
                if ig is None or not inp.requires_grad:
                    continue
                if inp._tape is None:
                    inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
                elif inp._tape is self:
                    prev = grads.get(id(inp))
                    grads[id(inp)] = ig if prev is None else prev + ig
        self.consumed = True
        self.nodes.clear()
        st = _local()
        if st.default is self:
            st.default = Tape()


def current_tape() -> Tape:
    st = _local()
    return st.stack[-1] if st.stack else st.default


@contextmanager
def recording(tape: Tape | None = None):
    """Record operations onto ``tape`` (a new one if omitted) inside the block."""
    st = _local()
    tape = Tape() if tape is None else tape
    st.stack.append(tape)
    try:
        yield tape
    finally:
        st.stack.pop()


@contextmanager
def no_grad():
    st = _local()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def grad_enabled() -> bool:
    return _local().grad_enabled


class FlopCounter:
    """Accumulates FLOPs reported by operations, bucketed by stage tag."""

    def __init__(self):
        self.by_stage: dict[str, int] = {}
        self.by_op: dict[str, int] = {}
        self._stages = ["untagged"]

    @property
    def total(self) -> int:
        return sum(self.by_stage.values())

    def add(self, op: str, n: int) -> None:
        tag = self._stages[-1]
        self.by_stage[tag] = self.by_stage.get(tag, 0) + int(n)
        self.by_op[op] = self.by_op.get(op, 0) + int(n)


@contextmanager
def counting(counter: FlopCounter | None = None):
    st = _local()
    counter = FlopCounter() if counter is None else counter
    prev = st.counter
    st.counter = counter
    try:
        yield counter
    finally:
        st.counter = prev


@contextmanager
def stage(tag: str):
    """Tag FLOPs reported inside the block; a no-op without an active counter."""
    counter = _local().counter
    if counter is None:
        yield
        return
    counter._stages.append(tag)
    try:
        yield
    finally:
        counter._stages.pop()


def _count(op: str, n: int) -> None:
    counter = _local().counter
    if counter is not None:
        counter.add(op, n)


@contextmanager
def watching_kinks():
    """Collect the sign masks of every leaky_relu evaluated inside the block."""
    st = _local()
    prev = st.kinks
    st.kinks = []
    try:
        yield st.kinks
    finally:
        st.kinks = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=DTYPE)
        if 0 in arr.shape:
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._tape = None
    out.requires_grad = _local().grad_enabled and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        current_tape().record(out, inputs, backward)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires_grad leaf reachable from ``loss``."""
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise UsageError("loss is not on a tape (no differentiable operation produced it)")
    loss._tape.backward(loss)


# -- elementwise -------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data + b.data
    _count("add", out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data - b.data
    _count("sub", out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data * b.data
    _count("mul", out.size)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


def leaky_relu(x: Tensor, alpha: float = 0.01) -> Tensor:
    mask = x.data >= 0
    kinks = _local().kinks
    if kinks is not None:
        kinks.append(mask)
    out = np.where(mask, x.data, alpha * x.data)
    _count("leaky_relu", out.size)
    return _make(out, (x,), lambda g: (np.where(mask, g, alpha * g),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    _count("softmax", 5 * s.size)
    return _make(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    _count("log_softmax", 5 * ls.size)
    return _make(ls, (x,), lambda g: (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),))


def _check_axis(x: Tensor, axis: int) -> None:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {x.ndim}")


# -- shape -------------------------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got rank {x.ndim}")
    return _make(x.data.T, (x,), lambda g: (g.T,))


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    _count("sum", x.size)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / n)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0]
    for t in tensors[1:]:
        if t.ndim != ref.ndim:
            raise DimensionError(f"concat rank mismatch: {ref.shape} vs {t.shape}")
        for ax in range(ref.ndim):
            if ax != axis % ref.ndim and t.shape[ax] != ref.shape[ax]:
                raise DimensionError(f"concat extent mismatch on axis {ax}: {ref.shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape[1]} vs {b.shape[0]}")
    out = a.data @ b.data
    _count("matmul", 2 * a.shape[0] * a.shape[1] * b.shape[1])

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


# -- convolution -------------------------------------------------------------


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(C, Hp, Wp) -> (C*k*k, ho*wo), rows ordered channel-major then kernel row/col."""
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return win.transpose(0, 3, 4, 1, 2).reshape(xp.shape[0] * k * k, ho * wo)


def _col2im(cols: np.ndarray, c: int, hp: int, wp: int, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    cols = cols.reshape(c, k, k, ho, wo)
    out = np.zeros((c, hp, wp), dtype=DTYPE)
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            out[:, i : i + he : stride, j : j + we : stride] += cols[:, i, j]
    return out


def _out_extent(n: int, k: int, stride: int, padding: int, axis: str) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride:
        raise ConfigurationError(
            f"conv output extent on {axis} is not a positive integer: ({n} + 2*{padding} - {k})/{stride} + 1"
        )
    return span // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Zero-padded 2D cross-correlation of a (C_in, H, W) map."""
    if x.ndim != 3:
        raise DimensionError(f"conv2d input must be (C, H, W), got {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d weight must be (C_out, C_in/groups, k, k), got {weight.shape}")
    cin, h, w = x.shape
    cout, cg, k, _ = weight.shape
    if cin % groups:
        raise DimensionError(f"input channels {cin} not divisible by groups {groups}")
    if cout % groups:
        raise DimensionError(f"output channels {cout} not divisible by groups {groups}")
    if cg * groups != cin:
        raise DimensionError(f"weight axis 1 is {cg}, expected C_in/groups = {cin // groups}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"bias axis 0 is {bias.shape}, expected ({cout},)")
    ho = _out_extent(h, k, stride, padding, "height")
    wo = _out_extent(w, k, stride, padding, "width")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, k, stride, ho, wo).reshape(groups, cg * k * k, ho * wo)
    wm = weight.data.reshape(groups, cout // groups, cg * k * k)
    out = (wm @ cols).reshape(cout, ho, wo)
    flops = 2 * k * k * cg * cout * ho * wo
    if bias is not None:
        out = out + bias.data[:, None, None]
        flops += cout * ho * wo
    _count("conv2d", flops)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        go = g.reshape(groups, cout // groups, ho * wo)
        gx = gw = None
        if x.requires_grad:
            gcols = (wm.transpose(0, 2, 1) @ go).reshape(cin * k * k, ho * wo)
            gxp = _col2im(gcols, cin, xp.shape[1], xp.shape[2], k, stride, ho, wo)
            gx = gxp[:, padding : padding + h, padding : padding + w] if padding else gxp
        if weight.requires_grad:
            gw = (go @ cols.transpose(0, 2, 1)).reshape(weight.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return _make(out, inputs, bw)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of conv2d; weight is (C_in, C_out, k, k)."""
    if x.ndim != 3:
        raise DimensionError(f"conv_transpose2d input must be (C, H, W), got {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv_transpose2d weight must be (C_in, C_out, k, k), got {weight.shape}")
    cin, h, w = x.shape
    if weight.shape[0] != cin:
        raise DimensionError(f"weight axis 0 is {weight.shape[0]}, expected C_in = {cin}")
    _, cout, k, _ = weight.shape
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"bias axis 0 is {bias.shape}, expected ({cout},)")
    hf, wf = (h - 1) * stride + k, (w - 1) * stride + k
    ho, wo = hf - 2 * padding, wf - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"conv_transpose2d output extent ({ho}, {wo}) is not positive")
    wm = weight.data.reshape(cin, cout * k * k)
    xm = x.data.reshape(cin, h * w)
    full = _col2im(wm.T @ xm, cout, hf, wf, k, stride, h, w)
    out = full[:, padding : padding + ho, padding : padding + wo]
    flops = 2 * k * k * cin * cout * h * w
    if bias is not None:
        out = out + bias.data[:, None, None]
        flops += cout * ho * wo
    else:
        out = out.copy()
    _count("conv_transpose2d", flops)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gp = np.pad(g, ((0, 0), (padding, padding), (padding, padding))) if padding else g
        gcols = _im2col(gp, k, stride, h, w)
        gx = (wm @ gcols).reshape(x.shape) if x.requires_grad else None
        gw = (xm @ gcols.T).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return _make(out, inputs, bw)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(r*r*C, H, W) -> (C, r*H, r*W) with out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w]."""
    if x.ndim != 3:
        raise DimensionError(f"pixel_shuffle input must be (C, H, W), got {x.shape}")
    c2, h, w = x.shape
    if c2 % (r * r):
        raise DimensionError(f"channel extent {c2} not divisible by r^2 = {r * r}")
    c = c2 // (r * r)
    out = x.data.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * r, w * r)

    def bw(g):
        return (g.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(x.shape),)

    return _make(out, (x,), bw)


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k mean pooling."""
    if x.ndim != 3:
        raise DimensionError(f"avg_pool2d input must be (C, H, W), got {x.shape}")
    c, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(f"spatial extent {(h, w)} not divisible by pool size {k}")
    out = x.data.reshape(c, h // k, k, w // k, k).mean(axis=(2, 4))
    _count("avg_pool2d", x.size)

    def bw(g):
        return (np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k),)

    return _make(out, (x,), bw)


@lru_cache(maxsize=64)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centres, no corner alignment; negative sources clamp to 0
    m = np.zeros((n_out, n_in), dtype=DTYPE)
    scale = n_in / n_out
    for o in range(n_out):
        src = max((o + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    m.setflags(write=False)
    return m


def bilinear_resize(x: Tensor, h_out: int, w_out: int) -> Tensor:
    if x.ndim != 3:
        raise DimensionError(f"bilinear_resize input must be (C, H, W), got {x.shape}")
    ry = _interp_matrix(x.shape[1], h_out)
    rx = _interp_matrix(x.shape[2], w_out)
    out = ry @ x.data @ rx.T
    _count("bilinear_resize", 7 * out.size)
    return _make(out, (x,), lambda g: (ry.T @ g @ rx,))

