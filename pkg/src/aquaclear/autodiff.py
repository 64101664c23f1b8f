"""Reverse-mode autodiff over the core tensor kernels.

A :class:`Tape` records an eager forward pass as an append-only node list
(so topological order is recording order) and replays it backwards once to
produce gradients for every named leaf.  The traced op set mirrors
``tensor_ops`` plus the scalar-reduction plumbing a training loss needs
(subtract, absolute value, mean, constant scale, clamp).

Every op in this module is callable with either plain numpy arrays or
:class:`Var` operands; with plain arrays it falls through to ``tensor_ops``
untouched, which is what lets the network forward serve inference and
training with a single code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fft
from . import tensor_ops as T
from .tensor_ops import ShapeError

GradientSet = dict[str, np.ndarray]


class UnsupportedOpError(TypeError):
    """An operation outside the recorded op set touched a traced value."""


class TapeReuseError(RuntimeError):
    """backward() was called twice on the same tape."""


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    # Maps the gradient at this node to gradients for each parent;
    # None for leaves.
    bwd: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
    name: str | None = None
    trainable: bool = False


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False
    output_id: int | None = None

    def _push(self, node: Node) -> "Var":
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value: np.ndarray, name: str | None = None,
             trainable: bool = False) -> "Var":
        return self._push(Node("leaf", (), np.asarray(value), None, name, trainable))

    def constant(self, value: np.ndarray) -> "Var":
        return self._push(Node("const", (), np.asarray(value), None))

    def record(self, op: str, parents: tuple[int, ...], value: np.ndarray,
               bwd: Callable) -> "Var":
        return self._push(Node(op, parents, value, bwd))


class Var:
    """A traced tensor: a (tape, node) handle with ndarray semantics."""

    __slots__ = ("tape", "nid")

    def __init__(self, tape: Tape, nid: int):
        self.tape = tape
        self.nid = nid

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # Keep numpy from silently consuming traced values; name the culprit.
        raise UnsupportedOpError(f"numpy op {ufunc.__name__!r} is outside the "
                                 "recorded op set")

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.nid].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __array__(self, *args, **kwargs):
        raise UnsupportedOpError(
            "implicit numpy conversion of a traced tensor; use the recorded ops")

    def __repr__(self):
        return f"Var(op={self.tape.nodes[self.nid].op!r}, shape={self.shape})"


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _lift(tape: Tape, x) -> Var:
    return x if isinstance(x, Var) else tape.constant(np.asarray(x))


# ---------------------------------------------------------------------------
# Recorded ops (fall through to tensor_ops when nothing is traced)
# ---------------------------------------------------------------------------

def conv2d(x, weights, bias):
    tape = _tape_of(x, weights, bias)
    if tape is None:
        return T.conv2d_raw(x, weights, bias)
    x, weights, bias = _lift(tape, x), _lift(tape, weights), _lift(tape, bias)
    xv, wv = x.value, weights.value
    out = T.conv2d_raw(xv, wv, bias.value)

    def bwd(g):
        return T.conv2d_backward(xv, wv, g)

    return tape.record("conv2d", (x.nid, weights.nid, bias.nid), out, bwd)


def bilinear_resize(x, target_h: int, target_w: int):
    if not isinstance(x, Var):
        return T.bilinear_resize(x, target_h, target_w)
    in_h, in_w = x.shape[2], x.shape[3]
    out = T.bilinear_resize(x.value, target_h, target_w)

    def bwd(g):
        return (T.bilinear_resize_backward(g, in_h, in_w),)

    return x.tape.record("bilinear_resize", (x.nid,), out, bwd)


def relu(x):
    if not isinstance(x, Var):
        return T.relu(x)
    xv = x.value
    out = T.relu(xv)

    def bwd(g):
        return (g * (xv > 0),)

    return x.tape.record("relu", (x.nid,), out, bwd)


def sigmoid(x):
    if not isinstance(x, Var):
        return T.sigmoid(x)
    out = T.sigmoid(x.value)

    def bwd(g):
        return (g * out * (1 - out),)

    return x.tape.record("sigmoid", (x.nid,), out, bwd)


def add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return T.add(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    out = T.add(a.value, b.value)

    def bwd(g):
        return g, g

    return tape.record("add", (a.nid, b.nid), out, bwd)


def sub(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return T.add(a, -b)
    a, b = _lift(tape, a), _lift(tape, b)
    out = T.add(a.value, -b.value)

    def bwd(g):
        return g, -g

    return tape.record("sub", (a.nid, b.nid), out, bwd)


def mul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return T.mul(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    out = T.mul(av, bv)

    def bwd(g):
        return g * bv, g * av

    return tape.record("mul", (a.nid, b.nid), out, bwd)


def div(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return T.mul(a, 1.0 / b) if np.isscalar(b) else a / b
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    out = av / bv

    def bwd(g):
        return g / bv, -g * av / (bv * bv)

    return tape.record("div", (a.nid, b.nid), out, bwd)


def scale(x, s: float):
    if not isinstance(x, Var):
        return x * x.dtype.type(s)
    sv = x.dtype.type(s)
    out = x.value * sv

    def bwd(g):
        return (g * sv,)

    return x.tape.record("scale", (x.nid,), out, bwd)


def clamp01(x):
    if not isinstance(x, Var):
        return T.clamp01(x)
    xv = x.value
    out = T.clamp01(xv)

    def bwd(g):
        return (g * ((xv > 0) & (xv < 1)),)

    return x.tape.record("clamp01", (x.nid,), out, bwd)


def absval(x):
    if not isinstance(x, Var):
        return np.abs(x)
    xv = x.value
    out = np.abs(xv)

    def bwd(g):
        return (g * np.sign(xv),)

    return x.tape.record("abs", (x.nid,), out, bwd)


def concat_channels(parts):
    tape = _tape_of(*parts)
    if tape is None:
        return T.concat_channels(list(parts))
    parts = [_lift(tape, p) for p in parts]
    values = [p.value for p in parts]
    out = T.concat_channels(values)
    counts = [v.shape[1] for v in values]

    def bwd(g):
        grads, start = [], 0
        for c in counts:
            grads.append(g[:, start:start + c])
            start += c
        return tuple(grads)

    return tape.record("concat_channels", tuple(p.nid for p in parts), out, bwd)


def split_channels(x, groups: int):
    if not isinstance(x, Var):
        return T.split_channels(x, groups)
    pieces = T.split_channels(x.value, groups)
    step = x.shape[1] // groups
    full = x.shape
    outs = []
    for i, piece in enumerate(pieces):
        lo = i * step

        def bwd(g, lo=lo):
            pad = np.zeros(full, dtype=g.dtype)
            pad[:, lo:lo + step] = g
            return (pad,)

        outs.append(x.tape.record("split_channels", (x.nid,), piece, bwd))
    return outs


def sum_all(x):
    """Reduce to the scalar-shaped (1, 1, 1, 1) total."""
    if not isinstance(x, Var):
        return np.sum(x).reshape(1, 1, 1, 1)
    xv = x.value
    out = np.sum(xv).reshape(1, 1, 1, 1).astype(xv.dtype)

    def bwd(g):
        return (np.full(xv.shape, g.reshape(())[()], dtype=xv.dtype),)

    return x.tape.record("sum", (x.nid,), out, bwd)


def mean_all(x):
    size = x.shape[0] * x.shape[1] * x.shape[2] * x.shape[3]
    return scale(sum_all(x), 1.0 / size)


def rfft2(x):
    """Traced half-spectrum transform; returns (magnitude, phase).

    The complex spectrum is held in a shared intermediate node, so the
    magnitude and phase adjoints accumulate there and the inverse-transform
    half of the adjoint runs once per backward pass.
    """
    if not isinstance(x, Var):
        s = T.rfft2(x)
        return s.magnitude, s.phase
    xv = x.value
    w = xv.shape[3]
    cdtype = fft.complex_dtype_for(xv.dtype)
    z = fft.rfft2_complex(xv)
    mag_v = np.abs(z)
    pha_v = np.angle(z)
    pha_v[pha_v == -np.pi] = np.pi
    cos_p, sin_p = np.cos(pha_v), np.sin(pha_v)

    def bwd_z(gz):
        t = fft.fft_axis(gz, -2, +1)
        padded = np.zeros(t.shape[:-1] + (w,), dtype=cdtype)
        padded[..., : t.shape[-1]] = t
        return (fft.fft1d(padded, +1).real.astype(xv.dtype),)

    zvar = x.tape.record("rfft2_complex", (x.nid,), z, bwd_z)

    def bwd_mag(g):
        return ((g * (cos_p + 1j * sin_p)).astype(cdtype, copy=False),)

    def bwd_pha(g):
        # Zero-magnitude bins have undefined phase; their gradient is zero.
        inv_m = np.zeros_like(mag_v)
        nz = mag_v > 0
        inv_m[nz] = 1.0 / mag_v[nz]
        return (((g * inv_m) * (-sin_p + 1j * cos_p)).astype(cdtype, copy=False),)

    mag = x.tape.record("spectral_magnitude", (zvar.nid,),
                        mag_v.astype(xv.dtype, copy=False), bwd_mag)
    pha = x.tape.record("spectral_phase", (zvar.nid,),
                        pha_v.astype(xv.dtype, copy=False), bwd_pha)
    return mag, pha


def irfft2(mag, pha, out_h: int, out_w: int):
    tape = _tape_of(mag, pha)
    if tape is None:
        return T.irfft2(T.SpectralPair(mag, pha), out_h, out_w)
    mag, pha = _lift(tape, mag), _lift(tape, pha)
    cdtype = fft.complex_dtype_for(mag.dtype)
    m_v = mag.value
    cos_p, sin_p = np.cos(pha.value), np.sin(pha.value)
    z = (m_v * (cos_p + 1j * sin_p)).astype(cdtype, copy=False)
    out = fft.irfft2_complex(z, out_h, out_w).astype(mag.dtype, copy=False)

    def bwd(g):
        gv = fft.fft1d(g.astype(cdtype), -1)
        gt = fft.hermitian_fold(gv, out_w)
        gz = fft.fft_axis(gt, -2, -1) / (out_h * out_w)
        g_mag = cos_p * gz.real + sin_p * gz.imag
        g_pha = m_v * (-sin_p * gz.real + cos_p * gz.imag)
        return g_mag.astype(mag.dtype, copy=False), g_pha.astype(pha.dtype, copy=False)

    return tape.record("irfft2", (mag.nid, pha.nid), out, bwd)


# ---------------------------------------------------------------------------
# Recording driver
# ---------------------------------------------------------------------------

def forward_record(graph_fn, params: dict[str, np.ndarray], x: np.ndarray):
    """Run ``graph_fn(param_vars, input_var)`` under recording.

    ``graph_fn`` must be composed of the ops in this module; anything else
    that touches a traced value raises :class:`UnsupportedOpError`.  Returns
    the plain output array and the tape, which is then consumed by exactly
    one :func:`backward` call.
    """
    tape = Tape()
    param_vars = {name: tape.leaf(value, name=name, trainable=True)
                  for name, value in params.items()}
    xv = tape.leaf(np.asarray(x), name=None, trainable=False)
    out = graph_fn(param_vars, xv)
    if not isinstance(out, Var):
        raise UnsupportedOpError("graph_fn must return a traced value")
    tape.output_id = out.nid
    return out.value, tape


def backward(tape: Tape, loss_grad: np.ndarray | None = None) -> GradientSet:
    """Gradients of the recorded output with respect to every trainable leaf.

    With ``loss_grad`` omitted the output must be scalar-shaped (1, 1, 1, 1)
    and is seeded with one; otherwise ``loss_grad`` must match the output
    shape.  Gradients accumulate additively at fan-out nodes, and parameters
    the output does not depend on report zeros.
    """
    if tape.consumed:
        raise TapeReuseError("tape has already been consumed by backward()")
    tape.consumed = True
    if tape.output_id is None:
        raise ValueError("tape has no recorded output")
    out_node = tape.nodes[tape.output_id]
    if loss_grad is None:
        if out_node.value.shape != (1, 1, 1, 1):
            raise ShapeError(f"output shape {out_node.value.shape} is not scalar "
                             "(1, 1, 1, 1); pass loss_grad explicitly")
        loss_grad = np.ones((1, 1, 1, 1), dtype=out_node.value.dtype)
    elif np.shape(loss_grad) != out_node.value.shape:
        raise ShapeError(f"loss_grad shape {np.shape(loss_grad)} does not match "
                         f"output shape {out_node.value.shape}")

    grads: dict[int, np.ndarray] = {tape.output_id: np.asarray(loss_grad)}
    result: GradientSet = {}
    for nid in range(len(tape.nodes) - 1, -1, -1):
        g = grads.pop(nid, None)
        node = tape.nodes[nid]
        if node.trainable:
            result[node.name] = (np.zeros_like(node.value) if g is None
                                 else np.asarray(g, dtype=node.value.dtype))
            continue
        if g is None or node.bwd is None:
            continue
        for pid, pg in zip(node.parents, node.bwd(g)):
            held = grads.get(pid)
            grads[pid] = pg if held is None else held + pg
    return result


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    op_name: str
    trials: int
    max_rel_err: float
    threshold: float
    passed: bool


_GRAD_CHECKS: dict[str, tuple[Callable, float, str]] = {}


def _register(name: str, threshold: float = 1e-4, mode: str = "fd"):
    def deco(build):
        _GRAD_CHECKS[name] = (build, threshold, mode)
        return build

    return deco


def registered_ops() -> list[str]:
    return sorted(_GRAD_CHECKS)


def _scalar(fn, params) -> float:
    out = fn(params)
    out = out.value if isinstance(out, Var) else out
    return float(np.asarray(out).reshape(()))


def grad_check(op_name: str, trials: int = 10, eps: float = 1e-5,
               seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Runs ``trials`` random instances of the registered op in float64 and
    reports the worst relative error, defined as
    ``max|a - n| / max(max|a|, max|n|, 1e-6)``.  For the round-trip entry the
    reported quantity is the largest analytic gradient magnitude, which
    should vanish.
    """
    try:
        build, threshold, mode = _GRAD_CHECKS[op_name]
    except KeyError:
        raise KeyError(f"op {op_name!r} is not registered for gradient "
                       f"checking; known ops: {registered_ops()}") from None
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng((seed, trial))
        fn, params = build(rng)
        _, tape = forward_record(lambda pv, _x: fn(pv), params,
                                 np.zeros((1, 1, 1, 1)))
        analytic = backward(tape)
        for name, p in params.items():
            a = analytic[name]
            if mode == "zero":
                worst = max(worst, float(np.abs(a).max()))
                continue
            flat = p.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = _scalar(fn, params)
                flat[i] = orig - eps
                lm = _scalar(fn, params)
                flat[i] = orig
                numeric[i] = (lp - lm) / (2 * eps)
            numeric = numeric.reshape(p.shape)
            denom = max(float(np.abs(a).max()), float(np.abs(numeric).max()), 1e-6)
            worst = max(worst, float(np.abs(a - numeric).max()) / denom)
    return GradCheckReport(op_name, trials, worst, threshold, worst < threshold)


def _wsum(out, w):
    return sum_all(mul(out, w))


def _away_from(rng, shape, points, margin):
    """Random values kept at least ``margin`` from each kink in ``points``."""
    x = rng.normal(size=shape)
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + margin * np.where(x[close] >= p, 1.5, -1.5)
    return x


@_register("conv2d_1x1")
def _build_conv1(rng):
    x = rng.normal(size=(1, 4, 5, 7))
    w = rng.normal(size=(3, 4, 1, 1))
    b = rng.normal(size=3)
    wt = rng.normal(size=(1, 3, 5, 7))
    return (lambda p: _wsum(conv2d(p["x"], p["w"], p["b"]), wt),
            {"x": x, "w": w, "b": b})


@_register("conv2d_3x3")
def _build_conv3(rng):
    x = rng.normal(size=(1, 2, 5, 7))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    wt = rng.normal(size=(1, 3, 5, 7))
    return (lambda p: _wsum(conv2d(p["x"], p["w"], p["b"]), wt),
            {"x": x, "w": w, "b": b})


@_register("bilinear_resize_down")
def _build_resize_down(rng):
    x = rng.normal(size=(1, 2, 6, 7))
    wt = rng.normal(size=(1, 2, 3, 4))
    return lambda p: _wsum(bilinear_resize(p["x"], 3, 4), wt), {"x": x}


@_register("bilinear_resize_up")
def _build_resize_up(rng):
    x = rng.normal(size=(1, 2, 3, 4))
    wt = rng.normal(size=(1, 2, 7, 6))
    return lambda p: _wsum(bilinear_resize(p["x"], 7, 6), wt), {"x": x}


@_register("relu")
def _build_relu(rng):
    # Finite differences straddle the kink, so keep points off zero.
    x = _away_from(rng, (1, 2, 5, 7), (0.0,), 1e-3)
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(relu(p["x"]), wt), {"x": x}


@_register("sigmoid", threshold=1e-6)
def _build_sigmoid(rng):
    x = rng.normal(size=(1, 2, 5, 7))
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(sigmoid(p["x"]), wt), {"x": x}


@_register("add")
def _build_add(rng):
    a = rng.normal(size=(1, 2, 5, 7))
    b = rng.normal(size=(1, 2, 5, 7))
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(add(p["a"], p["b"]), wt), {"a": a, "b": b}


@_register("mul")
def _build_mul(rng):
    a = rng.normal(size=(1, 2, 5, 7))
    b = rng.normal(size=(1, 2, 5, 7))
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(mul(p["a"], p["b"]), wt), {"a": a, "b": b}


@_register("div")
def _build_div(rng):
    a = rng.normal(size=(1, 2, 5, 7))
    # Keep the denominator away from zero so finite differences stay sane.
    b = rng.uniform(0.5, 2.0, size=(1, 2, 5, 7)) * np.where(
        rng.random((1, 2, 5, 7)) < 0.5, -1.0, 1.0)
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(div(p["a"], p["b"]), wt), {"a": a, "b": b}


@_register("concat_split")
def _build_concat_split(rng):
    x = rng.normal(size=(1, 4, 5, 7))
    wts = [rng.normal(size=(1, 1, 5, 7)) for _ in range(4)]
    wt = rng.normal(size=(1, 4, 5, 7))

    def fn(p):
        parts = split_channels(p["x"], 4)
        parts = [mul(part, w) for part, w in zip(parts, wts)]
        return _wsum(concat_channels(parts), wt)

    return fn, {"x": x}


@_register("clamp01")
def _build_clamp(rng):
    # Mix of in-range and clipped values, kept off the kinks at 0 and 1.
    x = _away_from(rng, (1, 2, 5, 7), (0.0, 1.0), 1e-3)
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(clamp01(p["x"]), wt), {"x": x}


@_register("abs")
def _build_abs(rng):
    x = _away_from(rng, (1, 2, 5, 7), (0.0,), 1e-3)
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(absval(p["x"]), wt), {"x": x}


@_register("scale")
def _build_scale(rng):
    x = rng.normal(size=(1, 2, 5, 7))
    wt = rng.normal(size=(1, 2, 5, 7))
    return lambda p: _wsum(scale(p["x"], 0.37), wt), {"x": x}


@_register("mean")
def _build_mean(rng):
    x = rng.normal(size=(1, 2, 5, 7))
    return lambda p: mean_all(mul(p["x"], p["x"])), {"x": x}


@_register("rfft2")
def _build_rfft2(rng):
    x = rng.normal(size=(1, 2, 5, 7))
    s = T.rfft2(x)
    wm = rng.normal(size=s.magnitude.shape)
    wp = rng.normal(size=s.phase.shape)
    # Phase is singular at zero magnitude and wraps at +-pi; both make the
    # finite-difference probe meaningless, so mask such bins out of the loss.
    wp = wp * (s.magnitude > 0.2) * (np.abs(s.phase) < np.pi - 0.05)

    def fn(p):
        mag, pha = rfft2(p["x"])
        return add(_wsum(mag, wm), _wsum(pha, wp))

    return fn, {"x": x}


@_register("irfft2")
def _build_irfft2(rng):
    mag = rng.normal(size=(1, 2, 5, 4))
    pha = rng.normal(size=(1, 2, 5, 4))
    wt = rng.normal(size=(1, 2, 5, 7))
    return (lambda p: _wsum(irfft2(p["mag"], p["pha"], 5, 7), wt),
            {"mag": mag, "pha": pha})


@_register("rfft2_irfft2_roundtrip", threshold=1e-8, mode="zero")
def _build_roundtrip(rng):
    x = rng.normal(size=(1, 1, 6, 9))

    def fn(p):
        mag, pha = rfft2(p["x"])
        back = irfft2(mag, pha, 6, 9)
        diff = sub(back, p["x"])
        return sum_all(mul(diff, diff))

    return fn, {"x": x}
