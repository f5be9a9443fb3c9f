"""Reverse-mode differentiation on a flat tape.

Covers exactly the primitives the agent networks need: dense layers, valid
convolution, LSTM cells, pointwise nonlinearities and the policy/value/aux
losses.  Everything is single-sample (no batch axis); sequences are handled
by replaying the cell ops step by step on one tape.

A ``Tensor`` is a thin wrapper around an ndarray.  Leaves that should
accumulate gradients (parameters, or any input a test cares about) carry a
preallocated ``grad`` array; ``backward`` adds into it, so repeated calls
accumulate until the caller clears the buffer.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, DataError


class Tensor:
    __slots__ = ("data", "grad")

    def __init__(self, data, grad: np.ndarray | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of executed ops; replayed in reverse by ``backward``."""

    __slots__ = ("entries", "produced")

    def __init__(self):
        self.entries: list[tuple[tuple[Tensor, ...], tuple[Tensor, ...], Callable]] = []
        self.produced: set[int] = set()

    def record(self, outputs: tuple[Tensor, ...], inputs: tuple[Tensor, ...], bwd: Callable):
        self.entries.append((outputs, inputs, bwd))
        for o in outputs:
            self.produced.add(id(o))

    def needs(self, t: Tensor) -> bool:
        """Whether a gradient for ``t`` can matter: it is a leaf accumulator or
        was produced by an earlier op on this tape (so has upstream inputs)."""
        return t.grad is not None or id(t) in self.produced

    def clear(self):
        self.entries.clear()
        self.produced.clear()

    def __len__(self):
        return len(self.entries)


def backward(tape: Tape | None, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf tensor carrying a grad buffer.

    Gradients add across calls; an empty tape is a no-op.  Cotangents for
    intermediate tensors live only for the duration of the walk.  Leaf
    tensors (anything carrying a grad buffer) accumulate in place as soon as
    contributions arrive.
    """
    if tape is None or not tape.entries:
        return
    # cotangent per intermediate tensor id: [array, owned] where owned means
    # the array is private to this walk and may be mutated in place
    cot: dict[int, list] = {id(loss): [np.ones_like(loss.data), True]}
    for outputs, inputs, bwd in reversed(tape.entries):
        if len(outputs) == 1:
            got = cot.pop(id(outputs[0]), None)
            if got is None:
                continue
            gins = bwd(got[0])
        else:
            gots = [cot.pop(id(o), None) for o in outputs]
            if all(g is None for g in gots):
                continue
            gins = bwd(tuple(None if g is None else g[0] for g in gots))
        for t, g in zip(inputs, gins):
            if g is None:
                continue
            if t.grad is not None:
                t.grad += g.reshape(t.grad.shape)
                continue
            k = id(t)
            got = cot.get(k)
            if got is None:
                # g may alias the producer's cotangent (views from reshape,
                # concat, fan-out from add), so it is not owned yet
                cot[k] = [g, False]
            elif got[1]:
                got[0] += g
            else:
                cot[k] = [got[0] + g, True]


# ---------------------------------------------------------------------------
# primitives


def _rec(tape, outputs, inputs, bwd):
    if tape is not None:
        tape.record(outputs, inputs, bwd)


def linear(tape: Tape | None, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = W x + b for a 1-D input."""
    if w.data.ndim != 2 or x.data.ndim != 1:
        raise ConfigurationError(f"linear expects 2-D weights and 1-D input, got {w.shape} @ {x.shape}")
    n_out, n_in = w.data.shape
    if x.data.shape[0] != n_in or b.data.shape != (n_out,):
        raise ConfigurationError(f"linear shape mismatch: W {w.shape}, x {x.shape}, b {b.shape}")
    y = Tensor(w.data @ x.data + b.data)
    if tape is None:
        return y
    xd, wd = x.data, w.data
    x_needs = tape.needs(x)

    def bwd(gy):
        gx = wd.T @ gy if x_needs else None
        return gx, gy[:, None] * xd, gy.copy()

    tape.record((y,), (x, w, b), bwd)
    return y


def conv2d(tape: Tape | None, x: Tensor, k: Tensor, b: Tensor, stride: int) -> Tensor:
    """Valid (unpadded) 2-D convolution of a (C,H,W) input with (C2,C,kh,kw) kernels."""
    c_in, h, w = x.data.shape
    c_out, ck, kh, kw = k.data.shape
    if ck != c_in:
        raise ConfigurationError(f"conv2d channel mismatch: input {c_in}, kernels expect {ck}")
    if kh > h or kw > w:
        raise ConfigurationError(f"conv2d kernel {kh}x{kw} larger than input {h}x{w}")
    h2 = (h - kh) // stride + 1
    w2 = (w - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    colm = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c_in * kh * kw, h2 * w2)
    kmat = k.data.reshape(c_out, -1)
    y = Tensor((kmat @ colm + b.data[:, None]).reshape(c_out, h2, w2))
    if tape is None:
        return y
    x_needs = tape.needs(x)

    def bwd(gy):
        gyf = gy.reshape(c_out, -1)
        gk = (gyf @ colm.T).reshape(k.data.shape)
        gb = gyf.sum(axis=1)
        if not x_needs:
            return None, gk, gb
        gcol = (kmat.T @ gyf).reshape(c_in, kh, kw, h2, w2)
        gx = np.zeros((c_in, h, w), dtype=gy.dtype)
        for di in range(kh):
            for dj in range(kw):
                gx[:, di : di + stride * h2 : stride, dj : dj + stride * w2 : stride] += gcol[:, di, dj]
        return gx, gk, gb

    tape.record((y,), (x, k, b), bwd)
    return y


def lstm_cell(
    tape: Tape | None, x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor
) -> tuple[Tensor, Tensor]:
    """One step of a forget-gate LSTM; gate order in the packed weights is (i, f, g, o)."""
    width = h.data.shape[0]
    if c.data.shape[0] != width:
        raise ConfigurationError(f"lstm state width mismatch: h {width}, c {c.data.shape[0]}")
    if wx.data.shape[0] != 4 * width or wh.data.shape != (4 * width, width):
        raise ConfigurationError(f"lstm weight shapes {wx.shape}/{wh.shape} do not match width {width}")
    z = wx.data @ x.data + wh.data @ h.data + b.data
    i = _sig(z[:width])
    f = _sig(z[width : 2 * width])
    g = np.tanh(z[2 * width : 3 * width])
    o = _sig(z[3 * width :])
    c2d = f * c.data + i * g
    tc2 = np.tanh(c2d)
    h2 = Tensor(o * tc2)
    c2 = Tensor(c2d)
    if tape is None:
        return h2, c2
    xd, hd, cd = x.data, h.data, c.data
    wxd, whd = wx.data, wh.data
    x_needs = tape.needs(x)
    h_needs = tape.needs(h)
    c_needs = tape.needs(c)

    def bwd(gouts):
        gh2, gc2 = gouts
        if gh2 is None:
            gh2 = np.zeros_like(tc2)
        go = gh2 * tc2
        gc = gh2 * o * (1.0 - tc2 * tc2)
        if gc2 is not None:
            gc = gc + gc2
        dz = np.concatenate(
            [
                gc * g * i * (1.0 - i),
                gc * cd * f * (1.0 - f),
                gc * i * (1.0 - g * g),
                go * o * (1.0 - o),
            ]
        )
        return (
            wxd.T @ dz if x_needs else None,
            whd.T @ dz if h_needs else None,
            gc * f if c_needs else None,
            dz[:, None] * xd,
            dz[:, None] * hd,
            dz,
        )

    tape.record((h2, c2), (x, h, c, wx, wh, b), bwd)
    return h2, c2


def _sig(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(tape: Tape | None, x: Tensor) -> Tensor:
    y = Tensor(np.maximum(x.data, 0))
    mask = x.data > 0

    def bwd(gy):
        return (gy * mask,)

    _rec(tape, (y,), (x,), bwd)
    return y


def sigmoid(tape: Tape | None, x: Tensor) -> Tensor:
    yd = _sig(x.data)
    y = Tensor(yd)

    def bwd(gy):
        return (gy * yd * (1.0 - yd),)

    _rec(tape, (y,), (x,), bwd)
    return y


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    yd = np.tanh(x.data)
    y = Tensor(yd)

    def bwd(gy):
        return (gy * (1.0 - yd * yd),)

    _rec(tape, (y,), (x,), bwd)
    return y


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def softmax(tape: Tape | None, x: Tensor) -> Tensor:
    """Softmax over the final axis, stabilized by max subtraction."""
    p = np.exp(_log_softmax(x.data))
    y = Tensor(p)

    def bwd(gy):
        dot = (gy * p).sum(axis=-1, keepdims=True)
        return (p * (gy - dot),)

    _rec(tape, (y,), (x,), bwd)
    return y


def log_softmax(tape: Tape | None, x: Tensor) -> Tensor:
    ls = _log_softmax(x.data)
    y = Tensor(ls)
    p = np.exp(ls)

    def bwd(gy):
        return (gy - p * gy.sum(axis=-1, keepdims=True),)

    _rec(tape, (y,), (x,), bwd)
    return y


def categorical_nll(tape: Tape | None, logits: Tensor, target) -> Tensor:
    """Negative log-likelihood of integer classes under softmax(logits).

    Accepts ``(K,)`` logits with a scalar class index, or ``(N, K)`` logits
    with ``(N,)`` indices, in which case the mean over the N rows is returned.
    """
    z = logits.data
    tgt = np.asarray(target)
    k = z.shape[-1]
    if np.any(tgt < 0) or np.any(tgt >= k):
        raise DataError(f"class index out of range for {k} classes: {tgt}")
    ls = _log_softmax(z)
    if z.ndim == 1:
        val = -ls[int(tgt)]
        n = 1
    else:
        n = z.shape[0]
        val = -ls[np.arange(n), tgt].mean()
    y = Tensor(np.asarray(val, dtype=z.dtype))
    p = np.exp(ls)

    def bwd(gy):
        gz = p.copy()
        if z.ndim == 1:
            gz[int(tgt)] -= 1.0
        else:
            gz[np.arange(n), tgt] -= 1.0
            gz /= n
        return (gz * gy,)

    _rec(tape, (y,), (logits,), bwd)
    return y


def bernoulli_nll(tape: Tape | None, logit: Tensor, label: float) -> Tensor:
    """Binary cross-entropy between sigmoid(logit) and a 0/1 label, computed stably."""
    z = logit.data.item()
    y = Tensor(np.asarray(max(z, 0.0) - z * label + np.log1p(np.exp(-abs(z))), dtype=logit.data.dtype))

    def bwd(gy):
        return (np.asarray(gy * (_sig(np.asarray(z)) - label), dtype=logit.data.dtype).reshape(logit.data.shape),)

    _rec(tape, (y,), (logit,), bwd)
    return y


def mse(tape: Tape | None, pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error against a constant target."""
    t = np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - t
    n = diff.size
    y = Tensor(np.asarray((diff * diff).sum() / n, dtype=pred.data.dtype))

    def bwd(gy):
        return (gy * 2.0 * diff / n,)

    _rec(tape, (y,), (pred,), bwd)
    return y


def policy_entropy(tape: Tape | None, logits: Tensor) -> Tensor:
    """Shannon entropy of softmax(logits); lies in [0, ln K]."""
    ls = _log_softmax(logits.data)
    p = np.exp(ls)
    hval = -(p * ls).sum()
    y = Tensor(np.asarray(hval, dtype=logits.data.dtype))

    def bwd(gy):
        return (-gy * p * (ls + hval),)

    _rec(tape, (y,), (logits,), bwd)
    return y


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    y = Tensor(a.data + b.data)

    def bwd(gy):
        return gy, gy

    _rec(tape, (y,), (a, b), bwd)
    return y


def scale(tape: Tape | None, a: Tensor, s: float) -> Tensor:
    y = Tensor(a.data * s)

    def bwd(gy):
        return (gy * s,)

    _rec(tape, (y,), (a,), bwd)
    return y


def add_n(tape: Tape | None, terms: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors (used to combine per-step loss terms)."""
    if not terms:
        raise ConfigurationError("add_n needs at least one term")
    acc = terms[0].data.copy()
    for t in terms[1:]:
        acc += t.data
    y = Tensor(acc)

    def bwd(gy):
        return tuple(gy for _ in terms)

    _rec(tape, (y,), tuple(terms), bwd)
    return y


def concat(tape: Tape | None, parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    sizes = [p.data.shape[0] for p in parts]
    y = Tensor(np.concatenate([p.data for p in parts]))
    offsets = np.cumsum([0] + sizes)

    def bwd(gy):
        return tuple(gy[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    _rec(tape, (y,), tuple(parts), bwd)
    return y


def reshape(tape: Tape | None, x: Tensor, shape) -> Tensor:
    y = Tensor(x.data.reshape(shape))
    orig = x.data.shape

    def bwd(gy):
        return (gy.reshape(orig),)

    _rec(tape, (y,), (x,), bwd)
    return y


def flatten(tape: Tape | None, x: Tensor) -> Tensor:
    return reshape(tape, x, (-1,))
