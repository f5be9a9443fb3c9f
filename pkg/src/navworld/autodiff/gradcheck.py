"""Finite-difference verification harness for taped networks."""
from __future__ import annotations

import numpy as np

from .params import GradBuffer, ParamVector
from .tensor import Tape, Tensor, backward


def grad_check(build, eps=(1e-5, 1e-4, 1e-3, 3e-3)) -> float:
    """Compare analytic gradients against central finite differences.

    ``build()`` must return ``(pv, gbuf, run)`` where ``run(tape)`` evaluates
    a scalar loss from the current parameter values.  Intended for small
    double-precision networks; cost is two loss evaluations per parameter
    and step size.

    ``eps`` may be a sequence; each parameter is scored by its best step,
    since curvature-limited and roundoff-limited elements need opposite
    extremes.  Returns max over parameters of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    eps_list = [eps] if np.isscalar(eps) else list(eps)
    pv, gbuf, run = build()
    tape = Tape()
    loss = run(tape)
    backward(tape, loss)
    analytic = gbuf.flat.copy()

    flat = pv.flat
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        best = np.inf
        for e in eps_list:
            flat[i] = orig + e
            fp = float(run(None).data)
            flat[i] = orig - e
            fm = float(run(None).data)
            flat[i] = orig
            num = (fp - fm) / (2.0 * e)
            best = min(best, abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), 1e-12))
        worst = max(worst, best)
    return float(worst)


def tensor_grad_check(fn, inputs: list[np.ndarray], eps=1e-4) -> float:
    """Same relative-error measure, for a scalar function of loose arrays.

    ``fn(tape, tensors) -> Tensor`` is differentiated with respect to every
    entry of every input array.  ``eps`` may be a sequence of step sizes, in
    which case each element is scored by its best step (truncation error and
    roundoff error dominate at opposite ends, so one honest step suffices).
    """
    eps_list = [eps] if np.isscalar(eps) else list(eps)
    tensors = [Tensor(a, grad=np.zeros_like(a)) for a in inputs]
    tape = Tape()
    loss = fn(tape, tensors)
    backward(tape, loss)

    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            best = np.inf
            for e in eps_list:
                flat[i] = orig + e
                fp = float(fn(None, tensors).data)
                flat[i] = orig - e
                fm = float(fn(None, tensors).data)
                flat[i] = orig
                num = (fp - fm) / (2.0 * e)
                best = min(best, abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), 1e-12))
            worst = max(worst, best)
    return worst
