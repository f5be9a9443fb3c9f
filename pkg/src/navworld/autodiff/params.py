"""Flat shared parameter storage and the RMSProp update.

All trainable weights of a network live in one contiguous array with named
slices.  Workers read and write it concurrently without locks; element-level
interleavings are accepted as benign races.  Per-worker gradient buffers are
never shared.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError


class ParamVector:
    """A contiguous parameter array with a name -> (offset, shape) registry."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.registry: dict[str, tuple[int, tuple[int, ...]]] = {}
        self.flat: np.ndarray | None = None
        self._next = 0

    def register(self, name: str, shape) -> None:
        if self.flat is not None:
            raise ConfigurationError("cannot register parameters after finalize()")
        if name in self.registry:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        self.registry[name] = (self._next, shape)
        self._next += math.prod(shape)

    def finalize(self) -> None:
        if self.flat is None:
            self.flat = np.zeros(self._next, dtype=self.dtype)

    @property
    def size(self) -> int:
        return self._next

    def view(self, name: str) -> np.ndarray:
        """Writable view of one named slice, shaped per the registry."""
        off, shape = self.registry[name]
        return self.flat[off : off + math.prod(shape)].reshape(shape)

    def names(self):
        return list(self.registry)

    def copy_flat(self) -> np.ndarray:
        return self.flat.copy()


class GradBuffer:
    """Per-worker gradient accumulator aligned with a ParamVector."""

    def __init__(self, pv: ParamVector):
        pv.finalize()
        self._registry = pv.registry
        self.flat = np.zeros(pv.size, dtype=pv.dtype)

    def view(self, name: str) -> np.ndarray:
        off, shape = self._registry[name]
        return self.flat[off : off + math.prod(shape)].reshape(shape)

    def clear(self) -> None:
        self.flat.fill(0.0)

    def global_norm(self) -> float:
        return float(np.sqrt(np.dot(self.flat, self.flat)))

    def clip_global_norm(self, max_norm: float | None) -> float:
        """Rescale in place so the global norm is at most max_norm; returns the
        pre-clip norm.  None or 0 disables clipping."""
        norm = self.global_norm()
        if max_norm and norm > max_norm:
            self.flat *= max_norm / norm
        return norm


class RmsPropState:
    """Mean-square accumulator for RMSProp without momentum or centering."""

    def __init__(self, pv: ParamVector, decay: float = 0.99, epsilon: float = 0.1):
        pv.finalize()
        self.ms = np.zeros(pv.size, dtype=pv.dtype)
        self.decay = float(decay)
        self.epsilon = float(epsilon)


def rmsprop_apply(pv: ParamVector, grads: np.ndarray, state: RmsPropState, lr: float) -> None:
    """ms <- decay*ms + (1-decay)*g^2;  p <- p - lr*g/sqrt(ms+eps), elementwise.

    Operates in place on shared arrays; concurrent callers race benignly.
    """
    if grads.shape != pv.flat.shape:
        raise ConfigurationError(f"gradient length {grads.shape} does not match parameters {pv.flat.shape}")
    ms = state.ms
    np.multiply(ms, state.decay, out=ms)
    ms += (1.0 - state.decay) * np.square(grads)
    pv.flat -= (lr * grads) / np.sqrt(ms + state.epsilon)
