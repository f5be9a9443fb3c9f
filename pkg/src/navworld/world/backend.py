"""Render backend selection.

The compiled core is used when its extension imported cleanly; setting
NAVWORLD_PURE_PYTHON=1 forces the numpy fallback.  Both expose the same
``render_frame`` and produce identical output.
"""
from __future__ import annotations

import os

from . import render_numpy

if os.environ.get("NAVWORLD_PURE_PYTHON", "") not in ("", "0"):
    _impl = render_numpy
else:
    try:
        from . import _render_core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = render_numpy


def backend_name() -> str:
    return "compiled" if _impl is not render_numpy else "numpy"


def get_backend(name: str | None = None):
    """Return the render module for ``name`` ("compiled", "numpy", or None for the default)."""
    if name in (None, "auto"):
        return _impl
    if name == "numpy":
        return render_numpy
    if name == "compiled":
        from . import _render_core

        return _render_core
    raise ValueError(f"unknown render backend {name!r}")


render_frame = _impl.render_frame
default_fov = _impl.default_fov
