"""Ground-truth generators for the auxiliary losses.

Depth targets are a 4x16 grid derived from the renderer's Z-buffer after
cropping away most of the floor and ceiling; classification targets bin each
value into 8 non-uniform bands.  Loop-closure labels mark returns to a
previously visited position after having travelled away in between.  All
functions here are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError

DEPTH_GRID = (4, 16)

# Band edges over normalized depth; band i covers [edge_i, edge_{i+1}), with
# the top band closed at 1.0.
DEPTH_BAND_EDGES = np.array([0.0, 0.05, 0.175, 0.3, 0.425, 0.55, 0.675, 0.8, 1.0])
N_DEPTH_BANDS = 8

# Fraction of rows cropped from the top and bottom before pooling.
CROP_FRACTION = 0.25


@dataclass(frozen=True)
class LoopThresholds:
    """Distance limits for loop-closure labelling, in maze units."""

    near: float = 1.0  # a revisit counts when within this distance
    far: float = 2.0  # ...and some intermediate point was at least this far

    def __post_init__(self):
        if not (self.far > self.near > 0):
            raise ConfigurationError(f"loop thresholds need far > near > 0, got {self}")


def depth_to_bytes(depth_raw: np.ndarray, max_range: float, near: float = 0.1) -> np.ndarray:
    """Projective Z-buffer bytes for renderer distances; the far plane maps to 255.

    Uses the perspective mapping (1/near - 1/d) / (1/near - 1/far), which
    piles values toward 255 the way a hardware depth buffer does; the
    downstream power-10 spread assumes that distribution.
    """
    d = np.maximum(np.asarray(depth_raw, dtype=np.float64), near)
    zbuf = (1.0 / near - 1.0 / d) / (1.0 / near - 1.0 / max_range)
    return np.clip(np.rint(zbuf * 255.0), 0, 255).astype(np.uint8)


def preprocess_depth(depth_bytes: np.ndarray, grid=DEPTH_GRID) -> np.ndarray:
    """Reduce a byte depth image to a ``grid`` of values in [0, 1].

    Crops the top and bottom quarter of rows, average-pools the rest into the
    grid, then maps pooled bytes through (b/255)**10 to spread the useful
    range.  The far plane (byte 255) maps to exactly 1.0.
    """
    img = np.asarray(depth_bytes, dtype=np.float64)
    if img.ndim != 2:
        raise ConfigurationError(f"depth image must be 2-D, got shape {img.shape}")
    h, w = img.shape
    top = int(round(h * CROP_FRACTION))
    bot = h - int(round(h * CROP_FRACTION))
    img = img[top:bot]
    rows, cols = grid
    if img.shape[0] < rows or img.shape[1] < cols:
        raise ConfigurationError(f"cropped image {img.shape} smaller than target grid {grid}")
    pooled = _adaptive_mean_pool(img, rows, cols)
    return (pooled / 255.0) ** 10


def _adaptive_mean_pool(img: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Mean-pool with integer bin edges floor(i*n/k), tolerating non-divisible sizes."""
    h, w = img.shape
    redges = np.array([h * i // rows for i in range(rows + 1)])
    cedges = np.array([w * j // cols for j in range(cols + 1)])
    sums = np.add.reduceat(np.add.reduceat(img, redges[:-1], axis=0), cedges[:-1], axis=1)
    counts = np.outer(np.diff(redges), np.diff(cedges))
    return sums / counts


def quantize_depth(d) -> np.ndarray:
    """Map normalized depth in [0, 1] to a band index in {0..7}.

    Band i covers [edge_i, edge_{i+1}); d = 1.0 falls in the top band.
    Accepts scalars or arrays.
    """
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DataError(f"depth value outside [0, 1]: {arr[(arr < 0) | (arr > 1)][:4]}")
    bands = np.searchsorted(DEPTH_BAND_EDGES, arr, side="right") - 1
    bands = np.minimum(bands, N_DEPTH_BANDS - 1)  # d == 1.0 lands in band 7
    return bands if arr.ndim else int(bands)


def loop_closure_labels(trajectory: np.ndarray, thr: LoopThresholds = LoopThresholds()) -> np.ndarray:
    """Binary loop-closure label per step of a 2-D position trajectory.

    Step t is labelled 1 iff some earlier position p_t' lies within
    ``thr.near`` of p_t AND some position strictly between t' and t lies at
    least ``thr.far`` from p_t.  Labels are causal: they depend only on
    positions up to t.
    """
    pts = np.asarray(trajectory, dtype=np.float64)
    n = len(pts)
    labels = np.zeros(n, dtype=np.int8)
    for t in range(2, n):
        d = np.linalg.norm(pts[:t] - pts[t], axis=1)
        # suffix_max[j] = max distance among positions strictly after j (up to t-1)
        suffix_max = np.empty(t)
        suffix_max[t - 1] = -np.inf
        if t >= 2:
            np.maximum.accumulate(d[:0:-1], out=suffix_max[-2::-1])
        if np.any((d <= thr.near) & (suffix_max >= thr.far)):
            labels[t] = 1
    return labels


class LoopLabeller:
    """Incremental loop-closure labelling for a growing trajectory."""

    def __init__(self, thr: LoopThresholds = LoopThresholds()):
        self.thr = thr
        self._pts: list[np.ndarray] = []

    def append(self, p) -> int:
        """Add position p and return the label for this step."""
        p = np.asarray(p, dtype=np.float64)
        t = len(self._pts)
        self._pts.append(p)
        if t < 2:
            return 0
        prev = np.asarray(self._pts[:t])
        d = np.linalg.norm(prev - p, axis=1)
        suffix_max = np.empty(t)
        suffix_max[t - 1] = -np.inf
        np.maximum.accumulate(d[:0:-1], out=suffix_max[-2::-1])
        return int(np.any((d <= self.thr.near) & (suffix_max >= self.thr.far)))

    def reset(self):
        self._pts.clear()


def position_cell(p, layout) -> int:
    """Row-major floor-cell index of a continuous position.

    Inverse of the layout's cell-center lookup; raises if p lies in a wall,
    which the simulator's collision handling makes unreachable.
    """
    x, y = float(p[0]), float(p[1])
    r, c = int(y), int(x)
    grid = layout.grid
    if not (0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]) or grid[r, c]:
        raise DataError(f"position {p} is not inside a floor cell")
    return int(layout.floor_index[r, c])
