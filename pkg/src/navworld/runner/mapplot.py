"""Top-down maze maps with trajectory overlays (PNG via Pillow, SVG by hand).

Trajectories are drawn as one polyline per respawn segment: the initial
exploration leg in gray, later legs in rotating colors, goal cell outlined
in red.
"""
from __future__ import annotations

from pathlib import Path

from ..errors import ConfigurationError
from ..world import MazeLayout

SEGMENT_COLORS = ["#666666", "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
WALL = "#30343b"
FLOOR = "#f2efe8"
GOAL = "#d62728"
FRUIT = {"apple": "#e6a817", "strawberry": "#c2185b"}


def split_segments(positions, respawn_steps):
    """Cut a position list into per-respawn legs."""
    cuts = sorted(set(respawn_steps))
    segments = []
    start = 0
    for cut in cuts:
        segments.append(positions[start : cut + 1])
        start = cut + 1
    if start < len(positions):
        segments.append(positions[start:])
    return [seg for seg in segments if len(seg) >= 2]


def render_map(layout: MazeLayout, path, trajectories=None, goal_cell=None, cell_px: int = 28):
    """Draw the layout and optional trajectory legs to a .png or .svg file."""
    path = Path(path)
    segments = trajectories or []
    if path.suffix == ".svg":
        path.write_text(_svg(layout, segments, goal_cell, cell_px))
    elif path.suffix == ".png":
        _png(layout, segments, goal_cell, cell_px, path)
    else:
        raise ConfigurationError(f"unsupported map format {path.suffix!r} (use .png or .svg)")
    return path


def _svg(layout, segments, goal_cell, s):
    h, w = layout.grid.shape
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * s}" height="{h * s}" '
        f'viewBox="0 0 {w * s} {h * s}">',
        f'<rect width="{w * s}" height="{h * s}" fill="{FLOOR}"/>',
    ]
    for r in range(h):
        for c in range(w):
            if layout.grid[r, c]:
                out.append(f'<rect x="{c * s}" y="{r * s}" width="{s}" height="{s}" fill="{WALL}"/>')
    for r, c, kind in layout.fruit:
        out.append(
            f'<circle cx="{(c + 0.5) * s}" cy="{(r + 0.5) * s}" r="{s * 0.18}" fill="{FRUIT[kind]}"/>'
        )
    if goal_cell is not None:
        r, c = goal_cell
        out.append(
            f'<rect x="{c * s + 2}" y="{r * s + 2}" width="{s - 4}" height="{s - 4}" '
            f'fill="none" stroke="{GOAL}" stroke-width="3"/>'
        )
    for i, seg in enumerate(segments):
        color = SEGMENT_COLORS[i % len(SEGMENT_COLORS)]
        pts = " ".join(f"{x * s:.1f},{y * s:.1f}" for x, y in seg)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2" opacity="0.85"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _png(layout, segments, goal_cell, s, path):
    from PIL import Image, ImageDraw

    h, w = layout.grid.shape
    img = Image.new("RGB", (w * s, h * s), FLOOR)
    draw = ImageDraw.Draw(img)
    for r in range(h):
        for c in range(w):
            if layout.grid[r, c]:
                draw.rectangle([c * s, r * s, (c + 1) * s - 1, (r + 1) * s - 1], fill=WALL)
    for r, c, kind in layout.fruit:
        cx, cy, rad = (c + 0.5) * s, (r + 0.5) * s, s * 0.18
        draw.ellipse([cx - rad, cy - rad, cx + rad, cy + rad], fill=FRUIT[kind])
    if goal_cell is not None:
        r, c = goal_cell
        draw.rectangle([c * s + 2, r * s + 2, (c + 1) * s - 3, (r + 1) * s - 3], outline=GOAL, width=3)
    for i, seg in enumerate(segments):
        color = SEGMENT_COLORS[i % len(SEGMENT_COLORS)]
        pts = [(x * s, y * s) for x, y in seg]
        draw.line(pts, fill=color, width=2)
    img.save(path)
