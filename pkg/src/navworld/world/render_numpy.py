"""Pure-numpy raycast renderer; the fallback for the compiled core.

Both backends implement exactly the same arithmetic (double-precision ray
marching, integer color math), so their outputs agree bit-for-bit; the
compiled extension is just faster.  The algorithm is the classic grid DDA:
one ray per pixel column, perpendicular (fisheye-corrected) wall distances,
procedural face textures, and analytic floor/ceiling distances per row.
"""
from __future__ import annotations

import math

import numpy as np

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_BIG = 1e30

FLOOR_RGB = (96, 88, 78)
CEIL_RGB = (58, 62, 70)
DECAL_COLORS = np.array(
    [(235, 60, 50), (60, 220, 70), (70, 90, 235), (230, 220, 50), (220, 60, 220), (55, 215, 215)],
    dtype=np.int64,
)
FOG_STEPS = 24


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)) & _M64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
    return z ^ (z >> np.uint64(31))


def default_fov(img_w: int, img_h: int) -> float:
    """Horizontal field of view giving square pixels for the fixed vertical focal length."""
    return 2.0 * math.atan(img_w / (2.0 * img_h))


def cast_rays(grid: np.ndarray, px: float, py: float, heading: float, n_cols: int, fov: float):
    """March one ray per column; returns (perp distance, map row, map col, face, u).

    Faces are 0=north(-y), 1=east(+x), 2=south(+y), 3=west(-x) of the hit
    wall cell; u is the texture coordinate along the face in [0, 1).  The
    returned distance is perpendicular to the camera plane, so a flat wall
    viewed square-on has constant distance across columns.
    """
    cam = 2.0 * (np.arange(n_cols) + 0.5) / n_cols - 1.0
    dirx, diry = math.cos(heading), math.sin(heading)
    tanh = math.tan(fov / 2.0)
    planex, planey = -diry * tanh, dirx * tanh
    rdx = dirx + planex * cam
    rdy = diry + planey * cam

    zero_x = rdx == 0.0
    zero_y = rdy == 0.0
    deltax = np.where(zero_x, _BIG, np.abs(1.0 / np.where(zero_x, 1.0, rdx)))
    deltay = np.where(zero_y, _BIG, np.abs(1.0 / np.where(zero_y, 1.0, rdy)))
    mapx = np.full(n_cols, int(px), dtype=np.int64)
    mapy = np.full(n_cols, int(py), dtype=np.int64)
    stepx = np.where(rdx < 0.0, -1, 1)
    stepy = np.where(rdy < 0.0, -1, 1)
    sidex = np.where(rdx < 0.0, (px - mapx) * deltax, (mapx + 1.0 - px) * deltax)
    sidey = np.where(rdy < 0.0, (py - mapy) * deltay, (mapy + 1.0 - py) * deltay)

    side = np.zeros(n_cols, dtype=np.uint8)
    hit = np.zeros(n_cols, dtype=bool)
    limit = 4 * (grid.shape[0] + grid.shape[1])
    for _ in range(limit):
        take_x = ~hit & (sidex < sidey)
        take_y = ~hit & ~take_x
        sidex[take_x] += deltax[take_x]
        mapx[take_x] += stepx[take_x]
        side[take_x] = 0
        sidey[take_y] += deltay[take_y]
        mapy[take_y] += stepy[take_y]
        side[take_y] = 1
        hit |= grid[np.clip(mapy, 0, grid.shape[0] - 1), np.clip(mapx, 0, grid.shape[1] - 1)] != 0
        if hit.all():
            break

    perp = np.where(side == 0, sidex - deltax, sidey - deltay)
    perp = np.maximum(perp, 1e-6)
    wall = np.where(side == 0, py + perp * rdy, px + perp * rdx)
    u = wall - np.floor(wall)
    face = np.where(side == 0, np.where(stepx > 0, 3, 1), np.where(stepy > 0, 0, 2))
    return perp, mapy, mapx, face.astype(np.int64), u


def render_frame(
    grid: np.ndarray,
    face_tex: np.ndarray,
    px: float,
    py: float,
    heading: float,
    img_h: int,
    img_w: int,
    max_range: float,
    fov: float | None = None,
):
    """Render one frame; returns (rgb uint8 (H,W,3), depth float64 (H,W))."""
    if fov is None:
        fov = default_fov(img_w, img_h)
    perp, mapy, mapx, face, u = cast_rays(grid, px, py, heading, img_w, fov)
    perp = np.minimum(perp, max_range)
    tex = face_tex[mapy, mapx, face].astype(np.uint64)

    # Per-column color ingredients.  All color math is integer so the two
    # backends can agree exactly.
    tex_lo = tex & np.uint64(0x7FFF)
    h64 = _splitmix64(tex_lo)
    r0 = 60 + (h64 & np.uint64(0x7F)).astype(np.int64)
    g0 = 60 + ((h64 >> np.uint64(8)) & np.uint64(0x7F)).astype(np.int64)
    b0 = 60 + ((h64 >> np.uint64(16)) & np.uint64(0x7F)).astype(np.int64)
    r1, g1, b1 = (r0 * 171) >> 8, (g0 * 171) >> 8, (b0 * 171) >> 8
    pattern = (tex_lo % np.uint64(4)).astype(np.int64)
    has_decal = (tex & np.uint64(0x8000)) != 0
    decal_rgb = DECAL_COLORS[(tex_lo % np.uint64(6)).astype(np.int64)]
    shade_side = np.where(face % 2 == 1, 208, 256)  # east/west faces slightly darker
    fog_wall = np.minimum((perp * FOG_STEPS / max_range).astype(np.int64), FOG_STEPS)
    shade_fog = 256 - fog_wall * 6

    lineh = img_h / perp
    ystart_f = img_h / 2.0 - lineh / 2.0
    yend_f = img_h / 2.0 + lineh / 2.0
    ys = np.maximum(np.ceil(ystart_f - 0.5).astype(np.int64), 0)
    ye = np.minimum(np.ceil(yend_f - 0.5).astype(np.int64), img_h)

    yy = np.arange(img_h).reshape(-1, 1)
    centers = yy + 0.5
    wall_mask = (yy >= ys) & (yy < ye)

    v = (centers - ystart_f) / lineh
    vi = np.clip((v * 8.0).astype(np.int64), 0, 7)
    ui = np.clip((u * 8.0).astype(np.int64), 0, 7).reshape(1, -1)
    uib = np.broadcast_to(ui, (img_h, img_w))
    pat = np.broadcast_to(pattern.reshape(1, -1), (img_h, img_w))
    on = np.where(
        pat == 0,
        ((uib + vi) & 1) == 0,
        np.where(pat == 1, (uib & 1) == 0, np.where(pat == 2, (vi & 1) == 0, ((uib + vi) & 3) != 0)),
    )
    in_decal = has_decal.reshape(1, -1) & (uib >= 2) & (uib < 6) & (vi >= 2) & (vi < 6)

    rgb = np.empty((img_h, img_w, 3), dtype=np.uint8)
    channels = (
        (r0, r1, decal_rgb[:, 0], FLOOR_RGB[0], CEIL_RGB[0]),
        (g0, g1, decal_rgb[:, 1], FLOOR_RGB[1], CEIL_RGB[1]),
        (b0, b1, decal_rgb[:, 2], FLOOR_RGB[2], CEIL_RGB[2]),
    )

    # floor/ceiling: analytic perpendicular distance per row
    offset = centers - img_h / 2.0
    below = offset > 0
    denom = np.maximum(np.abs(offset), 1e-9)
    rowdist = np.minimum(img_h * 0.5 / denom, max_range)
    fog_bg = np.minimum((rowdist * FOG_STEPS / max_range).astype(np.int64), FOG_STEPS)
    shade_bg = 256 - fog_bg * 6

    for ch, (c_on, c_off, c_decal, flo, cei) in enumerate(channels):
        base = np.where(on, c_on.reshape(1, -1), c_off.reshape(1, -1))
        base = np.where(in_decal, c_decal.reshape(1, -1), base)
        shaded = (((base * shade_side.reshape(1, -1)) >> 8) * shade_fog.reshape(1, -1)) >> 8
        bgval = (np.where(below, flo, cei) * shade_bg) >> 8
        rgb[:, :, ch] = np.where(wall_mask, shaded, np.broadcast_to(bgval, (img_h, img_w))).astype(np.uint8)

    depth = np.where(wall_mask, perp.reshape(1, -1), np.broadcast_to(rowdist, (img_h, img_w)))
    return rgb, depth
