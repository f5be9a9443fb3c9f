# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled raycast render core.

Mirrors render_numpy.py operation for operation: double-precision ray
marching in the same order, integer color math, so outputs are bit-identical
to the fallback.  Built with -ffp-contract=off to keep the float arithmetic
unfused.  The frame loop runs without the GIL so render-heavy worker threads
scale.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport atan, ceil, cos, fabs, floor, sin, tan

cnp.import_array()

cdef double BIG = 1e30
cdef int FOG_STEPS = 24

cdef int FLOOR_R = 96, FLOOR_G = 88, FLOOR_B = 78
cdef int CEIL_R = 58, CEIL_G = 62, CEIL_B = 70

cdef int[6][3] DECAL_COLORS
DECAL_COLORS[0][:] = [235, 60, 50]
DECAL_COLORS[1][:] = [60, 220, 70]
DECAL_COLORS[2][:] = [70, 90, 235]
DECAL_COLORS[3][:] = [230, 220, 50]
DECAL_COLORS[4][:] = [220, 60, 220]
DECAL_COLORS[5][:] = [55, 215, 215]


cdef inline unsigned long long splitmix64(unsigned long long x) nogil:
    cdef unsigned long long z = x + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def default_fov(int img_w, int img_h):
    return 2.0 * atan(img_w / (2.0 * img_h))


def render_frame(grid, face_tex, double px, double py, double heading,
                 int img_h, int img_w, double max_range, fov=None):
    """Render one frame; returns (rgb uint8 (H,W,3), depth float64 (H,W))."""
    cdef double f = 2.0 * atan(img_w / (2.0 * img_h)) if fov is None else float(fov)
    cdef cnp.uint8_t[:, ::1] g = np.ascontiguousarray(grid, dtype=np.uint8)
    cdef cnp.uint16_t[:, :, ::1] ft = np.ascontiguousarray(face_tex, dtype=np.uint16)
    rgb = np.empty((img_h, img_w, 3), dtype=np.uint8)
    depth = np.empty((img_h, img_w), dtype=np.float64)
    cdef cnp.uint8_t[:, :, ::1] rgbv = rgb
    cdef double[:, ::1] depthv = depth
    with nogil:
        _render(g, ft, px, py, heading, img_h, img_w, max_range, f, rgbv, depthv)
    return rgb, depth


cdef void _render(cnp.uint8_t[:, ::1] g, cnp.uint16_t[:, :, ::1] ft,
                  double px, double py, double heading,
                  int img_h, int img_w, double max_range, double fov,
                  cnp.uint8_t[:, :, ::1] rgb, double[:, ::1] depth) nogil:
    cdef int gh = g.shape[0], gw = g.shape[1]
    cdef double dirx = cos(heading), diry = sin(heading)
    cdef double tanh = tan(fov / 2.0)
    cdef double planex = -diry * tanh, planey = dirx * tanh

    cdef int i, y, it, limit, side, face
    cdef long long mapx, mapy, stepx, stepy, my, mx
    cdef double camx, rdx, rdy, deltax, deltay, sidex, sidey
    cdef double perp, wall, u, lineh, ystart_f, yend_f, v, offset, ad, rowdist
    cdef long long ys, ye
    cdef int ui, vi, on, pattern, has_decal, dk
    cdef unsigned long long tex, tex_lo, h64
    cdef long long r0, g0, b0, r1, g1, b1, base_r, base_g, base_b
    cdef long long shade_side, shade_fog, fog, shade_bg

    limit = 4 * (gh + gw)
    for i in range(img_w):
        camx = 2.0 * (i + 0.5) / img_w - 1.0
        rdx = dirx + planex * camx
        rdy = diry + planey * camx
        deltax = BIG if rdx == 0.0 else fabs(1.0 / rdx)
        deltay = BIG if rdy == 0.0 else fabs(1.0 / rdy)
        mapx = <long long>px
        mapy = <long long>py
        if rdx < 0.0:
            stepx = -1
            sidex = (px - mapx) * deltax
        else:
            stepx = 1
            sidex = (mapx + 1.0 - px) * deltax
        if rdy < 0.0:
            stepy = -1
            sidey = (py - mapy) * deltay
        else:
            stepy = 1
            sidey = (mapy + 1.0 - py) * deltay

        side = 0
        for it in range(limit):
            if sidex < sidey:
                sidex += deltax
                mapx += stepx
                side = 0
            else:
                sidey += deltay
                mapy += stepy
                side = 1
            my = mapy
            mx = mapx
            if my < 0: my = 0
            elif my >= gh: my = gh - 1
            if mx < 0: mx = 0
            elif mx >= gw: mx = gw - 1
            if g[my, mx] != 0:
                break

        perp = sidex - deltax if side == 0 else sidey - deltay
        if perp < 1e-6:
            perp = 1e-6
        wall = py + perp * rdy if side == 0 else px + perp * rdx
        u = wall - floor(wall)
        if side == 0:
            face = 3 if stepx > 0 else 1
        else:
            face = 0 if stepy > 0 else 2
        if perp > max_range:
            perp = max_range

        tex = ft[mapy, mapx, face]
        tex_lo = tex & 0x7FFFULL
        h64 = splitmix64(tex_lo)
        r0 = 60 + <long long>(h64 & 0x7FULL)
        g0 = 60 + <long long>((h64 >> 8) & 0x7FULL)
        b0 = 60 + <long long>((h64 >> 16) & 0x7FULL)
        r1 = (r0 * 171) >> 8
        g1 = (g0 * 171) >> 8
        b1 = (b0 * 171) >> 8
        pattern = <int>(tex_lo % 4)
        has_decal = 1 if (tex & 0x8000ULL) != 0 else 0
        dk = <int>(tex_lo % 6)
        shade_side = 208 if face % 2 == 1 else 256
        fog = <long long>(perp * FOG_STEPS / max_range)
        if fog > FOG_STEPS: fog = FOG_STEPS
        shade_fog = 256 - fog * 6

        lineh = img_h / perp
        ystart_f = img_h / 2.0 - lineh / 2.0
        yend_f = img_h / 2.0 + lineh / 2.0
        ys = <long long>ceil(ystart_f - 0.5)
        if ys < 0: ys = 0
        ye = <long long>ceil(yend_f - 0.5)
        if ye > img_h: ye = img_h

        ui = <int>(u * 8.0)
        if ui < 0: ui = 0
        elif ui > 7: ui = 7

        for y in range(img_h):
            if ys <= y < ye:
                v = ((y + 0.5) - ystart_f) / lineh
                vi = <int>(v * 8.0)
                if vi < 0: vi = 0
                elif vi > 7: vi = 7
                if pattern == 0:
                    on = 1 if ((ui + vi) & 1) == 0 else 0
                elif pattern == 1:
                    on = 1 if (ui & 1) == 0 else 0
                elif pattern == 2:
                    on = 1 if (vi & 1) == 0 else 0
                else:
                    on = 1 if ((ui + vi) & 3) != 0 else 0
                if has_decal and 2 <= ui < 6 and 2 <= vi < 6:
                    base_r = DECAL_COLORS[dk][0]
                    base_g = DECAL_COLORS[dk][1]
                    base_b = DECAL_COLORS[dk][2]
                elif on:
                    base_r = r0; base_g = g0; base_b = b0
                else:
                    base_r = r1; base_g = g1; base_b = b1
                rgb[y, i, 0] = <cnp.uint8_t>((((base_r * shade_side) >> 8) * shade_fog) >> 8)
                rgb[y, i, 1] = <cnp.uint8_t>((((base_g * shade_side) >> 8) * shade_fog) >> 8)
                rgb[y, i, 2] = <cnp.uint8_t>((((base_b * shade_side) >> 8) * shade_fog) >> 8)
                depth[y, i] = perp
            else:
                offset = (y + 0.5) - img_h / 2.0
                ad = fabs(offset)
                if ad < 1e-9: ad = 1e-9
                rowdist = img_h * 0.5 / ad
                if rowdist > max_range: rowdist = max_range
                fog = <long long>(rowdist * FOG_STEPS / max_range)
                if fog > FOG_STEPS: fog = FOG_STEPS
                shade_bg = 256 - fog * 6
                if offset > 0:
                    rgb[y, i, 0] = <cnp.uint8_t>((FLOOR_R * shade_bg) >> 8)
                    rgb[y, i, 1] = <cnp.uint8_t>((FLOOR_G * shade_bg) >> 8)
                    rgb[y, i, 2] = <cnp.uint8_t>((FLOOR_B * shade_bg) >> 8)
                else:
                    rgb[y, i, 0] = <cnp.uint8_t>((CEIL_R * shade_bg) >> 8)
                    rgb[y, i, 1] = <cnp.uint8_t>((CEIL_G * shade_bg) >> 8)
                    rgb[y, i, 2] = <cnp.uint8_t>((CEIL_B * shade_bg) >> 8)
                depth[y, i] = rowdist
