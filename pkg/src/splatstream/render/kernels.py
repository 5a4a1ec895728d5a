"""Tile rasterization inner loops.

These functions are written in njit-compatible style (scalar loops over
pre-allocated arrays) and compiled by numba unless SPLATSTREAM_BACKEND=numpy
selects the interpreted fallback. Forward and backward must stay in exact
agreement: both apply the same skip threshold, opacity clamp, and early exit,
and the backward replays each pixel's contribution list in reverse using the
stored final transmittance and contribution count.
"""

import math

from .._accel import kernel

TILE = 16
ALPHA_SKIP = 1e-4     # contributions below this effective opacity are ignored
ALPHA_CLAMP = 0.999   # upper clamp keeps the backward division stable
T_EARLY_EXIT = 1e-4   # stop compositing once transmittance falls below this


def _fill_tile_entries(tx0, tx1, ty0, ty1, starts, tiles_x, out_tile, out_splat):
    for i in range(tx0.shape[0]):
        pos = starts[i]
        for ty in range(ty0[i], ty1[i] + 1):
            for tx in range(tx0[i], tx1[i] + 1):
                out_tile[pos] = ty * tiles_x + tx
                out_splat[pos] = i
                pos += 1


def _raster_forward(
    means, conics, colors, alphas, masks, depths,
    entries, offsets, tiles_x, height, width, bg,
    image, transm, depth_acc, ncontrib,
):
    n_tiles = offsets.shape[0] - 1
    for tile in range(n_tiles):
        start = offsets[tile]
        end = offsets[tile + 1]
        ty = tile // tiles_x
        tx = tile % tiles_x
        y0 = ty * TILE
        x0 = tx * TILE
        y1 = min(y0 + TILE, height)
        x1 = min(x0 + TILE, width)
        for py in range(y0, y1):
            for px in range(x0, x1):
                t_cur = 1.0
                c0 = 0.0
                c1 = 0.0
                c2 = 0.0
                dacc = 0.0
                n_seen = 0
                for e in range(start, end):
                    i = entries[e]
                    dx = px + 0.5 - means[i, 0]
                    dy = py + 0.5 - means[i, 1]
                    power = -0.5 * (
                        conics[i, 0] * dx * dx
                        + 2.0 * conics[i, 1] * dx * dy
                        + conics[i, 2] * dy * dy
                    )
                    if power > 0.0:
                        n_seen = e - start + 1
                        continue
                    g = math.exp(power)
                    a_eff = masks[i] * alphas[i] * g
                    if a_eff < ALPHA_SKIP:
                        n_seen = e - start + 1
                        continue
                    if a_eff > ALPHA_CLAMP:
                        a_eff = ALPHA_CLAMP
                    w = a_eff * t_cur
                    c0 += colors[i, 0] * w
                    c1 += colors[i, 1] * w
                    c2 += colors[i, 2] * w
                    dacc += depths[i] * w
                    t_cur *= 1.0 - a_eff
                    n_seen = e - start + 1
                    if t_cur < T_EARLY_EXIT:
                        break
                image[py, px, 0] = c0 + bg[0] * t_cur
                image[py, px, 1] = c1 + bg[1] * t_cur
                image[py, px, 2] = c2 + bg[2] * t_cur
                transm[py, px] = t_cur
                depth_acc[py, px] = dacc
                ncontrib[py, px] = n_seen


def _raster_backward(
    means, conics, colors, alphas, masks,
    entries, offsets, tiles_x, height, width, bg,
    transm, ncontrib, d_image,
    d_means, d_conics, d_colors, d_alphas, d_masks,
):
    n_tiles = offsets.shape[0] - 1
    for tile in range(n_tiles):
        start = offsets[tile]
        ty = tile // tiles_x
        tx = tile % tiles_x
        y0 = ty * TILE
        x0 = tx * TILE
        y1 = min(y0 + TILE, height)
        x1 = min(x0 + TILE, width)
        for py in range(y0, y1):
            for px in range(x0, x1):
                n_seen = ncontrib[py, px]
                if n_seen == 0:
                    continue
                dl0 = d_image[py, px, 0]
                dl1 = d_image[py, px, 1]
                dl2 = d_image[py, px, 2]
                if dl0 == 0.0 and dl1 == 0.0 and dl2 == 0.0:
                    continue
                t_after = transm[py, px]
                s0 = t_after * bg[0]
                s1 = t_after * bg[1]
                s2 = t_after * bg[2]
                for e in range(start + n_seen - 1, start - 1, -1):
                    i = entries[e]
                    dx = px + 0.5 - means[i, 0]
                    dy = py + 0.5 - means[i, 1]
                    power = -0.5 * (
                        conics[i, 0] * dx * dx
                        + 2.0 * conics[i, 1] * dx * dy
                        + conics[i, 2] * dy * dy
                    )
                    if power > 0.0:
                        continue
                    g = math.exp(power)
                    a_raw = masks[i] * alphas[i] * g
                    if a_raw < ALPHA_SKIP:
                        continue
                    clamped = a_raw > ALPHA_CLAMP
                    a_eff = ALPHA_CLAMP if clamped else a_raw
                    t_i = t_after / (1.0 - a_eff)
                    w = a_eff * t_i
                    d_colors[i, 0] += dl0 * w
                    d_colors[i, 1] += dl1 * w
                    d_colors[i, 2] += dl2 * w
                    if not clamped:
                        inv = 1.0 / (1.0 - a_eff)
                        da = (
                            dl0 * (t_i * colors[i, 0] - s0 * inv)
                            + dl1 * (t_i * colors[i, 1] - s1 * inv)
                            + dl2 * (t_i * colors[i, 2] - s2 * inv)
                        )
                        d_alphas[i] += da * masks[i] * g
                        d_masks[i] += da * alphas[i] * g
                        dpower = da * masks[i] * alphas[i] * g
                        d_conics[i, 0] += dpower * (-0.5 * dx * dx)
                        d_conics[i, 1] += dpower * (-dx * dy)
                        d_conics[i, 2] += dpower * (-0.5 * dy * dy)
                        gx = dpower * (conics[i, 0] * dx + conics[i, 1] * dy)
                        gy = dpower * (conics[i, 1] * dx + conics[i, 2] * dy)
                        d_means[i, 0] += gx
                        d_means[i, 1] += gy
                    s0 += w * colors[i, 0]
                    s1 += w * colors[i, 1]
                    s2 += w * colors[i, 2]
                    t_after = t_i


fill_tile_entries = kernel(_fill_tile_entries)
raster_forward = kernel(_raster_forward)
raster_backward = kernel(_raster_backward)
