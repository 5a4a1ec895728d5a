"""Deterministic software rasterizer over the tile kernels.

Splats are depth-sorted globally with a stable id tiebreak, binned into
16x16 pixel tiles by their 3-sigma screen bounds, and composited front to
back. When ``with_grad`` is set the forward keeps a tape; ``backward``
replays it and returns per-Gaussian parameter gradients aligned with the
input arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoTape
from ..nets import sigmoid
from .kernels import TILE, fill_tile_entries, raster_backward, raster_forward
from .projection import Projection, backward_batch, project_batch


@dataclass
class Tape:
    cam: object
    s: np.ndarray
    mask_logit: np.ndarray | None
    proj: Projection
    order: np.ndarray          # sorted-position -> input row
    means_s: np.ndarray
    conics_s: np.ndarray
    colors_s: np.ndarray
    alphas_s: np.ndarray
    masks_s: np.ndarray
    entries: np.ndarray
    offsets: np.ndarray
    tiles_x: int
    transm: np.ndarray
    ncontrib: np.ndarray
    n_input: int
    bg: np.ndarray = None
    rows: np.ndarray = None  # optional store-row mapping set by callers


@dataclass
class RenderOutput:
    """Rendered color, per-pixel transmittance, weighted mean depth, tape."""

    image: np.ndarray
    transmittance: np.ndarray
    depth: np.ndarray
    tape: Tape | None = None


def _tile_lists(mean2d, radius, height, width, tiles_x, tiles_y):
    n = mean2d.shape[0]
    tx0 = np.clip(np.floor((mean2d[:, 0] - radius) / TILE), 0, tiles_x - 1).astype(np.int64)
    tx1 = np.clip(np.floor((mean2d[:, 0] + radius) / TILE), 0, tiles_x - 1).astype(np.int64)
    ty0 = np.clip(np.floor((mean2d[:, 1] - radius) / TILE), 0, tiles_y - 1).astype(np.int64)
    ty1 = np.clip(np.floor((mean2d[:, 1] + radius) / TILE), 0, tiles_y - 1).astype(np.int64)
    outside = (
        (mean2d[:, 0] + radius < 0.0)
        | (mean2d[:, 0] - radius >= width)
        | (mean2d[:, 1] + radius < 0.0)
        | (mean2d[:, 1] - radius >= height)
    )
    counts = np.where(outside, 0, (tx1 - tx0 + 1) * (ty1 - ty0 + 1))
    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    total = int(starts[-1])
    tile_of = np.empty(total, dtype=np.int64)
    splat_of = np.empty(total, dtype=np.int64)
    if total:
        # zero-count splats get degenerate ranges the fill loop skips
        tx1f = np.where(outside, tx0 - 1, tx1)
        fill_tile_entries(tx0, tx1f, ty0, ty1, starts[:-1], tiles_x, tile_of, splat_of)
        order = np.lexsort((splat_of, tile_of))
        tile_of = tile_of[order]
        splat_of = splat_of[order]
    offsets = np.zeros(tiles_x * tiles_y + 1, dtype=np.int64)
    if total:
        np.cumsum(np.bincount(tile_of, minlength=tiles_x * tiles_y), out=offsets[1:])
    return splat_of, offsets


def render_arrays(
    mu, q, s, alpha, color, mask_logit, cam,
    with_grad: bool = False, background=(0.0, 0.0, 0.0),
) -> RenderOutput:
    """Rasterize one view.

    ``mask_logit`` may be None, meaning every mask sigma is exactly 1
    (plain alpha blending).
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    color = np.ascontiguousarray(color, dtype=np.float64)
    n = mu.shape[0]
    height, width = cam.height, cam.width
    bg = np.asarray(background, dtype=np.float64)

    if mask_logit is None:
        masks = np.ones(n)
    else:
        masks = sigmoid(np.asarray(mask_logit, dtype=np.float64))

    proj = project_batch(mu, q, s, cam)
    live = proj.valid & (masks * alpha >= 1e-5)
    idx = np.flatnonzero(live)
    # global near-to-far order, stable tiebreak on input row
    order = idx[np.lexsort((idx, proj.depth[idx]))]

    means_s = np.ascontiguousarray(proj.mean2d[order])
    conics_s = np.ascontiguousarray(proj.conic[order])
    colors_s = np.ascontiguousarray(color[order])
    alphas_s = np.ascontiguousarray(alpha[order])
    masks_s = np.ascontiguousarray(masks[order])
    depths_s = np.ascontiguousarray(proj.depth[order])
    radius_s = proj.radius[order]

    tiles_x = (width + TILE - 1) // TILE
    tiles_y = (height + TILE - 1) // TILE
    entries, offsets = _tile_lists(means_s, radius_s, height, width, tiles_x, tiles_y)

    image = np.zeros((height, width, 3))
    transm = np.ones((height, width))
    depth_acc = np.zeros((height, width))
    ncontrib = np.zeros((height, width), dtype=np.int64)
    raster_forward(
        means_s, conics_s, colors_s, alphas_s, masks_s, depths_s,
        entries, offsets, tiles_x, height, width, bg,
        image, transm, depth_acc, ncontrib,
    )

    opacity = 1.0 - transm
    depth = np.where(opacity > 1e-6, depth_acc / np.maximum(opacity, 1e-6), 0.0)

    tape = None
    if with_grad:
        tape = Tape(
            cam=cam, s=s, mask_logit=mask_logit, proj=proj, order=order,
            means_s=means_s, conics_s=conics_s, colors_s=colors_s,
            alphas_s=alphas_s, masks_s=masks_s, entries=entries,
            offsets=offsets, tiles_x=tiles_x, transm=transm,
            ncontrib=ncontrib, n_input=n, bg=bg,
        )
    return RenderOutput(image=image, transmittance=transm, depth=depth, tape=tape)


def backward(tape: Tape, d_image: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with image gradient ``d_image``.

    Returns arrays keyed mu, q, s, alpha, color, mask_logit, each aligned
    with the rows passed to render_arrays (zeros for culled rows).
    """
    if tape is None:
        raise NoTape("forward pass was run with with_grad=False")
    cam = tape.cam
    m = tape.order.shape[0]
    d_means = np.zeros((m, 2))
    d_conics = np.zeros((m, 3))
    d_colors = np.zeros((m, 3))
    d_alphas = np.zeros(m)
    d_masks = np.zeros(m)
    raster_backward(
        tape.means_s, tape.conics_s, tape.colors_s, tape.alphas_s, tape.masks_s,
        tape.entries, tape.offsets, tape.tiles_x, cam.height, cam.width, tape.bg,
        tape.transm, tape.ncontrib, np.ascontiguousarray(d_image, dtype=np.float64),
        d_means, d_conics, d_colors, d_alphas, d_masks,
    )

    n = tape.n_input
    full_dmean = np.zeros((n, 2))
    full_dconic = np.zeros((n, 3))
    full_dmean[tape.order] = d_means
    full_dconic[tape.order] = d_conics

    d_mu, d_q, d_s = backward_batch(tape.proj, tape.s, cam, full_dmean, full_dconic)

    grads = {
        "mu": d_mu,
        "q": d_q,
        "s": d_s,
        "alpha": np.zeros(n),
        "color": np.zeros((n, 3)),
    }
    grads["alpha"][tape.order] = d_alphas
    grads["color"][tape.order] = d_colors
    d_mask_sig = np.zeros(n)
    d_mask_sig[tape.order] = d_masks
    if tape.mask_logit is not None:
        sig = sigmoid(np.asarray(tape.mask_logit, dtype=np.float64))
        grads["mask_logit"] = d_mask_sig * sig * (1.0 - sig)
    else:
        grads["mask_logit"] = np.zeros(n)
    return grads
