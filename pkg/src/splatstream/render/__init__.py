"""Deterministic splat renderer: per-level, fused masked, reference compositor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UnsortedContributions
from ..store import GaussianStore
from .raster import RenderOutput, Tape, backward, render_arrays

__all__ = [
    "SplatContribution",
    "RenderOutput",
    "Tape",
    "composite_pixel",
    "render_arrays",
    "backward",
    "render_level",
    "render_fused",
]


@dataclass(frozen=True)
class SplatContribution:
    """One Gaussian's pre-evaluated contribution at a single pixel."""

    gaussian_id: int
    mean2d: np.ndarray
    cov2d_inv: np.ndarray
    depth: float
    alpha: float
    color: np.ndarray
    mask_sigma: float = 1.0


def composite_pixel(
    contribs: list[SplatContribution],
    background: np.ndarray,
    pixel: np.ndarray | None = None,
    debug: bool = False,
) -> np.ndarray:
    """Reference front-to-back compositor for one pixel.

    ``contribs`` must be sorted near to far. If ``pixel`` is given the 2D
    Gaussian is evaluated at it, otherwise each contribution counts at full
    density. This is the slow oracle the tile kernels are checked against.
    """
    bg = np.asarray(background, dtype=np.float64)
    if debug:
        depths = [c.depth for c in contribs]
        if any(b < a for a, b in zip(depths, depths[1:])):
            raise UnsortedContributions("contributions are not sorted near-to-far")
    out = np.zeros(3)
    t_cur = 1.0
    for c in contribs:
        g = 1.0
        if pixel is not None:
            d = np.asarray(pixel, dtype=np.float64) - c.mean2d
            g = float(np.exp(-0.5 * d @ np.asarray(c.cov2d_inv) @ d))
        a_eff = min(c.mask_sigma * c.alpha * g, 0.999)
        if a_eff < 1e-4:
            continue
        out += np.asarray(c.color, dtype=np.float64) * a_eff * t_cur
        t_cur *= 1.0 - a_eff
        if t_cur < 1e-4:
            break
    return out + bg * t_cur


def render_level(
    store: GaussianStore,
    level,
    cam,
    with_grad: bool = False,
    background=(0.0, 0.0, 0.0),
) -> RenderOutput:
    """Render one scale level's Gaussians at its resolution, unmasked blending."""
    rows = store.level_rows(level.l)
    cam_l = cam.scaled(level.res_factor) if level.res_factor != 1.0 else cam
    out = render_arrays(
        store.mu[rows], store.q[rows], store.s[rows], store.alpha[rows],
        store.color[rows], None, cam_l, with_grad=with_grad, background=background,
    )
    if out.tape is not None:
        out.tape.rows = rows
    return out


def render_fused(
    store: GaussianStore,
    levels,
    cam,
    with_grad: bool = False,
    background=(0.0, 0.0, 0.0),
    masked: bool = True,
) -> RenderOutput:
    """Full-resolution composite of every active level, masked blending."""
    active = {lvl.l for lvl in levels if lvl.active}
    rows = np.flatnonzero(np.isin(store.levels, list(active)))
    out = render_arrays(
        store.mu[rows], store.q[rows], store.s[rows], store.alpha[rows],
        store.color[rows], store.mask_logit[rows] if masked else None,
        cam, with_grad=with_grad, background=background,
    )
    if out.tape is not None:
        out.tape.rows = rows
    return out
