"""Scale hierarchy: binary range partitioning, clamping, thresholds, pyramid.

Level 1 is the coarsest (largest Gaussians, lowest resolution); level L the
finest. Ranges tile the initial [s_min0, s_max0] exactly with shared
endpoints only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadLevelCount, EmptyInput

# fall back to the range midpoint when too few scales to estimate a mean
MIN_SCALES_FOR_MEAN = 10


@dataclass(frozen=True)
class ScaleStats:
    """Scale distribution summary measured from the converged first frame."""

    s_min0: float
    s_max0: float
    s_mean0: float

    def __post_init__(self):
        if not self.s_min0 <= self.s_mean0 <= self.s_max0:
            raise ValueError("require s_min0 <= s_mean0 <= s_max0")


@dataclass
class ScaleLevel:
    l: int
    s_min: float
    s_max: float
    res_factor: float
    tau_add: float
    active: bool = True

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ValueError("require s_min < s_max")


def measure_scale_stats(scales: np.ndarray) -> ScaleStats:
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size == 0:
        raise EmptyInput("no scales to measure")
    return ScaleStats(
        s_min0=float(scales.min()),
        s_max0=float(scales.max()),
        s_mean0=float(scales.mean()),
    )


def threshold_for_level(l: int, base: float) -> float:
    """Gradient threshold base / 4^(l-1); strictly decreasing in l."""
    if l < 1:
        raise BadLevelCount(f"level must be >= 1, got {l}")
    if base <= 0.0:
        raise ValueError("base must be positive")
    return base / 4.0 ** (l - 1)


def partition_scales(
    stats: ScaleStats,
    scales: np.ndarray,
    L: int,
    tau_base: float = 0.01,
) -> list[ScaleLevel]:
    """Recursive binary split of [s_min0, s_max0] into L levels.

    The current range splits at the empirical mean of the scales lying inside
    it; the coarse level keeps the upper half and the recursion continues into
    the lower half. Resolution factors are 2^(l-L), i.e. {1/4, 1/2, 1} for
    L = 3.
    """
    if L < 1:
        raise BadLevelCount(f"level count must be >= 1, got {L}")
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size == 0:
        raise EmptyInput("no scales to partition")

    levels: list[ScaleLevel] = []
    lo, hi = stats.s_min0, stats.s_max0
    for l in range(1, L + 1):
        if l == L:
            s_min, s_max = lo, hi
        else:
            inside = scales[(scales >= lo) & (scales <= hi)]
            if inside.size < MIN_SCALES_FOR_MEAN:
                split = 0.5 * (lo + hi)
            else:
                split = float(inside.mean())
            # degenerate split (all mass at an endpoint) falls back to midpoint
            if not lo < split < hi:
                split = 0.5 * (lo + hi)
            s_min, s_max = split, hi
            hi = split
        levels.append(
            ScaleLevel(
                l=l,
                s_min=s_min,
                s_max=s_max,
                res_factor=2.0 ** (l - L),
                tau_add=threshold_for_level(l, tau_base),
            )
        )
    return levels


def clamp_scale(s: np.ndarray, level: ScaleLevel) -> np.ndarray:
    """Clamp every component into the level's [s_min, s_max]; idempotent."""
    return np.clip(np.asarray(s, dtype=np.float64), level.s_min, level.s_max)


def assign_levels(scales_max_axis: np.ndarray, levels: list[ScaleLevel]) -> np.ndarray:
    """Level index (1-based) per Gaussian keyed by its max-axis scale.

    Shared endpoints go to the coarser level; values outside the initial
    range clamp to the nearest level.
    """
    s = np.asarray(scales_max_axis, dtype=np.float64)
    lvls = sorted(levels, key=lambda v: v.l)
    out = np.full(s.shape, lvls[-1].l, dtype=np.int64)
    claimed = np.zeros(s.shape, dtype=bool)
    for lvl in lvls:
        take = (~claimed) & (s >= lvl.s_min)
        out[take] = lvl.l
        claimed |= take
    return out


def downsample_pyramid(image: np.ndarray, levels: list[ScaleLevel]) -> list[np.ndarray]:
    """Box-filter downsampled copy of ``image`` per level (res_factor order)."""
    return [downsample_box(image, lvl.res_factor) for lvl in levels]


def downsample_box(image: np.ndarray, res_factor: float) -> np.ndarray:
    """Box-filter downsampling by an integer reciprocal factor.

    res_factor = 1 returns the input array unchanged (same object).
    """
    if res_factor == 1.0:
        return image
    k = int(round(1.0 / res_factor))
    if abs(k * res_factor - 1.0) > 1e-9:
        raise ValueError(f"res_factor {res_factor} is not a reciprocal integer")
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape[:2]
    if H % k or W % k:
        pad_h = (-H) % k
        pad_w = (-W) % k
        img = np.pad(img, ((0, pad_h), (0, pad_w)) + ((0, 0),) * (img.ndim - 2), mode="edge")
        H, W = img.shape[:2]
    shape = (H // k, k, W // k, k) + img.shape[2:]
    return img.reshape(shape).mean(axis=(1, 3))
