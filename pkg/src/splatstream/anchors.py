"""Voxel-aligned anchors and the decoders that predict Gaussian attributes.

Anchors live on a fixed lattice (origin + voxel_size * integer index) and
each owns k Gaussians whose positions come from learnable offsets and whose
appearance is decoded per view from the anchor feature, the normalized
viewing distance, and the viewing direction. Anchors are never deleted; only
their Gaussians are.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput
from .geometry import EPS_SCALE
from .nets import MLP, sigmoid

DEFAULT_FEAT_DIM = 32
DEFAULT_K = 10
DECODER_HIDDEN = 64


@dataclass
class AnchorField:
    """Column store of anchors plus explicit per-level Gaussian ownership."""

    ids: np.ndarray            # (A,) int64
    positions: np.ndarray      # (A, 3) voxel centers
    voxel_index: np.ndarray    # (A, 3) int64 lattice coordinates
    f_hat: np.ndarray          # (A, D_f)
    c_v: np.ndarray            # (A, 3) positive scaling factors
    offsets: np.ndarray        # (A, k, 3)
    dynamic: np.ndarray        # (A,) bool
    voxel_size: float
    origin: np.ndarray
    # anchor id -> level -> list of gaussian ids
    ownership: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.offsets.shape[1]

    def row_of(self, anchor_id: int) -> int:
        rows = np.flatnonzero(self.ids == anchor_id)
        if rows.size != 1:
            raise KeyError(f"unknown anchor id {anchor_id}")
        return int(rows[0])

    def voxel_box(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        lo = self.origin + self.voxel_index[row] * self.voxel_size
        return lo, lo + self.voxel_size

    def anchor_at_point(self, p: np.ndarray) -> int:
        """Anchor id whose voxel contains p, or -1."""
        idx = np.floor((np.asarray(p) - self.origin) / self.voxel_size).astype(np.int64)
        hit = np.flatnonzero((self.voxel_index == idx).all(axis=1))
        return int(self.ids[hit[0]]) if hit.size else -1

    def lattice_lookup(self) -> dict:
        return {tuple(v): int(i) for v, i in zip(self.voxel_index, self.ids)}

    def owned(self, anchor_id: int, level: int) -> list[int]:
        return self.ownership.get(int(anchor_id), {}).get(int(level), [])

    def register(self, anchor_id: int, level: int, gaussian_ids) -> None:
        per = self.ownership.setdefault(int(anchor_id), {})
        per.setdefault(int(level), []).extend(int(g) for g in np.atleast_1d(gaussian_ids))

    def unregister(self, gaussian_ids) -> None:
        drop = {int(g) for g in np.atleast_1d(gaussian_ids)}
        for per in self.ownership.values():
            for lvl in per:
                per[lvl] = [g for g in per[lvl] if g not in drop]

    def rebuild_ownership(self, store) -> None:
        self.ownership = {int(a): {} for a in self.ids}
        for gid, aid, lvl in zip(store.ids, store.anchor_ids, store.levels):
            self.ownership.setdefault(int(aid), {}).setdefault(int(lvl), []).append(int(gid))


def voxelize_points(
    points: np.ndarray,
    voxel_size: float,
    rng: np.random.Generator,
    feat_dim: int = DEFAULT_FEAT_DIM,
    k: int = DEFAULT_K,
    origin=(0.0, 0.0, 0.0),
) -> AnchorField:
    """One anchor per occupied voxel, in sorted lattice order.

    Features start at N(0, 0.01^2), the scaling factor at the voxel size,
    offsets uniform in [-0.5, 0.5]^3. Sorting by voxel index makes the
    result independent of the input point order.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise EmptyInput("no points to voxelize")
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    origin = np.asarray(origin, dtype=np.float64)
    vox = np.floor((points - origin) / voxel_size).astype(np.int64)
    uniq = np.unique(vox, axis=0)
    n = uniq.shape[0]
    centers = origin + (uniq + 0.5) * voxel_size
    return AnchorField(
        ids=np.arange(n, dtype=np.int64),
        positions=centers,
        voxel_index=uniq,
        f_hat=rng.normal(0.0, 0.01, size=(n, feat_dim)),
        c_v=np.full((n, 3), voxel_size, dtype=np.float64),
        offsets=rng.uniform(-0.5, 0.5, size=(n, k, 3)),
        dynamic=np.zeros(n, dtype=bool),
        voxel_size=float(voxel_size),
        origin=origin,
        ownership={int(i): {} for i in range(n)},
    )


def gaussian_positions(field_: AnchorField, rows=None) -> np.ndarray:
    """mu_j = x_v + O_j * c_v per anchor, shape (A, k, 3)."""
    if rows is None:
        rows = slice(None)
    return field_.positions[rows][:, None, :] + field_.offsets[rows] * field_.c_v[rows][:, None, :]


def gaussian_positions_backward(field_: AnchorField, rows, d_mu: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. offsets; d_mu shape (A, k, 3)."""
    if rows is None:
        rows = slice(None)
    return d_mu * field_.c_v[rows][:, None, :]


class AttributeDecoders:
    """Four per-attribute MLPs from (f_hat ++ delta_v ++ d_v) to k outputs.

    Head activations bound the ranges: sigmoid for opacity and color,
    identity-offset normalize for rotations, softplus scaled by c_v (then a
    level clamp when a hierarchy exists) for scales.
    """

    def __init__(self, feat_dim: int, k: int, rng: np.random.Generator,
                 hidden: int = DECODER_HIDDEN):
        self.feat_dim = feat_dim
        self.k = k
        n_in = feat_dim + 4
        self.f_alpha = MLP(n_in, hidden, k, rng)
        self.f_color = MLP(n_in, hidden, 3 * k, rng)
        self.f_quat = MLP(n_in, hidden, 4 * k, rng)
        self.f_scale = MLP(n_in, hidden, 3 * k, rng)

    def nets(self) -> dict[str, MLP]:
        return {
            "alpha": self.f_alpha,
            "color": self.f_color,
            "quat": self.f_quat,
            "scale": self.f_scale,
        }


def decoder_inputs(field_: AnchorField, rows, cam, scene_extent: float) -> np.ndarray:
    """Concatenate (f_hat, normalized distance, unit anchor-to-camera direction)."""
    if rows is None:
        rows = slice(None)
    pos = field_.positions[rows]
    to_cam = cam.center()[None, :] - pos
    dist = np.linalg.norm(to_cam, axis=1)
    direction = to_cam / np.maximum(dist, 1e-12)[:, None]
    return np.concatenate(
        [field_.f_hat[rows], (dist / scene_extent)[:, None], direction], axis=1
    )


def decode_attributes(
    field_: AnchorField,
    rows,
    cam,
    decoders: AttributeDecoders,
    scene_extent: float,
    scale_range: tuple[float, float] | None = None,
):
    """Per-view attributes for every Gaussian of the selected anchors.

    Returns (attrs, cache) where attrs holds alpha (A, k), color (A, k, 3),
    q (A, k, 4) pre-normalization (identity offset applied; the rasterizer
    normalizes), s (A, k, 3). Deterministic for fixed inputs.
    """
    x = decoder_inputs(field_, rows, cam, scene_extent)
    A = x.shape[0]
    k = decoders.k

    raw_a, cache_a = decoders.f_alpha.forward(x)
    raw_c, cache_c = decoders.f_color.forward(x)
    raw_q, cache_q = decoders.f_quat.forward(x)
    raw_s, cache_s = decoders.f_scale.forward(x)

    alpha = sigmoid(raw_a)
    color = sigmoid(raw_c).reshape(A, k, 3)
    q = raw_q.reshape(A, k, 4).copy()
    q[:, :, 0] += 1.0  # identity offset keeps the zero output non-singular
    c_v = (field_.c_v if rows is None else field_.c_v[rows])[:, None, :]
    s_soft = np.log1p(np.exp(np.minimum(raw_s.reshape(A, k, 3), 30.0)))
    s = np.maximum(s_soft * c_v, EPS_SCALE * 10.0)
    clamp_mask = None
    if scale_range is not None:
        lo, hi = scale_range
        clamped = np.clip(s, lo, hi)
        clamp_mask = (clamped == s)
        s = clamped

    attrs = {"alpha": alpha, "color": color, "q": q, "s": s}
    cache = {
        "x": x, "A": A, "k": k,
        "alpha": alpha, "color": color,
        "raw_s": raw_s.reshape(A, k, 3), "c_v": c_v, "s_soft": s_soft,
        "clamp_mask": clamp_mask,
        "mlp": {"alpha": cache_a, "color": cache_c, "quat": cache_q, "scale": cache_s},
    }
    return attrs, cache


def decode_backward(decoders: AttributeDecoders, cache, d_alpha, d_color, d_q, d_s):
    """Chain attribute gradients to decoder weights and anchor features.

    Returns (net_grads, d_f_hat) with net_grads[name] the per-MLP parameter
    gradient dict. d_q is w.r.t. the pre-normalization quaternion.
    """
    A, k = cache["A"], cache["k"]
    alpha = cache["alpha"]
    color = cache["color"]

    d_raw_a = d_alpha * alpha * (1.0 - alpha)
    d_raw_c = (d_color * color * (1.0 - color)).reshape(A, 3 * k)
    d_raw_q = d_q.reshape(A, 4 * k)
    d_s = d_s.copy()
    if cache["clamp_mask"] is not None:
        d_s = d_s * cache["clamp_mask"]
    under_floor = cache["s_soft"] * cache["c_v"] < EPS_SCALE * 10.0
    d_s[under_floor] = 0.0
    d_raw_s = (d_s * cache["c_v"] * sigmoid(cache["raw_s"])).reshape(A, 3 * k)

    net_grads = {}
    d_x = np.zeros_like(cache["x"])
    for name, d_raw in (("alpha", d_raw_a), ("color", d_raw_c),
                        ("quat", d_raw_q), ("scale", d_raw_s)):
        g, dx = decoders.nets()[name].backward(cache["mlp"][name], d_raw)
        net_grads[name] = g
        d_x += dx
    d_f_hat = d_x[:, : decoders.feat_dim]
    return net_grads, d_f_hat


def check_ownership(field_: AnchorField, store) -> bool:
    """Bidirectional ownership audit between the anchor field and the store."""
    listed = {}
    for aid, per in field_.ownership.items():
        for lvl, ids in per.items():
            for g in ids:
                if g in listed:
                    return False
                listed[g] = (aid, lvl)
    if len(listed) != store.n:
        return False
    for gid, aid, lvl in zip(store.ids, store.anchor_ids, store.levels):
        if listed.get(int(gid)) != (int(aid), int(lvl)):
            return False
    return True
