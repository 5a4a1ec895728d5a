"""Structure-of-arrays container for the Gaussian set of one frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GaussianStore:
    """Column store; rows align across all arrays. Ids are stable and unique."""

    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    anchor_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    levels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    mu: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    q: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    s: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    alpha: np.ndarray = field(default_factory=lambda: np.empty(0))
    color: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    mask_logit: np.ndarray = field(default_factory=lambda: np.empty(0))
    next_id: int = 0

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    def append(self, mu, q, s, alpha, color, anchor_ids, levels, mask_logit) -> np.ndarray:
        """Add rows; returns the newly assigned ids."""
        m = np.atleast_2d(mu).shape[0]
        new_ids = np.arange(self.next_id, self.next_id + m, dtype=np.int64)
        self.next_id += m
        self.ids = np.concatenate([self.ids, new_ids])
        self.anchor_ids = np.concatenate([self.anchor_ids, np.broadcast_to(anchor_ids, (m,)).astype(np.int64)])
        self.levels = np.concatenate([self.levels, np.broadcast_to(levels, (m,)).astype(np.int64)])
        self.mu = np.concatenate([self.mu, np.atleast_2d(np.asarray(mu, dtype=np.float64))])
        self.q = np.concatenate([self.q, np.atleast_2d(np.asarray(q, dtype=np.float64))])
        self.s = np.concatenate([self.s, np.atleast_2d(np.asarray(s, dtype=np.float64))])
        self.alpha = np.concatenate([self.alpha, np.broadcast_to(np.asarray(alpha, dtype=np.float64), (m,))])
        self.color = np.concatenate([self.color, np.atleast_2d(np.asarray(color, dtype=np.float64))])
        self.mask_logit = np.concatenate([self.mask_logit, np.broadcast_to(np.asarray(mask_logit, dtype=np.float64), (m,))])
        return new_ids

    def remove(self, remove_ids: np.ndarray) -> None:
        keep = ~np.isin(self.ids, np.asarray(remove_ids, dtype=np.int64))
        self._take(keep)

    def _take(self, mask_or_index) -> None:
        for name in ("ids", "anchor_ids", "levels", "mu", "q", "s", "alpha", "color", "mask_logit"):
            setattr(self, name, getattr(self, name)[mask_or_index])

    def index_of(self, ids: np.ndarray) -> np.ndarray:
        """Row indices for the given ids (all must exist)."""
        order = np.argsort(self.ids, kind="stable")
        pos = np.searchsorted(self.ids, ids, sorter=order)
        rows = order[pos]
        if not np.array_equal(self.ids[rows], np.asarray(ids)):
            raise KeyError("unknown gaussian id")
        return rows

    def level_rows(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.levels == l)

    def copy(self) -> "GaussianStore":
        out = GaussianStore(next_id=self.next_id)
        for name in ("ids", "anchor_ids", "levels", "mu", "q", "s", "alpha", "color", "mask_logit"):
            setattr(out, name, getattr(self, name).copy())
        return out
