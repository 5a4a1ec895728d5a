"""Small dense networks and the multi-resolution hash encoding.

All forward passes are batched numpy matmuls; every component carries an
explicit backward so gradients can be checked against finite differences.
Parameters live in plain dicts of float64 arrays keyed by name, which is also
the unit the optimizer and the snapshot writer work in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def softplus_grad(x):
    return sigmoid(x)


class MLP:
    """One-hidden-layer ReLU perceptron with manual backprop.

    Weights: W1 (in, hidden), b1 (hidden,), W2 (hidden, out), b2 (out,).
    """

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator,
                 zero_head: bool = False):
        self.n_in, self.n_hidden, self.n_out = n_in, n_hidden, n_out
        lim1 = np.sqrt(6.0 / (n_in + n_hidden))
        lim2 = np.sqrt(6.0 / (n_hidden + n_out))
        self.W1 = rng.uniform(-lim1, lim1, size=(n_in, n_hidden))
        self.b1 = np.zeros(n_hidden)
        if zero_head:
            self.W2 = np.zeros((n_hidden, n_out))
        else:
            self.W2 = rng.uniform(-lim2, lim2, size=(n_hidden, n_out))
        self.b2 = np.zeros(n_out)

    def forward(self, x: np.ndarray):
        """x: (N, n_in) -> (out (N, n_out), cache)."""
        z1 = x @ self.W1 + self.b1
        a1 = np.maximum(z1, 0.0)
        out = a1 @ self.W2 + self.b2
        return out, (x, z1, a1)

    def backward(self, cache, dout: np.ndarray):
        """Gradients for (params dict, input). dout: (N, n_out)."""
        x, z1, a1 = cache
        grads = {
            "W2": a1.T @ dout,
            "b2": dout.sum(axis=0),
        }
        da1 = dout @ self.W2.T
        dz1 = da1 * (z1 > 0.0)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        dx = dz1 @ self.W1.T
        return grads, dx

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def load(self, params: dict[str, np.ndarray]) -> None:
        self.W1 = np.asarray(params["W1"], dtype=np.float64)
        self.b1 = np.asarray(params["b1"], dtype=np.float64)
        self.W2 = np.asarray(params["W2"], dtype=np.float64)
        self.b2 = np.asarray(params["b2"], dtype=np.float64)


PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)


@dataclass
class HashEncoding:
    """Multi-grid trilinear feature encoding with modular spatial hashing.

    Grid resolutions grow geometrically; each grid owns ``table_size``
    learnable feature rows. Output is the concatenation across grids, so the
    feature dimension is num_grids * feature_dim.
    """

    box_lo: np.ndarray
    box_hi: np.ndarray
    num_grids: int = 8
    base_resolution: int = 16
    growth: float = 1.5
    log2_table_size: int = 14
    feature_dim: int = 2
    table: np.ndarray = field(default=None)  # (num_grids, table_size, feature_dim)
    resolutions: np.ndarray = field(default=None)
    clamped_count: int = 0

    def __post_init__(self):
        self.box_lo = np.asarray(self.box_lo, dtype=np.float64)
        self.box_hi = np.asarray(self.box_hi, dtype=np.float64)
        if self.resolutions is None:
            self.resolutions = np.array(
                [int(self.base_resolution * self.growth**i) for i in range(self.num_grids)],
                dtype=np.int64,
            )
        if np.any(np.diff(self.resolutions) <= 0):
            raise ValueError("grid resolutions must be strictly increasing")
        if self.table is None:
            rng = np.random.default_rng(0)
            self.table = rng.uniform(
                -1e-4, 1e-4, size=(self.num_grids, 2**self.log2_table_size, self.feature_dim)
            )

    @property
    def out_dim(self) -> int:
        return self.num_grids * self.feature_dim

    def _corners(self, mu: np.ndarray):
        """Hashed corner indices and trilinear weights per grid.

        Returns (idx (G, N, 8), w (G, N, 8)); out-of-box inputs are clamped
        and counted.
        """
        mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
        clamped = np.clip(mu, self.box_lo, self.box_hi)
        self.clamped_count += int(np.any(clamped != mu, axis=1).sum())
        u = (clamped - self.box_lo) / (self.box_hi - self.box_lo)

        G, N = self.num_grids, mu.shape[0]
        idx = np.empty((G, N, 8), dtype=np.int64)
        w = np.empty((G, N, 8), dtype=np.float64)
        mask = np.uint64(2**self.log2_table_size - 1)
        for g in range(G):
            res = int(self.resolutions[g])
            x = u * res
            c0 = np.minimum(np.floor(x), res - 1).astype(np.int64)
            f = x - c0
            for corner in range(8):
                off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
                cc = (c0 + off).astype(np.uint64)
                h = (cc[:, 0] * PRIMES[0]) ^ (cc[:, 1] * PRIMES[1]) ^ (cc[:, 2] * PRIMES[2])
                idx[g, :, corner] = (h & mask).astype(np.int64)
                wx = f[:, 0] if off[0] else 1.0 - f[:, 0]
                wy = f[:, 1] if off[1] else 1.0 - f[:, 1]
                wz = f[:, 2] if off[2] else 1.0 - f[:, 2]
                w[g, :, corner] = wx * wy * wz
        return idx, w

    def forward(self, mu: np.ndarray):
        """mu: (N, 3) -> (features (N, out_dim), cache)."""
        idx, w = self._corners(mu)
        G, N = idx.shape[0], idx.shape[1]
        feats = np.empty((N, G, self.feature_dim), dtype=np.float64)
        for g in range(G):
            corner_feats = self.table[g][idx[g]]            # (N, 8, F)
            feats[:, g, :] = (corner_feats * w[g][:, :, None]).sum(axis=1)
        return feats.reshape(N, -1), (idx, w)

    def backward(self, cache, dfeat: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the table; dfeat: (N, out_dim)."""
        idx, w = cache
        G, N = idx.shape[0], idx.shape[1]
        dfeat = dfeat.reshape(N, G, self.feature_dim)
        dtable = np.zeros_like(self.table)
        for g in range(G):
            contrib = w[g][:, :, None] * dfeat[:, g, :][:, None, :]   # (N, 8, F)
            np.add.at(dtable[g], idx[g].ravel(), contrib.reshape(-1, self.feature_dim))
        return dtable


@dataclass
class DeformNets:
    """Per-level deformation pair: geometry MLP on hash features, appearance MLP.

    The geometry head is zero-initialized so the first prediction is an exact
    identity: delta_mu = 0 and delta_q = 0, which the identity-offset rule
    turns into the unit quaternion. Appearance runs in logit space as a
    residual, so zero weights preserve color and opacity.
    """

    mlp_g: MLP
    mlp_a: MLP

    @staticmethod
    def create(hash_dim: int, hidden: int, rng: np.random.Generator) -> "DeformNets":
        return DeformNets(
            mlp_g=MLP(hash_dim, hidden, 7, rng, zero_head=True),
            mlp_a=MLP(4, hidden, 4, rng, zero_head=True),
        )

    def reset_heads(self) -> None:
        self.mlp_g.W2[:] = 0.0
        self.mlp_g.b2[:] = 0.0
        self.mlp_a.W2[:] = 0.0
        self.mlp_a.b2[:] = 0.0
