"""Value types and exact math for 3D Gaussians, quaternions, and pinhole cameras.

Everything here is pure: immutable inputs, no hidden state, safe to call from
any thread. Scales are stored in linear space; ``EPS_SCALE`` floors
degeneracy and ``Z_NEAR`` culls primitives behind the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateCovariance,
    NotNormalized,
    ZeroQuaternion,
)

EPS_SCALE = 1e-6
Z_NEAR = 0.01
COV2D_DILATION = 0.3  # px^2 added to the 2D covariance diagonal before inversion


# ---------------------------------------------------------------------------
# array-level quaternion helpers (w, x, y, z layout; batched on leading axes)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q / |q|, rejecting (near) zero quaternions."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ZeroQuaternion("cannot normalize a zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) -> rotation matrix/matrices, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@dataclass(frozen=True)
class Quaternion:
    """Unit-capable rotation quaternion in (w, x, y, z) order."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(q: np.ndarray) -> "Quaternion":
        return Quaternion(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        h = 0.5 * angle
        s = np.sin(h)
        return Quaternion(float(np.cos(h)), *(s * axis))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def normalized(self) -> "Quaternion":
        return Quaternion.from_array(quat_normalize(self.as_array()))

    def is_unit(self, tol: float = 1e-6) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.as_array())

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(quat_multiply(self.as_array(), other.as_array()))


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic 3D primitive.

    ``s`` is the diagonal of the per-axis scale matrix (world units, strictly
    positive), ``mask_logit`` the learnable prune logit.
    """

    mu: np.ndarray
    q: Quaternion
    s: np.ndarray
    alpha: float
    color: np.ndarray
    level: int = 1
    mask_logit: float = 10.0
    anchor_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=np.float64))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.mu.shape != (3,) or self.s.shape != (3,) or self.color.shape != (3,):
            raise ValueError("mu, s, color must be 3-vectors")
        if np.any(self.s <= 0.0):
            raise ValueError("scale components must be strictly positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if np.any(self.color < 0.0) or np.any(self.color > 1.0):
            raise ValueError("color components must lie in [0, 1]")
        if self.level < 1:
            raise ValueError("level must be >= 1")

    def covariance(self) -> np.ndarray:
        return compose_covariance(self.q, self.s)


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera with a world-to-camera rigid transform.

    ``R_wc`` maps world to camera coordinates (x_cam = R_wc x + t_wc); the
    forward axis ``d_ck`` is the camera +z expressed in world coordinates.
    """

    id: str
    fx: float
    fy: float
    cx: float
    cy: float
    R_wc: np.ndarray
    t_wc: np.ndarray
    width: int
    height: int
    d_ck: np.ndarray = field(init=False)

    def __post_init__(self):
        R = np.asarray(self.R_wc, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t_wc, dtype=np.float64).reshape(3)
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-6:
            raise ValueError("R_wc must be orthonormal within 1e-6")
        if np.linalg.det(R) < 0.0:
            raise ValueError("R_wc must have determinant +1")
        object.__setattr__(self, "R_wc", R)
        object.__setattr__(self, "t_wc", t)
        d = R[2, :].copy()
        object.__setattr__(self, "d_ck", d / np.linalg.norm(d))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R_wc.T @ self.t_wc

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.R_wc.T + self.t_wc

    def scaled(self, factor: float) -> "CameraView":
        """Camera for an image scaled by ``factor`` (intrinsics and size)."""
        return CameraView(
            id=self.id,
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            R_wc=self.R_wc,
            t_wc=self.t_wc,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
        )


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray  # pixel coordinates (u, v)
    cov2d: np.ndarray   # 2x2, px^2, before diagonal dilation
    depth: float        # camera-space z


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def compose_covariance(q: Quaternion, s: np.ndarray) -> np.ndarray:
    """Covariance R diag(s)^2 R^T from a unit quaternion and per-axis scales."""
    if not q.is_unit():
        raise NotNormalized(f"quaternion norm {q.norm():.6g} is not 1 within 1e-6")
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0.0):
        raise DegenerateCovariance("scale components must be strictly positive")
    R = q.rotation_matrix()
    return (R * (s * s)) @ R.T


def evaluate_gaussian(x: np.ndarray, g: Gaussian) -> float:
    """Density exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)); equals 1 exactly at the mean."""
    if np.any(g.s <= EPS_SCALE):
        raise DegenerateCovariance(
            f"scale at or below eps_scale={EPS_SCALE}: {g.s}"
        )
    d = np.asarray(x, dtype=np.float64) - g.mu
    cov = compose_covariance(g.q.normalized(), g.s)
    z = np.linalg.solve(cov, d)
    return float(np.exp(-0.5 * d @ z))


def project_gaussian(g: Gaussian, cam: CameraView, z_near: float = Z_NEAR) -> ProjectedGaussian:
    """EWA splat projection of one Gaussian through a pinhole camera.

    cov2d = J W Sigma W^T J^T with W the world-to-camera rotation and J the
    perspective Jacobian at the mean. Raises BehindCamera for z <= z_near.
    """
    t = cam.world_to_cam(g.mu)[0]
    tz = t[2]
    if tz <= z_near:
        raise BehindCamera(f"camera-space z {tz:.4g} <= z_near {z_near}")
    mean2d = np.array(
        [cam.fx * t[0] / tz + cam.cx, cam.fy * t[1] / tz + cam.cy], dtype=np.float64
    )
    J = np.array(
        [
            [cam.fx / tz, 0.0, -cam.fx * t[0] / (tz * tz)],
            [0.0, cam.fy / tz, -cam.fy * t[1] / (tz * tz)],
        ],
        dtype=np.float64,
    )
    M = J @ cam.R_wc
    cov = compose_covariance(g.q.normalized(), g.s)
    cov2d = M @ cov @ M.T
    return ProjectedGaussian(mean2d=mean2d, cov2d=cov2d, depth=float(tz))
