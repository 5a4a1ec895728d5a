"""Batched EWA projection and its reverse-mode chain.

Forward: world Gaussians -> screen means, 2D covariances (with the diagonal
dilation), conics, depths, and a validity mask. Backward: gradients on the
screen-space quantities -> gradients on mu, raw quaternion, scale. The chain
includes the dependence of the projection Jacobian on the camera-space point,
which matters for finite-difference agreement on position gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import COV2D_DILATION, Z_NEAR, quat_to_rotmat


@dataclass
class Projection:
    """Per-Gaussian screen-space data plus the intermediates backward needs."""

    valid: np.ndarray        # (N,) bool
    mean2d: np.ndarray       # (N, 2)
    conic: np.ndarray        # (N, 3) upper triangle of inverse dilated cov2d
    depth: np.ndarray        # (N,)
    radius: np.ndarray       # (N,) 3-sigma pixel radius
    t_cam: np.ndarray        # (N, 3)
    M: np.ndarray            # (N, 2, 3) J @ R_wc
    J: np.ndarray            # (N, 2, 3)
    cov3: np.ndarray         # (N, 3, 3)
    R3: np.ndarray           # (N, 3, 3) rotation from normalized quats
    q_norm: np.ndarray       # (N,) raw quaternion norms
    q_hat: np.ndarray        # (N, 4)


def project_batch(mu, q, s, cam, z_near: float = Z_NEAR) -> Projection:
    mu = np.asarray(mu, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    n = mu.shape[0]

    q_norm = np.linalg.norm(q, axis=1)
    q_hat = q / np.maximum(q_norm, 1e-12)[:, None]
    R3 = quat_to_rotmat(q_hat)
    cov3 = np.einsum("nij,nj,nkj->nik", R3, s * s, R3)

    t = mu @ cam.R_wc.T + cam.t_wc
    valid = t[:, 2] > z_near
    tz = np.where(valid, t[:, 2], 1.0)

    mean2d = np.empty((n, 2))
    mean2d[:, 0] = cam.fx * t[:, 0] / tz + cam.cx
    mean2d[:, 1] = cam.fy * t[:, 1] / tz + cam.cy

    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / tz
    J[:, 1, 1] = cam.fy / tz
    J[:, 0, 2] = -cam.fx * t[:, 0] / (tz * tz)
    J[:, 1, 2] = -cam.fy * t[:, 1] / (tz * tz)
    M = J @ cam.R_wc
    cov2d = np.einsum("nij,njk,nlk->nil", M, cov3, M)
    a = cov2d[:, 0, 0] + COV2D_DILATION
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1] + COV2D_DILATION
    det = a * c - b * b
    valid &= det > 0.0
    det = np.where(det > 0.0, det, 1.0)

    conic = np.stack([c / det, -b / det, a / det], axis=1)
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))

    return Projection(
        valid=valid, mean2d=mean2d, conic=conic, depth=t[:, 2].copy(),
        radius=radius, t_cam=t, M=M, J=J, cov3=cov3, R3=R3,
        q_norm=q_norm, q_hat=q_hat,
    )


# partial derivatives of the standard quaternion-to-rotation formula with
# respect to (w, x, y, z); rows follow the matrix layout in quat_to_rotmat
def _rot_partials(q_hat: np.ndarray) -> np.ndarray:
    w, x, y, z = q_hat[:, 0], q_hat[:, 1], q_hat[:, 2], q_hat[:, 3]
    zeros = np.zeros_like(w)
    dR = np.empty((q_hat.shape[0], 4, 3, 3))
    dR[:, 0] = np.moveaxis(np.array([
        [zeros, -2 * z, 2 * y],
        [2 * z, zeros, -2 * x],
        [-2 * y, 2 * x, zeros],
    ]), (0, 1), (1, 2))
    dR[:, 1] = np.moveaxis(np.array([
        [zeros, 2 * y, 2 * z],
        [2 * y, -4 * x, -2 * w],
        [2 * z, 2 * w, -4 * x],
    ]), (0, 1), (1, 2))
    dR[:, 2] = np.moveaxis(np.array([
        [-4 * y, 2 * x, 2 * w],
        [2 * x, zeros, 2 * z],
        [-2 * w, 2 * z, -4 * y],
    ]), (0, 1), (1, 2))
    dR[:, 3] = np.moveaxis(np.array([
        [-4 * z, -2 * w, 2 * x],
        [2 * w, -4 * z, 2 * y],
        [2 * x, 2 * y, zeros],
    ]), (0, 1), (1, 2))
    return dR


def backward_batch(proj: Projection, s, cam, d_mean2d, d_conic, d_depth=None):
    """Chain screen-space gradients down to (d_mu, d_q_raw, d_s)."""
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    live = proj.valid
    t = proj.t_cam
    tz = np.where(live, t[:, 2], 1.0)

    # conic = inv(D): dL/dD = -K G K with G the symmetrized conic gradient
    K = np.empty((n, 2, 2))
    K[:, 0, 0] = proj.conic[:, 0]
    K[:, 0, 1] = K[:, 1, 0] = proj.conic[:, 1]
    K[:, 1, 1] = proj.conic[:, 2]
    G = np.empty((n, 2, 2))
    G[:, 0, 0] = d_conic[:, 0]
    G[:, 0, 1] = G[:, 1, 0] = 0.5 * d_conic[:, 1]
    G[:, 1, 1] = d_conic[:, 2]
    H = -np.einsum("nij,njk,nkl->nil", K, G, K)  # grad wrt dilated cov2d

    d_cov3 = np.einsum("nji,njk,nkl->nil", proj.M, H, proj.M)
    d_M = 2.0 * np.einsum("nij,njk,nkl->nil", H, proj.M, proj.cov3)
    d_J = d_M @ cam.R_wc.T

    d_t = np.zeros((n, 3))
    # J's own dependence on the camera-space point
    d_t[:, 0] += d_J[:, 0, 2] * (-cam.fx / (tz * tz))
    d_t[:, 1] += d_J[:, 1, 2] * (-cam.fy / (tz * tz))
    d_t[:, 2] += (
        d_J[:, 0, 0] * (-cam.fx / (tz * tz))
        + d_J[:, 1, 1] * (-cam.fy / (tz * tz))
        + d_J[:, 0, 2] * (2.0 * cam.fx * t[:, 0] / tz**3)
        + d_J[:, 1, 2] * (2.0 * cam.fy * t[:, 1] / tz**3)
    )
    # perspective mean
    d_t[:, 0] += d_mean2d[:, 0] * cam.fx / tz
    d_t[:, 1] += d_mean2d[:, 1] * cam.fy / tz
    d_t[:, 2] += (
        -d_mean2d[:, 0] * cam.fx * t[:, 0] / (tz * tz)
        - d_mean2d[:, 1] * cam.fy * t[:, 1] / (tz * tz)
    )
    if d_depth is not None:
        d_t[:, 2] += d_depth
    d_mu = d_t @ cam.R_wc

    # covariance to scale and rotation
    RtGR = np.einsum("nji,njk,nkl->nil", proj.R3, d_cov3, proj.R3)
    d_s = 2.0 * s * np.einsum("nii->ni", RtGR)
    d_R = 2.0 * np.einsum("nij,njk,nk->nik", d_cov3, proj.R3, s * s)
    dR_dq = _rot_partials(proj.q_hat)
    d_qhat = np.einsum("nij,nqij->nq", d_R, dR_dq)
    # normalization: q_hat = q / |q|
    inv_n = 1.0 / np.maximum(proj.q_norm, 1e-12)
    d_q = (d_qhat - proj.q_hat * np.sum(proj.q_hat * d_qhat, axis=1, keepdims=True)) * inv_n[:, None]

    dead = ~live
    d_mu[dead] = 0.0
    d_q[dead] = 0.0
    d_s[dead] = 0.0
    return d_mu, d_q, d_s
