"""Reconstruction losses and image metrics.

L1 plus a structural-similarity term (11x11 Gaussian window, sigma 1.5,
K1 = 0.01, K2 = 0.03, unit dynamic range). Both carry analytic backward
passes; the SSIM adjoint is the full convolution of the windowed statistic
derivatives, verified against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .nets import sigmoid

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_LAMBDA_SSIM = 0.2
DEFAULT_LAMBDA_R = 0.001
PSNR_CAP = 99.0


def _gaussian_window(win: int, sigma: float) -> np.ndarray:
    x = np.arange(win, dtype=np.float64) - (win - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _vcorr(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    """Valid-mode 1D correlation along ``axis``."""
    v = sliding_window_view(x, w.size, axis=axis)
    return np.tensordot(v, w, axes=([-1], [0]))


def _vadj(d: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of _vcorr: zero-padded full convolution (w is symmetric)."""
    pad = [(0, 0)] * d.ndim
    pad[axis] = (w.size - 1, w.size - 1)
    return _vcorr(np.pad(d, pad), w, axis)


def _filt(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _vcorr(_vcorr(x, w, 0), w, 1)


def _filt_adj(d: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _vadj(_vadj(d, w, 0), w, 1)


def ssim(x: np.ndarray, y: np.ndarray, win: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    """Mean SSIM over the valid window positions and channels.

    Returns (value, cache); ``ssim_backward`` turns an upstream scalar
    derivative into a dense gradient w.r.t. ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    h, wd = x.shape[:2]
    win = min(win, h if h % 2 else h - 1, wd if wd % 2 else wd - 1)
    if win < 3:
        raise ShapeError(f"image {x.shape[:2]} too small for SSIM")
    w = _gaussian_window(win, sigma)

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_x = _filt(x, w)
    mu_y = _filt(y, w)
    sxx = _filt(x * x, w) - mu_x**2
    syy = _filt(y * y, w) - mu_y**2
    sxy = _filt(x * y, w) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + c1
    a2 = 2.0 * sxy + c2
    b1 = mu_x**2 + mu_y**2 + c1
    b2 = sxx + syy + c2
    s_map = (a1 * a2) / (b1 * b2)
    cache = (x, y, w, mu_x, mu_y, a1, a2, b1, b2)
    return float(s_map.mean()), cache


def ssim_backward(cache, dssim: float) -> np.ndarray:
    """Gradient of (dssim * mean SSIM) with respect to the first image."""
    x, y, w, mu_x, mu_y, a1, a2, b1, b2 = cache
    n = a1.size
    ds = np.full(a1.shape, dssim / n)

    denom = b1 * b2
    ds_dmux = ds * 2.0 * (mu_y * a2 * b1 - mu_x * a1 * a2) / (b1 * denom)
    ds_dsxx = ds * (-a1 * a2) / (b1 * b2 * b2)
    ds_dsxy = ds * 2.0 * a1 / denom

    # sxx = filt(x^2) - mu_x^2 and sxy = filt(x y) - mu_x mu_y fold extra
    # mu_x terms into the filtered maps before taking the adjoint
    g_mu = ds_dmux - 2.0 * mu_x * ds_dsxx - mu_y * ds_dsxy
    dx = _filt_adj(g_mu, w)
    dx += 2.0 * x * _filt_adj(ds_dsxx, w)
    dx += y * _filt_adj(ds_dsxy, w)
    return dx


def l1(x: np.ndarray, y: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    diff = x - y
    return float(np.abs(diff).mean()), diff


def l1_backward(diff: np.ndarray, dl1: float) -> np.ndarray:
    return np.sign(diff) * (dl1 / diff.size)


def level_loss(rendered: np.ndarray, target: np.ndarray,
               lambda_ssim: float = DEFAULT_LAMBDA_SSIM):
    """L1 + lambda_ssim * (1 - SSIM) against a same-resolution target.

    Returns (parts dict, cache). parts holds l1, ssim_loss and total.
    """
    l1_val, diff = l1(rendered, target)
    ssim_val, ssim_cache = ssim(rendered, target)
    parts = {
        "l1": l1_val,
        "ssim_loss": 1.0 - ssim_val,
        "total": l1_val + lambda_ssim * (1.0 - ssim_val),
    }
    return parts, (diff, ssim_cache, lambda_ssim, rendered.shape)


def level_loss_backward(cache, dtotal: float = 1.0) -> np.ndarray:
    diff, ssim_cache, lambda_ssim, shape = cache
    grad = l1_backward(diff, dtotal)
    grad_ssim = ssim_backward(ssim_cache, -lambda_ssim * dtotal)
    if grad.ndim == 2 and grad_ssim.ndim == 3:
        grad_ssim = grad_ssim[:, :, 0]
    return grad + grad_ssim


@dataclass
class LossReport:
    """Per-level losses, the mask sparsity term, and their weighted sum."""

    per_level: list[dict]
    sparsity: float
    lambda_r: float
    grand_total: float
    grad_norms: dict = field(default_factory=dict)


def sparsity_term(mask_logits: np.ndarray):
    """Sum of sigmoid(mask logits); returns (value, gradient wrt logits)."""
    m = sigmoid(mask_logits)
    return float(m.sum()), m * (1.0 - m)


def total_loss(level_losses: list[dict], mask_logits: np.ndarray,
               lambda_r: float = DEFAULT_LAMBDA_R) -> LossReport:
    sp, _ = sparsity_term(np.asarray(mask_logits, dtype=np.float64))
    grand = sum(p["total"] for p in level_losses) + lambda_r * sp
    return LossReport(
        per_level=list(level_losses),
        sparsity=sp,
        lambda_r=lambda_r,
        grand_total=grand,
    )


def compute_metrics(rendered: np.ndarray, reference: np.ndarray) -> dict:
    """PSNR (10 log10(1/MSE), unit range, capped at 99 dB) and SSIM."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise ShapeError(f"shape mismatch {rendered.shape} vs {reference.shape}")
    mse = float(((rendered - reference) ** 2).mean())
    if mse <= 10.0 ** (-PSNR_CAP / 10.0):
        psnr = PSNR_CAP
    else:
        psnr = 10.0 * np.log10(1.0 / mse)
    ssim_val, _ = ssim(rendered, reference)
    return {"psnr": float(psnr), "ssim": ssim_val}
