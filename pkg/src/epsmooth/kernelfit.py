"""Local polynomial regression over an elliptical support.

The kernel is positive only inside the ellipse, so the support doubles as
the bandwidth.  Fits are weighted least squares on a centered basis scaled
by the major semi-axis for conditioning; the intercept estimates the
intensity at the center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ellipse
from .grid import ImageGrid

__all__ = ["KernelSpec", "FitResult", "kernel_weight", "local_poly_fit"]

KERNEL_SHAPES = ("epanechnikov", "truncated-gaussian")

# Designs whose condition number exceeds this are refit at a lower order.
CONDITION_LIMIT = 1e8

_BASIS_SIZE = {0: 1, 1: 3, 2: 6}


@dataclass(frozen=True)
class KernelSpec:
    shape: str = "epanechnikov"
    order: int = 2

    def __post_init__(self):
        if self.shape not in KERNEL_SHAPES:
            raise ValueError(f"kernel shape must be one of {KERNEL_SHAPES}")
        if self.order not in (0, 1, 2):
            raise ValueError("polynomial order must be 0, 1 or 2")


@dataclass(frozen=True)
class FitResult:
    """WLS fit at an ellipse center.

    theta0 is the fitted intensity; theta1 the gradient (d/dcol, d/drow)
    and theta2 the half-vectorized quadratic terms (dx^2, dx*dy, dy^2), in
    pixel units, present when the effective order reaches them.
    """

    theta0: float
    theta1: np.ndarray | None
    theta2: np.ndarray | None
    effective_order: int
    n_points: int


def _weights_from_r2(r2: np.ndarray, shape: str) -> np.ndarray:
    if shape == "epanechnikov":
        return np.maximum(0.0, 1.0 - r2)
    return np.where(r2 <= 1.0, np.exp(-0.5 * r2), 0.0)


def kernel_weight(ellipse: Ellipse, q, shape: str = "epanechnikov") -> float:
    """Weight of pixel q for a fit centered on `ellipse`; zero outside it."""
    if shape not in KERNEL_SHAPES:
        raise ValueError(f"kernel shape must be one of {KERNEL_SHAPES}")
    r2 = ellipse.scaled_r2(q)
    return float(_weights_from_r2(np.float64(r2), shape))


def _design(dx, dy, order: int, scale: float) -> np.ndarray:
    sx = dx / scale
    sy = dy / scale
    cols = [np.ones_like(sx)]
    if order >= 1:
        cols += [sx, sy]
    if order >= 2:
        cols += [sx * sx, sx * sy, sy * sy]
    return np.stack(cols, axis=1)


def _support(img: ImageGrid, ellipse: Ellipse, shape: str):
    """Pixels with strictly positive kernel weight, clipped to the image."""
    h, w = img.shape
    cr, cc = ellipse.center
    reach = int(np.ceil(ellipse.a))
    r_lo = max(0, int(np.floor(cr)) - reach)
    r_hi = min(h - 1, int(np.ceil(cr)) + reach)
    c_lo = max(0, int(np.floor(cc)) - reach)
    c_hi = min(w - 1, int(np.ceil(cc)) + reach)
    rows = np.arange(r_lo, r_hi + 1)
    cols = np.arange(c_lo, c_hi + 1)
    dr = (rows - cr)[:, None]
    dc = (cols - cc)[None, :]
    um = (dr * ellipse.u_minor[0] + dc * ellipse.u_minor[1]) / ellipse.b
    up = (dr * ellipse.u_perp[0] + dc * ellipse.u_perp[1]) / ellipse.a
    r2 = um * um + up * up
    wgt = _weights_from_r2(r2, shape)
    keep = wgt > 0.0
    z = img.data[r_lo : r_hi + 1, c_lo : c_hi + 1][keep]
    dry, dcx = np.broadcast_arrays(dr, dc)
    return dcx[keep], dry[keep], z, wgt[keep]


def solve_equivalent_weights(dx, dy, wgt, order: int, scale: float) -> np.ndarray:
    """Row of the WLS hat matrix for the intercept: theta0 = weights . z.

    Used to turn a fixed support (the capped circular neighborhood far from
    all edges) into a single linear filter.
    """
    x = _design(np.asarray(dx, float), np.asarray(dy, float), order, scale)
    xw = x * np.asarray(wgt, float)[:, None]
    m = x.T @ xw
    e0 = np.zeros(x.shape[1])
    e0[0] = 1.0
    return xw @ np.linalg.solve(m, e0)


def local_poly_fit(img: ImageGrid, ellipse: Ellipse, spec: KernelSpec) -> FitResult:
    """Weighted least squares over the ellipse's in-image support.

    Falls back one order at a time when the support has fewer pixels than
    basis functions or the weighted design is ill-conditioned (condition
    number above 1e8); order 0 (the weighted mean) always succeeds.
    """
    h, w = img.shape
    cr, cc = ellipse.center
    if not (0 <= cr <= h - 1 and 0 <= cc <= w - 1):
        raise ValueError("ellipse center must lie inside the image")
    dx, dy, z, wgt = _support(img, ellipse, spec.shape)
    n_points = int(len(z))
    if n_points == 0:
        raise ValueError("ellipse support holds no positive-weight pixel")
    scale = max(ellipse.a, ellipse.b)
    for order in range(spec.order, 0, -1):
        p = _BASIS_SIZE[order]
        if n_points < p:
            continue
        x = _design(dx, dy, order, scale)
        xw = x * wgt[:, None]
        m = x.T @ xw
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] <= 0 or np.sqrt(eigs[-1] / eigs[0]) > CONDITION_LIMIT:
            continue
        theta = np.linalg.solve(m, xw.T @ z)
        theta1 = theta[1:3] / scale
        theta2 = theta[3:6] / scale**2 if order >= 2 else None
        return FitResult(float(theta[0]), theta1, theta2, order, n_points)
    theta0 = float(np.sum(wgt * z) / np.sum(wgt))
    return FitResult(theta0, None, None, 0, n_points)
