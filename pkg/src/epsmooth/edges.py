"""Edge-pixel detection from local least-squares plane fits.

Each pixel with a full (2k+1)x(2k+1) window gets an OLS plane fit in
normalized design units; the gradient-difference statistic compares the
gradient there with the gradients at two displaced windows along the
gradient direction, spaced so the windows cannot overlap.  Pixels whose
statistic exceeds a chi-square based threshold are flagged as edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import ImageGrid

__all__ = [
    "PlaneFit",
    "PlaneFitField",
    "EdgeDetectParams",
    "EdgeMap",
    "fit_local_plane",
    "fit_planes",
    "estimate_sigma",
    "chi2_quantile_2df",
    "delta_statistic",
    "detect_edges",
]

# Gradients this small (intensity per normalized unit) are treated as exact
# zeros; real gradients on the 0-255 scale are tens of orders larger.
SOLVER_TOL = 1e-9


class PlaneFit(NamedTuple):
    b0: float  # intercept, intensity units
    b1: float  # slope along x (columns), intensity per normalized unit
    b2: float  # slope along y (rows)


@dataclass(frozen=True)
class EdgeDetectParams:
    k: int
    alpha: float
    sigma_override: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("window half-width k must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.sigma_override is not None and self.sigma_override < 0:
            raise ValueError("sigma_override must be >= 0")


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel edge flags with the statistic field behind them.

    The border band of width k carries flags=False and delta=0: plane fits
    are undefined there.
    """

    flags: np.ndarray
    delta: np.ndarray
    threshold: float
    sigma_hat: float

    def __post_init__(self):
        if self.flags.shape != self.delta.shape:
            raise ValueError("flags and delta must have the same shape")


@dataclass(frozen=True)
class PlaneFitField:
    """Plane fits for every pixel with a full window inside the image.

    b0/b1/b2 are full-size arrays; entries outside `valid` are zero filler.
    """

    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    valid: np.ndarray
    k: int
    n: int


def design_pitch(img: ImageGrid) -> int:
    """Design-grid scale n: pixel pitch is 1/n with n = max(height, width)."""
    return max(img.height, img.width)


def _snap(arr):
    return np.where(np.abs(arr) <= SOLVER_TOL, 0.0, arr)


def fit_local_plane(img: ImageGrid, center: tuple[int, int], k: int) -> PlaneFit:
    """OLS plane over the (2k+1)^2 window at `center` (row, col).

    The window's symmetry makes the normal equations diagonal: the intercept
    is the window mean and each slope is a weighted sum over its own axis.
    """
    r, c = center
    h, w = img.shape
    if not (k <= r < h - k and k <= c < w - k):
        raise ValueError(f"window of half-width {k} at {center} overruns the image")
    n = design_pitch(img)
    win = img.data[r - k : r + k + 1, c - k : c + k + 1]
    dxs = np.arange(-k, k + 1, dtype=np.float64) / n
    den = (2 * k + 1) * float(np.sum(dxs * dxs))
    b0 = float(np.mean(win))
    b1 = float(np.sum(win * dxs[np.newaxis, :])) / den
    b2 = float(np.sum(win * dxs[:, np.newaxis])) / den
    if abs(b1) <= SOLVER_TOL:
        b1 = 0.0
    if abs(b2) <= SOLVER_TOL:
        b2 = 0.0
    return PlaneFit(b0, b1, b2)


def _axis_window_sum(z: np.ndarray, k: int, axis: int, offset_weighted: bool = False) -> np.ndarray:
    """Sum of 2k+1 consecutive entries along `axis`, optionally weighted by
    the signed offset; output loses k entries at each end of that axis."""
    span = z.shape[axis] - 2 * k
    out = None
    for s in range(-k, k + 1):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k + s, k + s + span)
        term = z[tuple(sl)]
        if offset_weighted:
            term = float(s) * term
        out = term.copy() if out is None else out + term
    return out


def fit_planes(img: ImageGrid, k: int) -> PlaneFitField:
    """Vectorized plane fits for every pixel with a full window."""
    h, w = img.shape
    if 2 * k + 1 > min(h, w):
        raise ValueError(f"window of size {2 * k + 1} exceeds image {h}x{w}")
    n = design_pitch(img)
    z = img.data
    ss = k * (k + 1) * (2 * k + 1) / 3.0  # sum of s^2 over -k..k
    den_pix = (2 * k + 1) * ss

    col_box = _axis_window_sum(z, k, axis=1)
    total = _axis_window_sum(col_box, k, axis=0)
    sx = _axis_window_sum(_axis_window_sum(z, k, axis=1, offset_weighted=True), k, axis=0)
    sy = _axis_window_sum(_axis_window_sum(z, k, axis=0, offset_weighted=True), k, axis=1)

    b0 = np.zeros((h, w))
    b1 = np.zeros((h, w))
    b2 = np.zeros((h, w))
    inner = (slice(k, h - k), slice(k, w - k))
    b0[inner] = total / (2 * k + 1) ** 2
    b1[inner] = _snap(n * sx / den_pix)
    b2[inner] = _snap(n * sy / den_pix)
    valid = np.zeros((h, w), dtype=bool)
    valid[inner] = True
    return PlaneFitField(b0, b1, b2, valid, k, n)


def estimate_sigma(img: ImageGrid) -> float:
    """Robust noise-sd estimate from horizontal first differences.

    Uses the median absolute deviation of the differences, rescaled by
    0.6745*sqrt(2) to be consistent for Gaussian noise; returns 0 on a
    constant image and on piecewise-constant images where more than half
    of the differences vanish.
    """
    if img.width < 2:
        raise ValueError("sigma estimation needs at least two columns")
    d = np.diff(img.data, axis=1).ravel()
    mad = float(np.median(np.abs(d - np.median(d))))
    return mad / (0.6745 * math.sqrt(2.0))


def chi2_quantile_2df(alpha: float) -> float:
    """Upper-alpha quantile of the chi-square distribution with 2 df.

    With 2 degrees of freedom the distribution is Exponential(1/2), so the
    quantile is exactly -2*ln(alpha).
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return -2.0 * math.log(alpha)


def _gradient_offsets(b1, b2, k):
    """Integer (drow, dcol) displacement of the comparison windows: 2k+1
    steps along the unit gradient, component-wise rounded.  Zero gradients
    fall back to the +x direction."""
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    norm = np.hypot(b1, b2)
    safe = np.where(norm > 0, norm, 1.0)
    ux = np.where(norm > 0, b1 / safe, 1.0)
    uy = np.where(norm > 0, b2 / safe, 0.0)
    dc = np.rint((2 * k + 1) * ux).astype(np.int64)
    dr = np.rint((2 * k + 1) * uy).astype(np.int64)
    return dr, dc


def delta_statistic(field: PlaneFitField, p: tuple[int, int], k: int) -> float:
    """Gradient-difference statistic at pixel `p` from a fitted field.

    The two comparison pixels sit 2k+1 pixels away along the (rounded)
    gradient direction; only those with valid fits participate, and the
    statistic is 0 when neither does.
    """
    r, c = p
    if not field.valid[r, c]:
        raise ValueError(f"no plane fit available at {p}")
    b1 = field.b1[r, c]
    b2 = field.b2[r, c]
    dr, dc = _gradient_offsets(np.float64(b1), np.float64(b2), k)
    dr, dc = int(dr), int(dc)
    h, w = field.valid.shape
    best = None
    for rr, cc in ((r + dr, c + dc), (r - dr, c - dc)):
        if 0 <= rr < h and 0 <= cc < w and field.valid[rr, cc]:
            d = math.hypot(b1 - field.b1[rr, cc], b2 - field.b2[rr, cc])
            best = d if best is None else min(best, d)
    return 0.0 if best is None else best


def _delta_field(field: PlaneFitField, k: int) -> np.ndarray:
    h, w = field.valid.shape
    dr, dc = _gradient_offsets(field.b1, field.b2, k)
    rows, cols = np.indices((h, w))
    delta = np.zeros((h, w))
    have = np.zeros((h, w), dtype=bool)
    for sign in (1, -1):
        rr = rows + sign * dr
        cc = cols + sign * dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        ok &= field.valid[rr.clip(0, h - 1), cc.clip(0, w - 1)] & field.valid
        rs = rr.clip(0, h - 1)
        cs = cc.clip(0, w - 1)
        d = np.hypot(field.b1 - field.b1[rs, cs], field.b2 - field.b2[rs, cs])
        delta = np.where(ok & have, np.minimum(delta, d), np.where(ok, d, delta))
        have |= ok
    delta[~field.valid] = 0.0
    return delta


def detect_edges(img: ImageGrid, params: EdgeDetectParams) -> EdgeMap:
    """Flag edge pixels: delta > sigma_hat * sqrt(chi2_q / (k * S_x^2)).

    S_x^2 is the sample variance of the window's x coordinates,
    k(k+1)/(3 n^2) for half-width k on a pitch-1/n grid.  The comparison is
    scale-free in n because both sides grow linearly with it.
    """
    k = params.k
    h, w = img.shape
    if 2 * k + 1 > min(h, w):
        raise ValueError(f"window of size {2 * k + 1} exceeds image {h}x{w}")
    sigma = params.sigma_override
    if sigma is None:
        sigma = estimate_sigma(img)
    field = fit_planes(img, k)
    delta = _delta_field(field, k)
    n = field.n
    sx2 = k * (k + 1) / (3.0 * n * n)
    threshold = sigma * math.sqrt(chi2_quantile_2df(params.alpha) / (k * sx2))
    flags = delta > threshold
    return EdgeMap(flags=flags, delta=delta, threshold=threshold, sigma_hat=float(sigma))
