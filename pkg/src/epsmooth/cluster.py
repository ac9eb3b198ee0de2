"""Local clustering smoother for pixels near detected edges.

A disk neighborhood is split into two intensity clusters at the threshold
maximizing the between/within variance ratio; the estimate is a
patch-similarity weighted average over the cluster containing the center
pixel.  Weights and clusters always read the original intensities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ImageGrid

__all__ = [
    "ClusterParams",
    "ClusterSplit",
    "variance_ratio",
    "optimal_threshold",
    "patch_weight",
    "cluster_smooth_pixel",
]


@dataclass(frozen=True)
class ClusterParams:
    """Tuning for the clustering smoother.

    `sigma_hat` is the noise sd used in the patch-similarity weights; 0
    means all weights are 1 (plain cluster means), None means "estimate it
    from the image" and is resolved by the denoising pipeline.
    """

    h_n: float
    patch_radius: int = 1
    b_n: float = 1.0
    sigma_hat: float | None = None

    def __post_init__(self):
        if self.h_n < 1:
            raise ValueError("clustering radius h_n must be >= 1")
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be >= 1")
        if self.b_n <= 0:
            raise ValueError("weight bandwidth multiplier b_n must be positive")
        if self.sigma_hat is not None and self.sigma_hat < 0:
            raise ValueError("sigma_hat must be >= 0")


@dataclass(frozen=True)
class ClusterSplit:
    """A two-way split of a value sequence at threshold `s`.

    `members_low` / `members_high` are indices into the input sequence
    (values <= s vs > s).  A degenerate split (all values equal) has an
    empty high side, t_value 0, and mean_high None.
    """

    s: float
    members_low: np.ndarray
    members_high: np.ndarray
    mean_low: float
    mean_high: float | None
    t_value: float


def variance_ratio(values, s: float) -> float:
    """Between/within variance ratio of the split at threshold s.

    Returns +inf when both groups are internally constant (perfect split).
    Both groups must be non-empty.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("variance ratio needs at least two values")
    low = v[v <= s]
    high = v[v > s]
    if low.size == 0 or high.size == 0:
        raise ValueError(f"threshold {s} leaves an empty group")
    grand = float(np.mean(v))
    m1 = float(np.mean(low))
    m2 = float(np.mean(high))
    between = low.size * (m1 - grand) ** 2 + high.size * (m2 - grand) ** 2
    within = float(np.sum((low - m1) ** 2)) + float(np.sum((high - m2) ** 2))
    if within == 0.0:
        return math.inf
    return between / within


def _best_split(sv: np.ndarray):
    """Argmax of the variance ratio over sorted values.

    Returns (threshold, t_value, cut) where `cut` is the last sorted index
    of the low group, or (None, 0.0, None) when all values are equal.
    """
    boundaries = np.nonzero(sv[:-1] < sv[1:])[0]
    if boundaries.size == 0:
        return None, 0.0, None
    m = sv.size
    csum = np.cumsum(sv)
    csq = np.cumsum(sv * sv)
    n1 = boundaries + 1.0
    n2 = m - n1
    m1 = csum[boundaries] / n1
    m2 = (csum[-1] - csum[boundaries]) / n2
    grand = csum[-1] / m
    between = n1 * (m1 - grand) ** 2 + n2 * (m2 - grand) ** 2
    within = np.maximum(csq[boundaries] - n1 * m1 * m1, 0.0) + np.maximum(
        (csq[-1] - csq[boundaries]) - n2 * m2 * m2, 0.0
    )
    # Exactly two distinct levels is the only way a candidate split can be
    # perfect; mark it so float cancellation cannot hide it.
    if boundaries.size == 1:
        within[0] = 0.0
    with np.errstate(divide="ignore"):
        t = np.where(within > 0, between / np.where(within > 0, within, 1.0), math.inf)
    # Ties (within one part in 1e12, so float summation order cannot flip
    # them) go to the smaller threshold.
    tmax = t.max()
    if math.isinf(tmax):
        best = int(np.argmax(np.isinf(t)))
    else:
        best = int(np.argmax(t >= tmax * (1.0 - 1e-12)))
    cut = int(boundaries[best])
    s = 0.5 * (sv[cut] + sv[cut + 1])
    if not (sv[cut] <= s < sv[cut + 1]):  # midpoint rounded onto a neighbor
        s = float(sv[cut])
    return float(s), float(t[best]), cut


def optimal_threshold(values) -> ClusterSplit:
    """Best two-way split over all midpoints of consecutive distinct values.

    The ratio is piecewise constant between data values, so midpoints are
    exhaustive.  Ties (to one part in 1e12) break toward the smaller
    threshold; perfect splits (zero within-group variance) win
    automatically.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot split an empty value list")
    order = np.argsort(v, kind="stable")
    sv = v[order]
    s, t_value, cut = _best_split(sv)
    if cut is None:  # all values equal: degenerate split
        return ClusterSplit(
            s=float(sv[0]),
            members_low=np.arange(v.size),
            members_high=np.arange(0),
            mean_low=float(np.mean(v)),
            mean_high=None,
            t_value=0.0,
        )
    return ClusterSplit(
        s=s,
        members_low=np.sort(order[: cut + 1]),
        members_high=np.sort(order[cut + 1 :]),
        mean_low=float(np.mean(sv[: cut + 1])),
        mean_high=float(np.mean(sv[cut + 1 :])),
        t_value=t_value,
    )


def _common_patch_box(shape, q, p, radius):
    """Offset bounds valid for patches at both q and p after clipping."""
    h, w = shape
    r_lo = max(-radius, -q[0], -p[0])
    r_hi = min(radius, h - 1 - q[0], h - 1 - p[0])
    c_lo = max(-radius, -q[1], -p[1])
    c_hi = min(radius, w - 1 - q[1], w - 1 - p[1])
    return r_lo, r_hi, c_lo, c_hi


def patch_weight(img: ImageGrid, q, p, params: ClusterParams) -> float:
    """Similarity weight between pixels from their surrounding patches.

    Squared L2 distance over the offsets valid for both (clipped) patches,
    normalized by the noise variance, the common offset count, and b_n.
    sigma_hat = 0 makes every weight 1.
    """
    sigma = params.sigma_hat
    if sigma is None:
        raise ValueError("patch_weight needs a resolved sigma_hat")
    if sigma == 0.0:
        return 1.0
    r_lo, r_hi, c_lo, c_hi = _common_patch_box(img.shape, q, p, params.patch_radius)
    pq = img.data[q[0] + r_lo : q[0] + r_hi + 1, q[1] + c_lo : q[1] + c_hi + 1]
    pp = img.data[p[0] + r_lo : p[0] + r_hi + 1, p[1] + c_lo : p[1] + c_hi + 1]
    diff = pq - pp
    dist2 = float(np.sum(diff * diff))
    count = diff.size
    return math.exp(-dist2 / (2.0 * sigma * sigma * count * params.b_n))


def _disk_offsets(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    dr, dc = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dr * dr + dc * dc <= radius * radius
    return np.stack([dr[keep], dc[keep]], axis=1)


class ClusterEngine:
    """Reusable state for smoothing many pixels of one image.

    Holds the disk offsets, a NaN-padded copy of the image, and a patch
    window view so per-pixel patch distances are one vectorized expression.
    """

    def __init__(self, img: ImageGrid, params: ClusterParams):
        if params.sigma_hat is None:
            raise ValueError("ClusterEngine needs a resolved sigma_hat")
        self.img = img
        self.params = params
        self.offsets = _disk_offsets(params.h_n)
        rad = params.patch_radius
        padded = np.pad(img.data, rad, mode="constant", constant_values=np.nan)
        self.windows = np.lib.stride_tricks.sliding_window_view(
            padded, (2 * rad + 1, 2 * rad + 1)
        )

    def smooth(self, p) -> float:
        r, c = int(p[0]), int(p[1])
        img = self.img
        h, w = img.shape
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"pixel {p} outside image {h}x{w}")
        rows = self.offsets[:, 0] + r
        cols = self.offsets[:, 1] + c
        keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        rows = rows[keep]
        cols = cols[keep]
        values = img.data[rows, cols]
        order = np.argsort(values, kind="stable")
        s, _, cut = _best_split(values[order])
        if cut is None:
            home_rows, home_cols, home_vals = rows, cols, values
        else:
            side = order[: cut + 1] if img.data[r, c] <= s else order[cut + 1 :]
            home_rows, home_cols, home_vals = rows[side], cols[side], values[side]
        sigma = self.params.sigma_hat
        if sigma == 0.0:
            return float(np.mean(home_vals))
        diff = self.windows[home_rows, home_cols] - self.windows[r, c]
        dist2 = np.nansum(diff * diff, axis=(1, 2))
        count = np.sum(~np.isnan(diff), axis=(1, 2))
        wgt = np.exp(-dist2 / (2.0 * sigma * sigma * count * self.params.b_n))
        return float(np.sum(wgt * home_vals) / np.sum(wgt))


def cluster_smooth_pixel(img: ImageGrid, p, params: ClusterParams) -> float:
    """Clustering estimate of the intensity at p (see module docstring).

    The neighborhood is the disk of radius h_n clipped to the image; a
    degenerate split averages over the whole neighborhood.
    """
    return ClusterEngine(img, params).smooth(p)
