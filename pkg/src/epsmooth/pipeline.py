"""The integrated denoiser: detect edges, then smooth each pixel with the
method its surroundings call for.

Pixels within `gamma` of a detected edge pixel are smoothed by local
clustering; all others get local polynomial regression over an adaptive
ellipse that clears the detected edges by `gamma` and is capped at
`max_axis`.  Pixels far from every edge share one capped circular
neighborhood, which turns their fits into a single precomputed filter.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterEngine, ClusterParams
from .edges import EdgeDetectParams, detect_edges, estimate_sigma
from .geometry import EdgeDistanceIndex, build_index
from .grid import ImageGrid
from .kernelfit import (
    CONDITION_LIMIT,
    KernelSpec,
    _design,
    _weights_from_r2,
    solve_equivalent_weights,
)

__all__ = ["MODES", "DenoiseParams", "DenoiseDebug", "default_params", "denoise", "denoise_debug"]

MODES = ("integrated", "cluster-only", "kernel-only", "box3")

BRANCH_KERNEL = 0
BRANCH_CLUSTER = 1
BRANCH_BOX3 = 2
_BRANCH_NAMES = {BRANCH_KERNEL: "kernel", BRANCH_CLUSTER: "cluster", BRANCH_BOX3: "box3"}

_ORDER_BASIS = {0: 1, 1: 3, 2: 6}


@dataclass(frozen=True)
class DenoiseParams:
    """Everything the pipeline needs.

    `gamma` plays a double role: pixels closer than gamma to a detected
    edge are cluster-smoothed, and ellipses keep a gamma clearance from the
    edges.  The noise sd driving both the edge threshold and the patch
    weights is `cluster.sigma_hat`, estimated from the image when None.
    """

    k: int
    alpha: float
    gamma: float
    max_axis: float
    kernel: KernelSpec
    cluster: ClusterParams
    mode: str = "integrated"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.gamma > 0 and self.max_axis > 0):
            raise ValueError("gamma and max_axis must be positive")
        if not self.gamma < self.max_axis:
            raise ValueError("gamma must be smaller than max_axis")
        if self.k < 1:
            raise ValueError("edge window half-width k must be >= 1")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")


DEFAULT_K = 4
DEFAULT_ALPHA = 0.005


def default_params(n: int, mode: str = "integrated") -> DenoiseParams:
    """Defaults for an n x n image.

    The neighborhood caps follow the resolution rule (max_axis 6 and
    gamma 3 below 100x100, else 10 and 5) and the clustering radius equals
    gamma.  The edge-detection defaults (k=4, alpha=0.005) were tuned on
    the synthetic benchmark: the threshold's k*S_x^2 scaling is strongly
    conservative, so a tiny alpha still flags genuine jumps while keeping
    the flagged band (and with it the cluster region) thin; the decision
    itself is resolution-free because statistic and threshold both scale
    linearly with n.  Smoothing uses a first-order fit under a
    truncated-Gaussian kernel: on the symmetric far-from-edge supports its
    intercept matches the weighted mean's variance while staying exact
    through linear trends.
    """
    if n < 16:
        raise ValueError(f"image side must be at least 16, got {n}")
    if n < 100:
        max_axis, gamma = 6.0, 3.0
    else:
        max_axis, gamma = 10.0, 5.0
    k = min(DEFAULT_K, (n - 1) // 2)
    return DenoiseParams(
        k=k,
        alpha=DEFAULT_ALPHA,
        gamma=gamma,
        max_axis=max_axis,
        kernel=KernelSpec(shape="truncated-gaussian", order=1),
        cluster=ClusterParams(h_n=gamma, patch_radius=1, b_n=1.0, sigma_hat=None),
        mode=mode,
    )


@dataclass
class DenoiseDebug:
    """Per-pixel dispatch record: branch taken, edge distances, ellipse
    semi-axes, and the polynomial order actually used (-1 where absent)."""

    branch: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    effective_order: np.ndarray

    @classmethod
    def empty(cls, shape):
        return cls(
            branch=np.full(shape, BRANCH_KERNEL, dtype=np.int8),
            d1=np.full(shape, np.nan),
            d2=np.full(shape, np.nan),
            a=np.full(shape, np.nan),
            b=np.full(shape, np.nan),
            effective_order=np.full(shape, -1, dtype=np.int8),
        )

    def to_csv(self, path) -> None:
        h, w = self.branch.shape
        with open(path, "w", encoding="ascii") as fh:
            fh.write("row,col,branch,d1,d2,a,b,effective_order\n")
            for r in range(h):
                for c in range(w):
                    fields = [
                        str(r),
                        str(c),
                        _BRANCH_NAMES[int(self.branch[r, c])],
                        _fmt(self.d1[r, c]),
                        _fmt(self.d2[r, c]),
                        _fmt(self.a[r, c]),
                        _fmt(self.b[r, c]),
                        str(int(self.effective_order[r, c])) if self.effective_order[r, c] >= 0 else "",
                    ]
                    fh.write(",".join(fields) + "\n")


def _fmt(x) -> str:
    return "" if not np.isfinite(x) else format(float(x), ".6g")


def _resolved_sigma(img: ImageGrid, params: DenoiseParams) -> float:
    if params.cluster.sigma_hat is not None:
        return params.cluster.sigma_hat
    return estimate_sigma(img)


def _parallel_chunks(count: int, threads: int, work) -> None:
    """Run work(lo, hi) over disjoint chunks; results must go to disjoint
    buffers so the split cannot affect the output."""
    if count == 0:
        return
    if threads == 0:
        threads = os.cpu_count() or 1
    threads = max(1, min(threads, count))
    if threads == 1:
        work(0, count)
        return
    step = (count + threads - 1) // threads
    bounds = [(lo, min(lo + step, count)) for lo in range(0, count, step)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda be: work(*be), bounds))


def _circle_filter(max_axis: float, spec: KernelSpec):
    """Integer offsets and intercept weights for the capped circular
    neighborhood, following the same order-fallback ladder as
    local_poly_fit."""
    reach = int(math.ceil(max_axis))
    dr, dc = np.mgrid[-reach : reach + 1, -reach : reach + 1]
    r2 = (dr * dr + dc * dc) / (max_axis * max_axis)
    wgt = _weights_from_r2(r2.astype(np.float64), spec.shape)
    keep = wgt > 0
    offs = np.stack([dr[keep], dc[keep]], axis=1)
    wgt = wgt[keep]
    dx = offs[:, 1].astype(np.float64)
    dy = offs[:, 0].astype(np.float64)
    for order in range(spec.order, -1, -1):
        basis = _ORDER_BASIS[order]
        if len(wgt) < basis:
            continue
        x = _design(dx, dy, order, max_axis)
        m = x.T @ (x * wgt[:, None])
        eigs = np.linalg.eigvalsh(m)
        if order > 0 and (eigs[0] <= 0 or np.sqrt(eigs[-1] / eigs[0]) > CONDITION_LIMIT):
            continue
        return offs, solve_equivalent_weights(dx, dy, wgt, order, max_axis), order
    raise RuntimeError("circle filter construction cannot fail with a positive radius")


def _apply_circle_filter(data, rows, cols, offs, row_w, out_flat):
    chunk = max(1, (1 << 22) // max(1, len(offs)))
    for lo in range(0, len(rows), chunk):
        hi = min(lo + chunk, len(rows))
        gathered = data[
            rows[lo:hi, None] + offs[None, :, 0], cols[lo:hi, None] + offs[None, :, 1]
        ]
        out_flat[lo:hi] = gathered @ row_w


def _batch_kernel_fit(img: ImageGrid, rows, cols, aa, bb, ur, uc, spec: KernelSpec, reach: int):
    """Stacked WLS intercepts for many ellipses at once.

    Same model and order-fallback ladder as `local_poly_fit`, evaluated
    over a shared (2*reach+1)^2 offset box with zero weight outside each
    ellipse and outside the image.  Returns (theta0, effective_order).
    """
    count = len(rows)
    theta0 = np.empty(count)
    orders = np.zeros(count, dtype=np.int8)
    if count == 0:
        return theta0, orders
    h, w = img.shape
    padded = np.pad(img.data, reach, mode="constant", constant_values=0.0)
    inb = np.zeros(padded.shape, dtype=bool)
    inb[reach : reach + h, reach : reach + w] = True
    oint = np.arange(-reach, reach + 1)
    dri = np.repeat(oint, 2 * reach + 1)
    dci = np.tile(oint, 2 * reach + 1)
    dr = dri.astype(np.float64)[None, :]
    dc = dci.astype(np.float64)[None, :]
    m = dri.size
    chunk = max(1, (1 << 22) // (m * _ORDER_BASIS[spec.order]))
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        ridx = rows[lo:hi, None] + reach + dri[None, :]
        cidx = cols[lo:hi, None] + reach + dci[None, :]
        z = padded[ridx, cidx]
        ok = inb[ridx, cidx]
        a_i = aa[lo:hi, None]
        b_i = bb[lo:hi, None]
        u_r = ur[lo:hi, None]
        u_c = uc[lo:hi, None]
        um = (dr * u_r + dc * u_c) / b_i
        up = (-dr * u_c + dc * u_r) / a_i
        wgt = np.where(ok, _weights_from_r2(um * um + up * up, spec.shape), 0.0)
        scale = np.maximum(a_i, b_i)
        sx = dc / scale
        sy = dr / scale
        basis_cols = [np.broadcast_to(1.0, sx.shape)]
        if spec.order >= 1:
            basis_cols += [sx, sy]
        if spec.order >= 2:
            basis_cols += [sx * sx, sx * sy, sy * sy]
        x = np.stack(np.broadcast_arrays(*basis_cols), axis=2)
        xw = x * wgt[:, :, None]
        gram = np.einsum("pmf,pmg->pfg", xw, x)
        rhs = np.einsum("pmf,pm->pf", xw, z)
        npts = (wgt > 0).sum(axis=1)
        t0c = np.empty(hi - lo)
        oc = np.zeros(hi - lo, dtype=np.int8)
        remaining = np.ones(hi - lo, dtype=bool)
        for order in range(spec.order, 0, -1):
            nb = _ORDER_BASIS[order]
            sub = gram[:, :nb, :nb]
            eigs = np.linalg.eigvalsh(sub)
            safe_min = np.where(eigs[:, 0] > 0, eigs[:, 0], 1.0)
            cond = np.sqrt(eigs[:, -1] / safe_min)
            good = remaining & (npts >= nb) & (eigs[:, 0] > 0) & (cond <= CONDITION_LIMIT)
            if good.any():
                sol = np.linalg.solve(sub[good], rhs[good, :nb, None])
                t0c[good] = sol[:, 0, 0]
                oc[good] = order
                remaining &= ~good
        if remaining.any():
            t0c[remaining] = rhs[remaining, 0] / gram[remaining, 0, 0]
        theta0[lo:hi] = t0c
        orders[lo:hi] = oc
    return theta0, orders


def _batch_ellipse_axes(d1, d2, p1r, p1c, pix_r, pix_c, gamma, max_axis):
    """Vectorized mirror of `build_ellipse`: semi-axes, minor direction."""
    ur = (p1r - pix_r) / d1
    uc = (p1c - pix_c) / d1
    b = np.minimum(np.minimum(np.maximum(d1 - gamma, 1.0), max_axis), d1)
    a = np.where(
        np.isnan(d2),
        max_axis,
        np.minimum(np.minimum(np.maximum(d2 - gamma, 1.0), max_axis), d2),
    )
    swap = a < b
    a_fin = np.where(swap, b, a)
    b_fin = np.where(swap, a, b)
    ur_fin = np.where(swap, -uc, ur)
    uc_fin = np.where(swap, ur, uc)
    return a_fin, b_fin, ur_fin, uc_fin


def _batch_second_distance(points, pix_r, pix_c, p1r, p1c, d1, radius):
    """Distance to the nearest edge pixel inside each pixel's strip, NaN
    where the strip holds none within `radius`.

    Vectorized equivalent of `EdgeDistanceIndex.nearest_in_strip` (points
    are lexicographically sorted, so first minima share its tie-break).
    """
    count = len(pix_r)
    out = np.full(count, np.nan)
    if count == 0 or len(points) == 0:
        return out
    pr = points[:, 0]
    pc = points[:, 1]
    ur = (p1r - pix_r) / d1
    uc = (p1c - pix_c) / d1
    big = np.iinfo(np.int64).max
    r2 = radius * radius
    chunk = max(1, (1 << 22) // len(points))
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        dr = pr[None, :] - pix_r[lo:hi, None]
        dc = pc[None, :] - pix_c[lo:hi, None]
        dd = dr * dr + dc * dc
        proj = dr * ur[lo:hi, None] + dc * uc[lo:hi, None]
        exclude = (
            (dd > r2)
            | (np.abs(proj) >= d1[lo:hi, None])
            | ((pr[None, :] == p1r[lo:hi, None]) & (pc[None, :] == p1c[lo:hi, None]))
        )
        dd = np.where(exclude, big, dd)
        idx = np.argmin(dd, axis=1)
        best = dd[np.arange(hi - lo), idx]
        ok = best < big
        out[lo:hi][ok] = np.sqrt(best[ok].astype(np.float64))
    return out


def _box3(img: ImageGrid) -> np.ndarray:
    """Plain 3x3 mean with the window clipped at image borders."""
    h, w = img.shape
    acc = np.zeros((h, w))
    cnt = np.zeros((h, w))
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            rs = slice(max(dr, 0), h + min(dr, 0))
            rd = slice(max(-dr, 0), h + min(-dr, 0))
            cs = slice(max(dc, 0), w + min(dc, 0))
            cd = slice(max(-dc, 0), w + min(-dc, 0))
            acc[rd, cd] += img.data[rs, cs]
            cnt[rd, cd] += 1.0
    return acc / cnt


class _Runner:
    def __init__(self, img: ImageGrid, params: DenoiseParams, threads: int, collect: bool):
        self.img = img
        self.params = params
        self.threads = threads
        self.out = np.empty(img.shape)
        self.debug = DenoiseDebug.empty(img.shape) if collect else None

    # -- kernel smoothing ------------------------------------------------

    def kernel_everywhere(self) -> None:
        """Capped circles at every pixel: the no-edge / kernel-only path."""
        img, params = self.img, self.params
        h, w = img.shape
        reach = int(math.ceil(params.max_axis))
        offs, row_w, order = _circle_filter(params.max_axis, params.kernel)
        rows, cols = np.indices((h, w))
        interior = (
            (rows >= reach) & (rows < h - reach) & (cols >= reach) & (cols < w - reach)
        )
        ir = rows[interior]
        ic = cols[interior]
        fast = np.empty(len(ir))
        _apply_circle_filter(img.data, ir, ic, offs, row_w, fast)
        self.out[ir, ic] = fast
        if self.debug is not None:
            self.debug.a[interior] = params.max_axis
            self.debug.b[interior] = params.max_axis
            self.debug.effective_order[interior] = order
        br = rows[~interior]
        bc = cols[~interior]
        circ = np.full(len(br), params.max_axis)
        vals, orders = _batch_kernel_fit(
            img, br, bc, circ, circ, np.zeros(len(br)), np.ones(len(br)), params.kernel, reach
        )
        self.out[br, bc] = vals
        if self.debug is not None:
            self.debug.a[br, bc] = circ
            self.debug.b[br, bc] = circ
            self.debug.effective_order[br, bc] = orders

    def kernel_custom(self, pix_r, pix_c, d1, p1r, p1c, index: EdgeDistanceIndex) -> None:
        """Batched adaptive ellipses for pixels near (but not within gamma
        of) detected edges."""
        img, params = self.img, self.params
        d2s = _batch_second_distance(
            index.points, pix_r, pix_c, p1r, p1c, d1, params.max_axis + params.gamma
        )
        aa, bb, ur, uc = _batch_ellipse_axes(
            d1, d2s, p1r, p1c, pix_r, pix_c, params.gamma, params.max_axis
        )
        reach = int(math.ceil(params.max_axis))
        vals, orders = _batch_kernel_fit(img, pix_r, pix_c, aa, bb, ur, uc, params.kernel, reach)
        self.out[pix_r, pix_c] = vals
        if self.debug is not None:
            self.debug.d2[pix_r, pix_c] = d2s
            self.debug.a[pix_r, pix_c] = aa
            self.debug.b[pix_r, pix_c] = bb
            self.debug.effective_order[pix_r, pix_c] = orders

    # -- cluster smoothing -----------------------------------------------

    def cluster_pixels(self, pix_r, pix_c, cluster_params: ClusterParams) -> None:
        engine = ClusterEngine(self.img, cluster_params)
        vals = np.empty(len(pix_r))

        def work(lo, hi):
            for i in range(lo, hi):
                vals[i] = engine.smooth((int(pix_r[i]), int(pix_c[i])))

        _parallel_chunks(len(pix_r), self.threads, work)
        self.out[pix_r, pix_c] = vals
        if self.debug is not None:
            self.debug.branch[pix_r, pix_c] = BRANCH_CLUSTER

    # -- mode drivers ------------------------------------------------------

    def run(self) -> None:
        params = self.params
        if params.mode == "box3":
            self.out[:] = _box3(self.img)
            if self.debug is not None:
                self.debug.branch[:] = BRANCH_BOX3
            return
        if params.mode == "kernel-only":
            self.kernel_everywhere()
            return
        sigma = _resolved_sigma(self.img, params)
        cluster_params = dataclasses.replace(params.cluster, sigma_hat=sigma)
        h, w = self.img.shape
        if params.mode == "cluster-only":
            rows, cols = np.indices((h, w))
            self.cluster_pixels(rows.ravel(), cols.ravel(), cluster_params)
            return
        # integrated
        edges = detect_edges(
            self.img, EdgeDetectParams(params.k, params.alpha, sigma_override=sigma)
        )
        if not edges.flags.any():
            self.kernel_everywhere()
            return
        index = build_index(edges)
        d1, p1r, p1c = index.nearest_field((h, w))
        if self.debug is not None:
            self.debug.d1[:] = d1
        near = d1 < params.gamma
        reach = int(math.ceil(params.max_axis))
        rows, cols = np.indices((h, w))
        interior = (
            (rows >= reach) & (rows < h - reach) & (cols >= reach) & (cols < w - reach)
        )
        deep = ~near & interior & (d1 >= params.gamma + params.max_axis)
        custom = ~near & ~deep

        offs, row_w, order = _circle_filter(params.max_axis, params.kernel)
        fast = np.empty(int(deep.sum()))
        _apply_circle_filter(self.img.data, rows[deep], cols[deep], offs, row_w, fast)
        self.out[deep] = fast
        if self.debug is not None:
            self.debug.a[deep] = params.max_axis
            self.debug.b[deep] = params.max_axis
            self.debug.effective_order[deep] = order
        self.kernel_custom(
            rows[custom], cols[custom], d1[custom], p1r[custom], p1c[custom], index
        )
        self.cluster_pixels(rows[near], cols[near], cluster_params)


def _run(img: ImageGrid, params: DenoiseParams, threads: int, collect: bool):
    runner = _Runner(img, params, threads, collect)
    runner.run()
    if not np.isfinite(runner.out).all():
        raise RuntimeError("denoiser produced a non-finite intensity")
    return ImageGrid(runner.out), runner.debug


def denoise(img: ImageGrid, params: DenoiseParams, threads: int = 0) -> ImageGrid:
    """Denoise `img`; the result is bitwise independent of `threads`
    (0 = one worker per CPU)."""
    out, _ = _run(img, params, threads, collect=False)
    return out


def denoise_debug(
    img: ImageGrid, params: DenoiseParams, threads: int = 0
) -> tuple[ImageGrid, DenoiseDebug]:
    """Like `denoise` but also returns the per-pixel dispatch table."""
    out, debug = _run(img, params, threads, collect=True)
    return out, debug
