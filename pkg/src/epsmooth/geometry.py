"""Neighborhood geometry: nearest-edge queries and adaptive ellipses.

The index is a uniform bucket grid over the flagged pixels.  All queries
are exact nearest-neighbor searches in Euclidean pixel distance, with ties
broken by smallest row, then smallest column.  Distances throughout this
module are in pixel units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .edges import EdgeMap

__all__ = [
    "Ellipse",
    "EdgeDistanceIndex",
    "build_index",
    "nearest_edge",
    "second_point",
    "build_ellipse",
]

Point = tuple[int, int]

# Smallest admissible semi-axis; keeps degenerate ellipses (nearest edge at
# exactly the dispatch distance) well-defined while still excluding edges.
_MIN_SEMIAXIS = 1.0


@dataclass(frozen=True)
class Ellipse:
    """Adaptive neighborhood: center, semi-axes a >= b, minor direction.

    `u_minor` points from the center toward the nearest edge pixel; the
    major axis runs perpendicular to it.  A point q lies inside when
    ((q-c).u_minor / b)^2 + ((q-c).u_perp / a)^2 <= 1.
    """

    center: tuple[float, float]  # (row, col)
    a: float
    b: float
    u_minor: tuple[float, float]

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError(f"semi-axes must satisfy a >= b > 0, got a={self.a}, b={self.b}")
        norm = math.hypot(*self.u_minor)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("u_minor must be a unit vector")

    @property
    def u_perp(self) -> tuple[float, float]:
        return (-self.u_minor[1], self.u_minor[0])

    def scaled_r2(self, q) -> float:
        """Squared elliptical radius of q; inside means <= 1."""
        dr = q[0] - self.center[0]
        dc = q[1] - self.center[1]
        um = (dr * self.u_minor[0] + dc * self.u_minor[1]) / self.b
        up = (dr * self.u_perp[0] + dc * self.u_perp[1]) / self.a
        return um * um + up * up

    def contains(self, q) -> bool:
        return self.scaled_r2(q) <= 1.0


class EdgeDistanceIndex:
    """Exact nearest-neighbor structure over edge-pixel coordinates.

    Points are kept sorted by (row, col) so that first-minimum scans
    implement the tie-break for free.
    """

    def __init__(self, points: np.ndarray, cell: int | None = None):
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        self.points = pts[order]
        if cell is None:
            cell = 8 if len(pts) else 1
        self.cell = int(cell)
        self._buckets: dict[tuple[int, int], np.ndarray] = {}
        self._key_lo = (0, 0)
        self._key_hi = (0, 0)
        keys = self.points // self.cell
        if len(self.points):
            flat = keys[:, 0] * (2**32) + keys[:, 1]
            for v in np.unique(flat):
                mask = flat == v
                self._buckets[(int(keys[mask][0, 0]), int(keys[mask][0, 1]))] = self.points[mask]
            self._key_lo = (int(keys[:, 0].min()), int(keys[:, 1].min()))
            self._key_hi = (int(keys[:, 0].max()), int(keys[:, 1].max()))

    def __len__(self) -> int:
        return len(self.points)

    def _bucket_min_dist2(self, key, r, c) -> int:
        r0, c0 = key[0] * self.cell, key[1] * self.cell
        dr = max(r0 - r, r - (r0 + self.cell - 1), 0)
        dc = max(c0 - c, c - (c0 + self.cell - 1), 0)
        return dr * dr + dc * dc

    def nearest(self, p: Point) -> tuple[Point, float] | None:
        """Nearest edge pixel to p, or None when the index is empty."""
        if not len(self.points):
            return None
        r, c = int(p[0]), int(p[1])
        cs = self.cell
        pr, pc = r // cs, c // cs
        best = None  # (dist2, row, col)
        ring = 0
        max_ring = (
            max(
                abs(pr - self._key_lo[0]),
                abs(pr - self._key_hi[0]),
                abs(pc - self._key_lo[1]),
                abs(pc - self._key_hi[1]),
            )
            + 1
        )
        while True:
            if best is not None and (ring - 1) * cs > 0 and ((ring - 1) * cs) ** 2 > best[0]:
                break
            if ring > max_ring and best is not None:
                break
            for key in self._ring_keys(pr, pc, ring):
                pts = self._buckets.get(key)
                if pts is None:
                    continue
                if best is not None and self._bucket_min_dist2(key, r, c) > best[0]:
                    continue
                dd = (pts[:, 0] - r) ** 2 + (pts[:, 1] - c) ** 2
                i = int(np.argmin(dd))  # first minimum = smallest (row, col)
                cand = (int(dd[i]), int(pts[i, 0]), int(pts[i, 1]))
                if best is None or cand < best:
                    best = cand
            ring += 1
        return (best[1], best[2]), math.sqrt(best[0])

    @staticmethod
    def _ring_keys(pr, pc, d):
        if d == 0:
            yield (pr, pc)
            return
        for cc in range(pc - d, pc + d + 1):
            yield (pr - d, cc)
            yield (pr + d, cc)
        for rr in range(pr - d + 1, pr + d):
            yield (rr, pc - d)
            yield (rr, pc + d)

    def nearest_in_strip(
        self, p: Point, p1: Point, radius: float
    ) -> tuple[Point, float] | None:
        """Nearest edge pixel to p within the band through p perpendicular
        to the segment p-p1, excluding p1 itself.

        The band's half-width equals |p-p1|, the smallest width guaranteed
        to contain any admissible ellipse.  The search stops at `radius`.
        """
        if not len(self.points):
            return None
        r, c = int(p[0]), int(p[1])
        d1 = math.hypot(p1[0] - r, p1[1] - c)
        if d1 == 0:
            raise ValueError("p1 must differ from p")
        ur = (p1[0] - r) / d1
        uc = (p1[1] - c) / d1
        rad = int(math.ceil(radius))
        cs = self.cell
        best = None
        for kr in range((r - rad) // cs, (r + rad) // cs + 1):
            for kc in range((c - rad) // cs, (c + rad) // cs + 1):
                pts = self._buckets.get((kr, kc))
                if pts is None:
                    continue
                if self._bucket_min_dist2((kr, kc), r, c) > radius * radius:
                    continue
                dr = pts[:, 0] - r
                dc = pts[:, 1] - c
                dd = dr * dr + dc * dc
                proj = dr * ur + dc * uc
                keep = (
                    (dd <= radius * radius)
                    & (np.abs(proj) < d1)
                    & ~((pts[:, 0] == p1[0]) & (pts[:, 1] == p1[1]))
                )
                if not keep.any():
                    continue
                sub = pts[keep]
                sdd = dd[keep]
                i = int(np.argmin(sdd))
                cand = (int(sdd[i]), int(sub[i, 0]), int(sub[i, 1]))
                if best is None or cand < best:
                    best = cand
        if best is None:
            return None
        return (best[1], best[2]), math.sqrt(best[0])

    def nearest_field(self, shape: tuple[int, int]):
        """Nearest edge pixel for every pixel of an image at once.

        Returns (dist, rows, cols) full-size arrays; equivalent to calling
        `nearest` per pixel, chunked for speed.  Requires a non-empty index.
        """
        if not len(self.points):
            raise ValueError("nearest_field needs a non-empty index")
        h, w = shape
        # int32 is exact here: squared pixel distances stay below 2^31 for
        # any image narrower than ~32k pixels.
        pr = self.points[:, 0].astype(np.int32)
        pc = self.points[:, 1].astype(np.int32)
        rows = np.repeat(np.arange(h, dtype=np.int32), w)
        cols = np.tile(np.arange(w, dtype=np.int32), h)
        out_d2 = np.empty(h * w, dtype=np.int32)
        out_i = np.empty(h * w, dtype=np.int64)
        chunk = max(1, (1 << 23) // max(1, len(self.points)))
        for lo in range(0, h * w, chunk):
            hi = min(lo + chunk, h * w)
            dr = rows[lo:hi, None] - pr[None, :]
            dc = cols[lo:hi, None] - pc[None, :]
            d2 = dr * dr + dc * dc
            idx = np.argmin(d2, axis=1)  # first minimum = lexicographic tie-break
            out_i[lo:hi] = idx
            out_d2[lo:hi] = d2[np.arange(hi - lo), idx]
        dist = np.sqrt(out_d2.astype(np.float64)).reshape(h, w)
        return dist, self.points[out_i, 0].reshape(h, w), self.points[out_i, 1].reshape(h, w)


def build_index(edges: EdgeMap | np.ndarray) -> EdgeDistanceIndex:
    """Index the flagged pixels of an edge map (or a boolean mask)."""
    flags = edges.flags if isinstance(edges, EdgeMap) else np.asarray(edges, dtype=bool)
    return EdgeDistanceIndex(np.argwhere(flags))


def nearest_edge(index: EdgeDistanceIndex, p: Point) -> tuple[Point, float] | None:
    return index.nearest(p)


def second_point(
    index: EdgeDistanceIndex, p: Point, p1: Point, search_radius: float
) -> tuple[Point, float] | None:
    """Nearest edge pixel in the strip perpendicular to p-p1 (see
    `EdgeDistanceIndex.nearest_in_strip`); None when the strip holds no
    other edge pixel within `search_radius`."""
    return index.nearest_in_strip(p, p1, search_radius)


def build_ellipse(
    p: Point,
    d1: float,
    d2: float | None,
    u_minor: tuple[float, float],
    gamma: float,
    max_axis: float,
    full_axis_lengths: bool = False,
) -> Ellipse:
    """Ellipse centered at p clearing the nearest edges by `gamma`.

    The minor semi-axis is d1 - gamma, the major semi-axis (d2 or inf) -
    gamma, both capped at `max_axis`; with `full_axis_lengths` the stated
    clearances are read as full axis lengths instead and halved.  Semi-axes
    are floored at one pixel (never beyond the edge distances themselves),
    so no flagged pixel can fall strictly inside.
    """
    if d1 < gamma:
        raise ValueError(f"nearest edge distance {d1} is inside the gamma clearance {gamma}")
    raw_b = d1 - gamma
    raw_a = math.inf if d2 is None else d2 - gamma
    if full_axis_lengths:
        raw_b /= 2.0
        raw_a /= 2.0
    b = min(max(raw_b, _MIN_SEMIAXIS), max_axis, d1)
    a = min(max(raw_a, _MIN_SEMIAXIS), max_axis, d2 if d2 is not None else math.inf)
    u = u_minor
    if a < b:
        a, b = b, a
        u = (-u[1], u[0])
    return Ellipse(center=(float(p[0]), float(p[1])), a=a, b=b, u_minor=u)
