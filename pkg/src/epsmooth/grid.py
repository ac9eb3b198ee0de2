"""Image grids, synthetic test scenes, noise injection, and error metrics.

Intensities are kept as float64 end to end; quantisation to bytes happens
only when a grid is written to disk.  Pixels are addressed as (row, col)
and map to design coordinates x = (col + 0.5) / n, y = (row + 0.5) / n,
with n = max(height, width) fixing the grid pitch.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = ["ImageGrid", "NoiseSpec", "SceneSpec", "synth", "add_noise", "rmse"]

_MAX_SEED = 2**64

# Square-circle scene geometry, in normalized [0,1] coordinates.  The disk is
# painted last so its curved edge cuts across the square's corner.
_BACKGROUND = 100.0
_SQUARE_LO, _SQUARE_HI, _SQUARE_LEVEL = 0.15, 0.55, 180.0
_DISK_CX, _DISK_CY, _DISK_R, _DISK_LEVEL = 0.7, 0.7, 0.35, 60.0


class ImageGrid:
    """A rectangular grid of real-valued intensities on the 0-255 scale.

    Values outside [0, 255] are permitted (noise is never clipped); NaN and
    infinity are not.  The pixel buffer is frozen at construction so grids
    can be shared between threads without defensive copies.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("image data must be a non-empty 2-d array")
        if not np.isfinite(arr).all():
            raise ValueError("image intensities must all be finite")
        arr.flags.writeable = False
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def full(cls, height: int, width: int, value: float) -> "ImageGrid":
        return cls(np.full((height, width), float(value)))

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"ImageGrid({self.height}x{self.width})"


@dataclass(frozen=True)
class NoiseSpec:
    """Additive i.i.d. Gaussian noise: zero mean, standard deviation `sd`."""

    sd: float
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.sd) and self.sd >= 0):
            raise ValueError(f"noise sd must be finite and >= 0, got {self.sd}")
        if not (0 <= int(self.seed) < _MAX_SEED):
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class SceneSpec:
    """A deterministic synthetic scene of size n x n.

    Kinds:
      square-circle          background 100, square [0.15,0.55]^2 at 180,
                             disk r=0.35 at (0.7,0.7) painted last at 60
      constant               uniform intensity `level`
      step                   columns < `column` at `low`, the rest at `high`
    """

    kind: str
    n: int
    level: float = 100.0
    column: int | None = None
    low: float = 100.0
    high: float = 180.0

    def __post_init__(self):
        if self.kind not in ("square-circle", "constant", "step"):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.n < 16:
            raise ValueError(f"scene size must be at least 16, got {self.n}")
        if self.kind == "step":
            if self.column is None or not (0 < self.column < self.n):
                raise ValueError("step column must lie strictly inside the image")

    @classmethod
    def square_circle(cls, n: int) -> "SceneSpec":
        return cls("square-circle", n)

    @classmethod
    def constant(cls, n: int, level: float = 100.0) -> "SceneSpec":
        return cls("constant", n, level=float(level))

    @classmethod
    def step(cls, n: int, column: int, low: float = 100.0, high: float = 180.0) -> "SceneSpec":
        return cls("step", n, column=int(column), low=float(low), high=float(high))

    @classmethod
    def parse(cls, text: str, n: int) -> "SceneSpec":
        """Parse a scene string such as ``square-circle``, ``constant(120)``,
        or ``step(32,100,180)``."""
        text = text.strip()
        if text == "square-circle":
            return cls.square_circle(n)
        m = re.fullmatch(r"constant\(([^)]*)\)", text)
        if m:
            return cls.constant(n, float(m.group(1)))
        m = re.fullmatch(r"step\(([^)]*)\)", text)
        if m:
            parts = [p.strip() for p in m.group(1).split(",")]
            if len(parts) != 3:
                raise ValueError("step scene takes (column, low, high)")
            return cls.step(n, int(parts[0]), float(parts[1]), float(parts[2]))
        raise ValueError(f"cannot parse scene {text!r}")


def synth(spec: SceneSpec) -> ImageGrid:
    """Render a noiseless scene; pixel value = region intensity at the
    pixel center ((col+0.5)/n, (row+0.5)/n)."""
    n = spec.n
    if spec.kind == "constant":
        return ImageGrid.full(n, n, spec.level)
    if spec.kind == "step":
        img = np.full((n, n), spec.low)
        img[:, spec.column:] = spec.high
        return ImageGrid(img)
    # square-circle
    coords = (np.arange(n) + 0.5) / n
    x = coords[np.newaxis, :]
    y = coords[:, np.newaxis]
    img = np.full((n, n), _BACKGROUND)
    in_square = (
        (x >= _SQUARE_LO) & (x <= _SQUARE_HI) & (y >= _SQUARE_LO) & (y <= _SQUARE_HI)
    )
    img[np.broadcast_to(in_square, (n, n))] = _SQUARE_LEVEL
    in_disk = (x - _DISK_CX) ** 2 + (y - _DISK_CY) ** 2 <= _DISK_R**2
    img[in_disk] = _DISK_LEVEL
    return ImageGrid(img)


def add_noise(img: ImageGrid, noise: NoiseSpec) -> ImageGrid:
    """Add seeded i.i.d. Gaussian noise.  The same (image, spec) pair always
    produces bitwise-identical output; values are not clipped."""
    rng = np.random.default_rng(int(noise.seed))
    return ImageGrid(img.data + noise.sd * rng.standard_normal(img.shape))


def rmse(a: ImageGrid, b: ImageGrid) -> float:
    """Root mean squared difference over pixels (a scaled Euclidean norm)."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    return float(np.sqrt(np.mean(diff * diff)))
