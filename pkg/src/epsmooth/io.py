"""Grayscale image file I/O: binary PGM (P5) and PNG.

Grids hold floats; writing clamps to [0, 255] and rounds to the nearest
integer.  PGM is handled with a bit-exact built-in codec; PNG goes through
Pillow and is converted to grayscale by luminance on read.
"""

from __future__ import annotations

import numpy as np

from .grid import ImageGrid

__all__ = ["read_image", "write_image"]

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def read_image(path) -> ImageGrid:
    """Load a PGM (P5) or PNG file as an intensity grid.

    The format is sniffed from the file's magic bytes, not its extension.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"P5":
        return _decode_pgm(blob)
    if blob[: len(_PNG_SIGNATURE)] == _PNG_SIGNATURE:
        return _decode_png(blob)
    raise ValueError(f"unsupported image format in {path!r} (expected P5 PGM or PNG)")


def write_image(img: ImageGrid, path) -> None:
    """Write a grid to `path`; the format is chosen by extension
    (.pgm/.pnm -> binary PGM, .png -> PNG)."""
    name = str(path).lower()
    if name.endswith((".pgm", ".pnm")):
        with open(path, "wb") as fh:
            fh.write(_encode_pgm(img))
    elif name.endswith(".png"):
        _write_png(img, path)
    else:
        raise ValueError(f"unsupported output format for {path!r} (use .pgm or .png)")


def _quantize(img: ImageGrid) -> np.ndarray:
    return np.clip(np.rint(img.data), 0, 255).astype(np.uint8)


def _encode_pgm(img: ImageGrid) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + _quantize(img).tobytes()


def _decode_pgm(blob: bytes) -> ImageGrid:
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(blob):
            ch = blob[pos]
            if ch == ord("#"):
                while pos < len(blob) and blob[pos] not in b"\r\n":
                    pos += 1
            elif ch in b" \t\r\n\x0b\x0c":
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and blob[pos] not in b" \t\r\n\x0b\x0c#":
            pos += 1
        if start == pos:
            raise ValueError("malformed PGM: truncated header")
        return blob[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise ValueError(f"malformed PGM: bad magic {magic!r}")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ValueError("malformed PGM: non-numeric header field") from exc
    if width <= 0 or height <= 0:
        raise ValueError("malformed PGM: non-positive dimensions")
    if not (0 < maxval < 256):
        raise ValueError(f"unsupported PGM maxval {maxval} (only 8-bit supported)")
    pos += 1  # exactly one whitespace byte separates header and raster
    raster = blob[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError("malformed PGM: truncated raster")
    data = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return ImageGrid(data.astype(np.float64))


def _decode_png(blob: bytes) -> ImageGrid:
    import io as _io

    from PIL import Image

    with Image.open(_io.BytesIO(blob)) as im:
        if im.mode != "L":
            im = im.convert("L")  # ITU-R 601-2 luminance
        data = np.asarray(im, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("PNG did not decode to a single-channel image")
    return ImageGrid(data)


def _write_png(img: ImageGrid, path) -> None:
    from PIL import Image

    Image.fromarray(_quantize(img), mode="L").save(path, format="PNG")
