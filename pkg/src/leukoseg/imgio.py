"""Image file I/O: PNG and binary PPM (P6) in, PNG and PGM (P5) out.

All channels are 8-bit and round-trip bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imagecore import as_mask

RGB_SUFFIXES = {".png", ".ppm"}


def read_rgb(path: str | Path) -> np.ndarray:
    """Read a PNG or binary PPM file as an (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def read_grey(path: str | Path) -> np.ndarray:
    """Read a single-channel image (PNG or PGM) as (H, W) uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def read_mask(path: str | Path) -> np.ndarray:
    """Read a mask file and snap it to strict {0, 255} values."""
    return as_mask(read_grey(path) > 127)


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write an RGB (H, W, 3) or grey (H, W) uint8 array.

    The format follows the suffix: .png, .ppm (P6, RGB), .pgm (P5, grey).
    """
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    mode = "RGB" if arr.ndim == 3 else "L"
    Image.fromarray(arr, mode=mode).save(path)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a binary mask as an 8-bit grey file (PNG or PGM)."""
    write_image(path, as_mask(np.asarray(mask) > 0))
