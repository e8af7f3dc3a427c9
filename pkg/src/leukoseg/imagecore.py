"""Raster substrate shared by the whole package.

Images are numpy arrays: RGB images are ``(H, W, 3)`` uint8, single-channel
images ``(H, W)`` uint8, and binary masks ``(H, W)`` uint8 with values in
``{0, 255}``.  Points and centroids are ``(x, y)`` with ``x`` the column and
``y`` the row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

FOREGROUND = 255

# 8-neighbourhood in clockwise order on screen (y grows downward),
# starting East.  Used by the Moore boundary tracer.
_DIRS8 = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

_STRUCT8 = np.ones((3, 3), dtype=bool)


class DegenerateImageError(ValueError):
    """Raised when an image has no usable grey-level structure."""


def round_half_up(x):
    """Round to nearest integer with .5 going up (paperwork-stable ties)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def as_mask(values: np.ndarray) -> np.ndarray:
    """Coerce a boolean/uint8 array to a strict {0, 255} uint8 mask."""
    out = np.zeros(values.shape, dtype=np.uint8)
    out[np.asarray(values) > 0] = FOREGROUND
    return out


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch: {a.shape[:2]} vs {b.shape[:2]}")


def rgb_to_hsi(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convert an RGB image to 8-bit H, S, I channel images.

    Classic geometric HSI: hue from the arccos formula (degrees in
    [0, 360), rescaled to [0, 255]), saturation 1 - 3*min/(R+G+B)
    (rescaled to [0, 255]), intensity (R+G+B)/3.  Hue is 0 wherever
    saturation is 0 (grey pixels have no defined hue).
    """
    rgb = np.asarray(img, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) RGB image")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    total = r + g + b

    i = total / 3.0
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(total > 0, 1.0 - 3.0 * np.minimum(np.minimum(r, g), b) / total, 0.0)

    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.clip(np.where(den > 0, num / den, 1.0), -1.0, 1.0)
    theta = np.degrees(np.arccos(cosang))
    h = np.where(b > g, 360.0 - theta, theta)
    h = np.where((den > 0) & (s > 0), h, 0.0)

    h8 = round_half_up(h * (255.0 / 360.0)).astype(np.uint8)
    s8 = round_half_up(np.clip(s, 0.0, 1.0) * 255.0).astype(np.uint8)
    i8 = round_half_up(np.clip(i, 0.0, 255.0)).astype(np.uint8)
    return h8, s8, i8


def hsg_raw(h: np.ndarray, s: np.ndarray, g: np.ndarray,
            w1: float = 0.4, w2: float = 0.6, w3: float = 1.0) -> np.ndarray:
    """Per-pixel weighted (H, S) / G ratio, before rescaling.

    Pixels with G == 0 take the sentinel value 255; all ratios are capped
    at 255 so the sentinel is the maximal raw value.
    """
    _check_same_shape(h, s)
    _check_same_shape(h, g)
    hf = np.asarray(h, dtype=np.float64)
    sf = np.asarray(s, dtype=np.float64)
    gf = np.asarray(g, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        raw = np.where(gf > 0, (w1 * hf + w2 * sf) / (w3 * gf), 255.0)
    return np.minimum(raw, 255.0)


def hsg_enhance(h: np.ndarray, s: np.ndarray, g: np.ndarray,
                w1: float = 0.4, w2: float = 0.6, w3: float = 1.0) -> np.ndarray:
    """Hue/saturation-to-green enhancement image, min-max rescaled to uint8.

    Brightens stained nuclei: they score high in H and S and low in G, so
    the ratio is large exactly there.  A constant raw image maps to all
    zeros (min == max).
    """
    raw = hsg_raw(h, s, g, w1, w2, w3)
    lo = float(raw.min())
    hi = float(raw.max())
    if hi <= lo:
        return np.zeros(raw.shape, dtype=np.uint8)
    scaled = (raw - lo) * (255.0 / (hi - lo))
    return round_half_up(scaled).astype(np.uint8)


def histogram(img: np.ndarray, region: np.ndarray | None = None) -> np.ndarray:
    """256-bin grey-level histogram, optionally restricted to a mask region."""
    img = np.asarray(img)
    if region is not None:
        _check_same_shape(img, region)
        values = img[np.asarray(region) > 0]
    else:
        values = img.ravel()
    return np.bincount(values, minlength=256).astype(np.int64)


def apply_threshold(img: np.ndarray, t: int, keep: str = "above") -> np.ndarray:
    """Binarize with a strict threshold.

    ``keep="above"`` sets pixels with value > t to 255, ``keep="below"``
    sets pixels with value < t to 255.  Pixels equal to t always map to 0.
    """
    img = np.asarray(img)
    if keep == "above":
        return as_mask(img > t)
    if keep == "below":
        return as_mask(img < t)
    raise ValueError(f"keep must be 'above' or 'below', got {keep!r}")


@dataclass(frozen=True)
class ShapeStats:
    """Area, contour-pixel perimeter, centroid and circularity of a blob."""

    area: int
    perimeter: int
    centroid: tuple[float, float]
    circularity: float


@dataclass(frozen=True)
class Component:
    """One 8-connected foreground component with its outer contour."""

    mask: np.ndarray            # full-frame bool
    contour: np.ndarray         # (L, 2) int32 (x, y), closed outer boundary
    stats: ShapeStats
    bbox: tuple[int, int, int, int]   # x1, y1, x2, y2 inclusive


def circularity(area: int, perimeter: int) -> float:
    """4*pi*S/L**2 clamped to [0, 1]; 0 for empty shapes."""
    if area <= 0 or perimeter <= 0:
        return 0.0
    return min(1.0, 4.0 * np.pi * area / float(perimeter) ** 2)


def trace_contour(component_mask: np.ndarray) -> np.ndarray:
    """Trace the outer boundary of a single component by radial sweep.

    Returns the ordered closed boundary as an (L, 2) array of (x, y)
    pixels, counter-clockwise (positive shoelace area in (x, y)).  A
    single isolated pixel yields a length-1 contour.
    """
    fg = np.asarray(component_mask) > 0
    ys, xs = np.nonzero(fg)
    if ys.size == 0:
        raise ValueError("cannot trace an empty component")
    start_i = np.lexsort((xs, ys))[0]
    sx, sy = int(xs[start_i]), int(ys[start_i])
    h, w = fg.shape

    def is_fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and fg[y, x]

    # Scan clockwise from just past the backtrack; the start pixel is the
    # topmost-leftmost one, so its W neighbour (index 4) is background.
    # The walk (pixel, backtrack) is deterministic, so the first repeated
    # state closes the boundary cycle exactly.
    cur = (sx, sy)
    prev_dir = 4
    seen: dict[tuple[int, int, int], int] = {}
    path: list[tuple[int, int]] = []
    while (cur[0], cur[1], prev_dir) not in seen:
        seen[(cur[0], cur[1], prev_dir)] = len(path)
        path.append(cur)
        found = None
        for k in range(1, 9):
            d = (prev_dir + k) % 8
            dx, dy = _DIRS8[d]
            if is_fg(cur[0] + dx, cur[1] + dy):
                found = d
                break
        if found is None:
            return np.array(path, dtype=np.int32)   # isolated pixel
        dx, dy = _DIRS8[found]
        cur = (cur[0] + dx, cur[1] + dy)
        # New backtrack: the last background neighbour examined before the
        # move, expressed relative to the new pixel.  It differs for
        # straight and diagonal moves.
        prev_dir = (found + 6) % 8 if found % 2 == 0 else (found + 5) % 8
    cycle_start = seen[(cur[0], cur[1], prev_dir)]
    return np.array(path[cycle_start:], dtype=np.int32)


def shape_stats(component_mask: np.ndarray, contour: np.ndarray | None = None) -> ShapeStats:
    """Compute area, perimeter (contour pixel count), centroid, circularity."""
    fg = np.asarray(component_mask) > 0
    ys, xs = np.nonzero(fg)
    if ys.size == 0:
        raise ValueError("empty component has no shape statistics")
    if contour is None:
        contour = trace_contour(fg)
    area = int(ys.size)
    perim = int(len(contour))
    centroid = (float(xs.mean()), float(ys.mean()))
    return ShapeStats(area=area, perimeter=perim, centroid=centroid,
                      circularity=circularity(area, perim))


def connected_components(mask: np.ndarray) -> list[Component]:
    """8-connected foreground components of a binary mask, raster order.

    Each component carries a full-frame boolean mask, its traced outer
    contour and shape statistics.  An empty mask yields an empty list.
    """
    fg = np.asarray(mask) > 0
    labels, n = ndimage.label(fg, structure=_STRUCT8)
    if n == 0:
        return []
    out = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = np.zeros(fg.shape, dtype=bool)
        comp[sl] = labels[sl] == i
        # Trace on a padded crop for speed, then shift back.
        ys, xs = sl
        crop = comp[sl]
        contour = trace_contour(crop)
        contour = contour + np.array([xs.start, ys.start], dtype=np.int32)
        stats = shape_stats(comp, contour)
        out.append(Component(
            mask=comp,
            contour=contour,
            stats=stats,
            bbox=(xs.start, ys.start, xs.stop - 1, ys.stop - 1),
        ))
    return out


def fill_polygon(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon given as (N, 2) (x, y).

    Vertices are real-valued; a pixel is inside when its centre is inside
    the polygon.  Boundary pixels are additionally painted so thin shapes
    survive rasterization.
    """
    pts = np.asarray(points, dtype=np.float64)
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    if len(pts) < 3:
        for x, y in np.rint(pts).astype(int):
            if 0 <= x < w and 0 <= y < h:
                out[y, x] = True
        return out
    x = pts[:, 0]
    y = pts[:, 1]
    x2 = np.roll(x, -1)
    y2 = np.roll(y, -1)
    y_min = max(0, int(np.floor(y.min())))
    y_max = min(h - 1, int(np.ceil(y.max())))
    for row in range(y_min, y_max + 1):
        yc = row
        cond = ((y <= yc) & (y2 > yc)) | ((y2 <= yc) & (y > yc))
        if not cond.any():
            continue
        xi = x[cond] + (yc - y[cond]) * (x2[cond] - x[cond]) / (y2[cond] - y[cond])
        xi.sort()
        for a, b in zip(xi[0::2], xi[1::2]):
            lo = max(0, int(np.ceil(a - 0.5)))
            hi = min(w - 1, int(np.floor(b - 0.5)) + 1)
            if hi >= lo:
                out[row, lo:hi + 1] = True
    # Paint the boundary itself (Bresenham between consecutive vertices).
    ipts = np.rint(pts).astype(int)
    for (x0, y0), (x1, y1) in zip(ipts, np.roll(ipts, -1, axis=0)):
        for px, py in bresenham_line(x0, y0, x1, y1):
            if 0 <= px < w and 0 <= py < h:
                out[py, px] = True
    return out


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer line from (x0, y0) to (x1, y1), inclusive of both ends."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points
