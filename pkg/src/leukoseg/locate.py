"""Nucleus mask cleanup and leukocyte ROI localization.

From a cleaned nucleus mask we derive per-leukocyte rectangles: the
circumscribed nucleus rectangle (with a merge rule for multi-lobed
nuclei), a cytoplasm square sized from the nucleus circularity, and the
combined rectangle enclosing both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagecore import Component, ShapeStats, as_mask, circularity, connected_components

_CROSS = ndimage.generate_binary_structure(2, 1)   # 3x3 cross

MIN_SPECK_AREA = 50          # px^2; absolute floor for nucleus fragments
RELATIVE_AREA_FLOOR = 0.01   # fraction of the largest component


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle with inclusive pixel bounds."""

    x1: int
    y1: int
    x2: int
    y2: int

    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2

    def intersect(self, other: "Roi") -> "Roi | None":
        x1 = max(self.x1, other.x1)
        y1 = max(self.y1, other.y1)
        x2 = min(self.x2, other.x2)
        y2 = min(self.y2, other.y2)
        if x1 > x2 or y1 > y2:
            return None
        return Roi(x1, y1, x2, y2)

    def union(self, other: "Roi") -> "Roi":
        return Roi(min(self.x1, other.x1), min(self.y1, other.y1),
                   max(self.x2, other.x2), max(self.y2, other.y2))

    def width(self) -> int:
        return self.x2 - self.x1 + 1

    def height(self) -> int:
        return self.y2 - self.y1 + 1


@dataclass(frozen=True)
class NucleusGroup:
    """A merged nucleus rectangle and the components it covers."""

    roi: Roi
    components: tuple[Component, ...]
    stats: ShapeStats


@dataclass(frozen=True)
class LeukocyteSite:
    """Nucleus, cytoplasm and combined rectangles for one leukocyte."""

    nucleus_roi: Roi
    cytoplasm_roi: Roi
    combined_roi: Roi
    components: tuple[Component, ...]
    stats: ShapeStats


def clean_nucleus_mask(mask: np.ndarray) -> np.ndarray:
    """Remove impurities from a raw nucleus mask.

    Morphological opening with a 3x3 cross, removal of components smaller
    than max(50 px^2, 1% of the largest component), then filling of holes
    fully enclosed by foreground.
    """
    fg = np.asarray(mask) > 0
    if not fg.any():
        return as_mask(fg)
    opened = ndimage.binary_opening(fg, structure=_CROSS)
    labels, n = ndimage.label(opened, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return as_mask(opened)
    areas = np.bincount(labels.ravel())[1:]
    floor = max(MIN_SPECK_AREA, RELATIVE_AREA_FLOOR * areas.max())
    keep_labels = np.flatnonzero(areas >= floor) + 1
    kept = np.isin(labels, keep_labels)
    filled = ndimage.binary_fill_holes(kept, structure=_CROSS)
    return as_mask(filled)


def _component_roi(comp: Component) -> Roi:
    x1, y1, x2, y2 = comp.bbox
    return Roi(x1, y1, x2, y2)


def _merged_stats(components: tuple[Component, ...]) -> ShapeStats:
    # Rectangles merge but components stay separate; statistics are taken
    # over the union of member components.
    area = sum(c.stats.area for c in components)
    perim = sum(c.stats.perimeter for c in components)
    cx = sum(c.stats.centroid[0] * c.stats.area for c in components) / area
    cy = sum(c.stats.centroid[1] * c.stats.area for c in components) / area
    return ShapeStats(area=area, perimeter=perim, centroid=(cx, cy),
                      circularity=circularity(area, perim))


def _should_merge(a: Roi, b: Roi) -> bool:
    overlap = a.intersect(b)
    if overlap is None:
        return False
    ax, ay = a.center()
    bx, by = b.center()
    return overlap.contains_point(ax, ay) and overlap.contains_point(bx, by)


def locate_nuclei(mask: np.ndarray) -> list[NucleusGroup]:
    """Circumscribed nucleus rectangles with the center-overlap merge rule.

    Two rectangles merge when they overlap and both centers fall inside
    the overlap region; merging repeats until no pair qualifies.  The
    result is sorted by (y1, x1), independent of input traversal order.
    """
    comps = connected_components(mask)
    groups: list[tuple[Roi, tuple[Component, ...]]] = [
        (_component_roi(c), (c,)) for c in comps
    ]
    groups.sort(key=lambda g: (g[0].y1, g[0].x1, g[0].y2, g[0].x2))
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if _should_merge(groups[i][0], groups[j][0]):
                    roi = groups[i][0].union(groups[j][0])
                    members = groups[i][1] + groups[j][1]
                    del groups[j]
                    del groups[i]
                    groups.append((roi, members))
                    groups.sort(key=lambda g: (g[0].y1, g[0].x1, g[0].y2, g[0].x2))
                    merged = True
                    break
            if merged:
                break
    return [NucleusGroup(roi=r, components=m, stats=_merged_stats(m))
            for r, m in groups]


def cytoplasm_radius(stats: ShapeStats, t1: float = 0.46, t2: float = 0.85) -> float:
    """Equivalent cytoplasm radius from nucleus area and circularity.

    The multiplier shrinks as the nucleus gets rounder: irregular (lobed)
    nuclei sit in larger cells relative to their equivalent radius.
    Boundary values of the circularity fall into the lower-multiplier
    branch.
    """
    if stats.area <= 0:
        raise ValueError("nucleus area must be positive")
    r = float(np.sqrt(stats.area / np.pi))
    cir = stats.circularity
    if cir < t1:
        return 2.6 * r
    if cir < t2:
        return 2.3 * r
    return 1.6 * r


def locate_site(group: NucleusGroup, img_shape: tuple[int, int],
                t1: float = 0.46, t2: float = 0.85) -> LeukocyteSite:
    """Build the cytoplasm square and the combined rectangle for a nucleus.

    The cytoplasm ROI is the axis-aligned square of half-side R_e centered
    on the nucleus centroid, clamped to the image; the combined ROI is the
    bounding box of nucleus and cytoplasm rectangles.
    """
    h, w = img_shape[:2]
    r_e = cytoplasm_radius(group.stats, t1=t1, t2=t2)
    cx, cy = group.stats.centroid
    x1 = int(np.clip(round(cx - r_e), 0, w - 1))
    x2 = int(np.clip(round(cx + r_e), 0, w - 1))
    y1 = int(np.clip(round(cy - r_e), 0, h - 1))
    y2 = int(np.clip(round(cy + r_e), 0, h - 1))
    cyto = Roi(x1, y1, x2, y2)
    combined = group.roi.union(cyto)
    combined = Roi(max(0, combined.x1), max(0, combined.y1),
                   min(w - 1, combined.x2), min(h - 1, combined.y2))
    return LeukocyteSite(nucleus_roi=group.roi, cytoplasm_roi=cyto,
                         combined_roi=combined, components=group.components,
                         stats=group.stats)
