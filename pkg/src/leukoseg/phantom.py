"""Deterministic synthetic blood-smear phantoms with exact ground truth.

Phantoms are geometric, not photorealistic: a pale background, pinkish
erythrocyte annuli and purple leukocytes (lobed dark nucleus inside a
lighter cytoplasm disc).  Colors are chosen so the channel orderings the
pipeline relies on actually hold: the nucleus is darkest in G and
brightest in H and S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imagecore import as_mask

BACKGROUND_RGB = (235, 228, 218)   # pale warm tint; keeps hue defined under noise
RBC_RING_RGB = (230, 150, 140)
RBC_CENTER_RGB = (242, 190, 185)
CYTOPLASM_RGB = (185, 135, 205)
NUCLEUS_RGB = (115, 60, 125)

# Lobe radius as a fraction of the cell radius, per lobe count.  Sized so
# the cytoplasm square derived from nucleus area always covers the cell.
_LOBE_SCALE = {1: 0.66, 2: 0.42, 3: 0.36, 4: 0.32}


@dataclass(frozen=True)
class PhantomParams:
    width: int = 480
    height: int = 360
    n_leukocytes: int = 1
    n_rbc: int = 12
    cell_radius: int = 42
    nucleus_lobes: int = 1
    rbc_radius: int = 22
    rbc_pallor_radius: int = 11
    noise_sigma: float = 0.0
    adhesion_fraction: float = 0.0   # >0 adheres one erythrocyte per cell
    margin: int = 6
    max_attempts: int = 400

    def __post_init__(self):
        if self.nucleus_lobes not in _LOBE_SCALE:
            raise ValueError("nucleus_lobes must be between 1 and 4")
        if not 0.0 <= self.adhesion_fraction <= 0.9:
            raise ValueError("adhesion_fraction must lie in [0, 0.9]")


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray        # (H, W, 3) uint8
    gt_cell: np.ndarray      # {0, 255} masks
    gt_nucleus: np.ndarray
    gt_rbc: np.ndarray
    seed: int
    params: PhantomParams = field(repr=False, default=PhantomParams())


def _disc(shape: tuple[int, int], cx: float, cy: float, r: float) -> np.ndarray:
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def _place(rng: np.random.Generator, params: PhantomParams, radius: float,
           taken: list[tuple[float, float, float]], clearance: float) -> tuple[float, float]:
    lo_x = radius + params.margin
    hi_x = params.width - radius - params.margin
    lo_y = radius + params.margin
    hi_y = params.height - radius - params.margin
    if hi_x <= lo_x or hi_y <= lo_y:
        raise ValueError("image too small for the requested radii")
    for _ in range(params.max_attempts):
        x = rng.uniform(lo_x, hi_x)
        y = rng.uniform(lo_y, hi_y)
        if all(np.hypot(x - tx, y - ty) >= radius + tr + clearance
               for tx, ty, tr in taken):
            return x, y
    raise ValueError("could not place all objects without overlap; "
                     "reduce counts or radii")


def generate_phantom(params: PhantomParams = PhantomParams(), seed: int = 0) -> Phantom:
    """Render one phantom; identical (params, seed) give identical bytes.

    With adhesion_fraction > 0 one erythrocyte per leukocyte is placed
    overlapping the cell boundary by that fraction of the erythrocyte
    radius; the leukocyte is painted on top, so ground-truth cell pixels
    keep cell colors.
    """
    rng = np.random.default_rng(seed)
    shape = (params.height, params.width)
    img = np.empty((*shape, 3), dtype=np.float64)
    img[:] = BACKGROUND_RGB

    gt_cell = np.zeros(shape, dtype=bool)
    gt_nucleus = np.zeros(shape, dtype=bool)
    gt_rbc = np.zeros(shape, dtype=bool)

    # Leukocyte sites first: their clearance dominates the layout.  The
    # cytoplasm square is up to 2.6x the nucleus equivalent radius, so
    # cells need generous spacing for their ROIs to stay disjoint.
    cells: list[tuple[float, float]] = []
    taken: list[tuple[float, float, float]] = []
    for _ in range(params.n_leukocytes):
        x, y = _place(rng, params, params.cell_radius * 1.4, taken,
                      clearance=params.cell_radius * 1.2)
        cells.append((x, y))
        taken.append((x, y, float(params.cell_radius)))

    adhered: list[tuple[float, float]] = []
    if params.adhesion_fraction > 0:
        for cx, cy in cells:
            d = params.cell_radius + params.rbc_radius \
                - params.adhesion_fraction * params.rbc_radius
            ang = rng.uniform(0, 2 * np.pi)
            rx = cx + d * np.cos(ang)
            ry = cy + d * np.sin(ang)
            rx = float(np.clip(rx, params.rbc_radius + 1,
                               params.width - params.rbc_radius - 2))
            ry = float(np.clip(ry, params.rbc_radius + 1,
                               params.height - params.rbc_radius - 2))
            adhered.append((rx, ry))
            taken.append((rx, ry, float(params.rbc_radius)))

    free_rbc = []
    for _ in range(max(0, params.n_rbc - len(adhered))):
        try:
            x, y = _place(rng, params, params.rbc_radius, taken, clearance=3.0)
        except ValueError:
            break   # crowded layouts keep fewer erythrocytes
        free_rbc.append((x, y))
        taken.append((x, y, float(params.rbc_radius)))

    for rx, ry in adhered + free_rbc:
        ring = _disc(shape, rx, ry, params.rbc_radius)
        center = _disc(shape, rx, ry, params.rbc_pallor_radius)
        img[ring] = RBC_RING_RGB
        img[center] = RBC_CENTER_RGB
        gt_rbc |= ring

    lobe_r = _LOBE_SCALE[params.nucleus_lobes] * params.cell_radius
    for cx, cy in cells:
        cell = _disc(shape, cx, cy, params.cell_radius)
        img[cell] = CYTOPLASM_RGB
        gt_cell |= cell
        base_angle = rng.uniform(0, 2 * np.pi)
        if params.nucleus_lobes == 1:
            centres = [(cx, cy)]
        else:
            ring_r = 0.85 * lobe_r
            centres = [(cx + ring_r * np.cos(base_angle + 2 * np.pi * k / params.nucleus_lobes),
                        cy + ring_r * np.sin(base_angle + 2 * np.pi * k / params.nucleus_lobes))
                       for k in range(params.nucleus_lobes)]
        for lx, ly in centres:
            lobe = _disc(shape, lx, ly, lobe_r)
            img[lobe] = NUCLEUS_RGB
            gt_nucleus |= lobe

    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, img.shape)
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Phantom(image=image, gt_cell=as_mask(gt_cell),
                   gt_nucleus=as_mask(gt_nucleus), gt_rbc=as_mask(gt_rbc),
                   seed=seed, params=params)
