"""End-to-end leukocyte segmentation.

Nucleus segmentation on the enhanced image, ROI localization, then one
cytoplasm candidate per channel (G, H, S): background removal via the
stepwise levels, a divergence-selected threshold, largest-component
extraction and contour repair.  Candidates are scored on circularity,
border adhesion, saturation mean and ellipse similarity; the best
decision value wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ellipsefit import fit_boundary_ellipse
from .fuzzythresh import (IntervalFuzzyConfig, final_threshold,
                          search_ranges_from_levels, search_thresholds)
from .imagecore import (DegenerateImageError, apply_threshold, as_mask,
                        connected_components, hsg_enhance, rgb_to_hsi,
                        round_half_up)
from .locate import LeukocyteSite, clean_nucleus_mask, locate_nuclei, locate_site
from .repair import RepairConfig, repair_mask
from .stepavg import ASCENDING, DESCENDING, GreyLevels, grey_levels, nucleus_mask

CHANNELS = ("G", "H", "S")
_CLASSES = {"G": 4, "H": 3, "S": 2}
# The leukocyte is dark in G and bright in H and S, which fixes the
# threshold polarity per channel.
_POLARITY = {"G": DESCENDING, "H": ASCENDING, "S": ASCENDING}
_KEEP = {"G": "below", "H": "above", "S": "above"}

PROVENANCE_BACKGROUND = "background-threshold"
PROVENANCE_DIVERGENCE = "divergence-threshold"


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable the pipeline consumes, defaulting to working values."""

    w1: float = 0.4
    w2: float = 0.6
    w3: float = 1.0
    alpha: float = 0.7
    beta: float = 0.3
    delta: float = 0.5
    range_width: int = 25
    circ_t1: float = 0.46
    circ_t2: float = 0.85
    ivfs_on_foreground: bool = True
    repair: RepairConfig = field(default_factory=RepairConfig)

    def __post_init__(self):
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError("alpha + beta must equal 1")
        if self.alpha <= self.beta:
            raise ValueError("alpha must exceed beta")
        for name in ("w1", "w2", "w3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class DecisionScore:
    """The four decision features and their combined value."""

    cir_rato: float
    b_adh: float
    sgmv: float
    cir_sim: float
    dec: float


@dataclass
class CandidateMask:
    """Per-channel segmentation candidate within the site ROI."""

    channel: str
    mask: np.ndarray
    provenance: str
    score: DecisionScore | None = None


@dataclass(frozen=True)
class SegmentationResult:
    """Final outcome for one leukocyte site."""

    site: LeukocyteSite
    nucleus_mask: np.ndarray          # full-frame
    cell_mask: np.ndarray             # full-frame; empty when failed
    winning_channel: str | None
    candidates: tuple[CandidateMask, ...]
    failed: bool = False


def decision_value(cir_rato: float, b_adh: float, sgmv: float, cir_sim: float) -> float:
    """Combined decision score; higher is better."""
    return 1.0 / (3.0 - cir_rato - sgmv - cir_sim + b_adh)


def green_channel(img: np.ndarray) -> np.ndarray:
    return np.asarray(img)[..., 1]


def enhanced_image(img: np.ndarray, config: PipelineConfig) -> np.ndarray:
    """The hue/saturation-to-green enhancement of an RGB image."""
    h, s, _ = rgb_to_hsi(img)
    return hsg_enhance(h, s, green_channel(img), config.w1, config.w2, config.w3)


def segment_nucleus(img: np.ndarray,
                    config: PipelineConfig = PipelineConfig()
                    ) -> tuple[np.ndarray, list[LeukocyteSite]]:
    """Nucleus mask and leukocyte sites of a full RGB image.

    Degenerate images (no grey structure in the enhanced image) raise;
    an image with structure but no nuclei yields an empty site list.
    """
    hsg = enhanced_image(img, config)
    levels = grey_levels(hsg, ASCENDING)
    raw = nucleus_mask(hsg, levels)
    clean = clean_nucleus_mask(raw)
    groups = locate_nuclei(clean)
    shape = np.asarray(img).shape[:2]
    sites = [locate_site(g, shape, t1=config.circ_t1, t2=config.circ_t2)
             for g in groups]
    return clean, sites


def background_threshold(levels: GreyLevels, alpha: float, beta: float) -> int:
    """Blend of the background and erythrocyte levels used to drop background."""
    return int(round_half_up(alpha * levels.background + beta * levels.erythrocyte))


def _largest_component(mask: np.ndarray):
    comps = connected_components(mask)
    if not comps:
        return None
    return max(comps, key=lambda c: c.stats.area)


def channel_candidate(sub: np.ndarray, channel: str,
                      nucleus_origin: tuple[float, float],
                      config: PipelineConfig = PipelineConfig(),
                      debug: dict | None = None) -> CandidateMask | None:
    """One cytoplasm candidate from a single channel of the site crop.

    Both the background-threshold image and the divergence-threshold
    image are reduced to their largest component and repaired; the
    rounder one becomes the channel's candidate.  Channels without any
    usable foreground yield None.
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}, got {channel!r}")
    if channel == "G":
        chan = green_channel(sub)
    else:
        h, s, _ = rgb_to_hsi(sub)
        chan = h if channel == "H" else s

    try:
        levels = grey_levels(chan, _POLARITY[channel])
    except DegenerateImageError:
        return None
    keep = _KEEP[channel]
    t_u = background_threshold(levels, config.alpha, config.beta)
    candidates_raw: list[tuple[np.ndarray, str]] = []
    i1 = apply_threshold(chan, t_u, keep=keep)
    candidates_raw.append((i1, PROVENANCE_BACKGROUND))

    try:
        ranges = search_ranges_from_levels(levels.ascending_order(),
                                           _CLASSES[channel], config.range_width)
        ivfs = IntervalFuzzyConfig(n_classes=_CLASSES[channel], delta=config.delta,
                                   search_ranges=ranges)
        region = i1 if config.ivfs_on_foreground else None
        result = search_thresholds(chan, ivfs, region=region)
        t_s = final_threshold(result, channel)
        candidates_raw.append((apply_threshold(chan, t_s, keep=keep),
                               PROVENANCE_DIVERGENCE))
    except (DegenerateImageError, ValueError):
        pass   # background-threshold route still stands on its own

    best: CandidateMask | None = None
    best_circ = -1.0
    for raw, provenance in candidates_raw:
        if debug is not None:
            debug[f"{channel}_{'i1' if provenance == PROVENANCE_BACKGROUND else 'i2'}"] = raw
        comp = _largest_component(raw)
        if comp is None:
            continue
        repaired = repair_mask(as_mask(comp.mask), nucleus_origin, config.repair)
        rep_comp = _largest_component(repaired)
        if rep_comp is None:
            continue
        circ = rep_comp.stats.circularity
        if circ > best_circ:
            best_circ = circ
            best = CandidateMask(channel=channel, mask=repaired, provenance=provenance)
    if best is not None and debug is not None:
        debug[f"{channel}_candidate"] = best.mask
    return best


def _mask_shape_scores(mask: np.ndarray) -> float:
    comps = connected_components(mask)
    if not comps:
        return 0.0
    area = sum(c.stats.area for c in comps)
    perim = sum(c.stats.perimeter for c in comps)
    if perim == 0:
        return 0.0
    return min(1.0, 4.0 * np.pi * area / float(perim) ** 2)


def _border_adhesion(mask: np.ndarray) -> float:
    fg = np.asarray(mask) > 0
    h, w = fg.shape
    up = int(fg[0, :].sum())
    dn = int(fg[-1, :].sum())
    lt = int(fg[:, 0].sum())
    rt = int(fg[:, -1].sum())
    acc = sum(1 for v in (up, dn, lt, rt) if v > 0)
    if acc == 0:
        return 0.0
    return ((up + dn) / w + (lt + rt) / h) / acc


def score_candidates(candidates: list[CandidateMask], s_channel: np.ndarray,
                     nucleus_mask_sub: np.ndarray) -> list[DecisionScore]:
    """Attach the four decision features to every candidate.

    The ellipse reference is fitted once to the union of all candidate
    masks; each candidate is compared against the same rasterized
    ellipse.
    """
    if not candidates:
        raise ValueError("need at least one candidate to score")
    shape = candidates[0].mask.shape
    union = np.zeros(shape, dtype=bool)
    for c in candidates:
        union |= c.mask > 0
    boundary = np.concatenate([c.contour for c in connected_components(as_mask(union))]) \
        if union.any() else np.empty((0, 2), dtype=np.int32)
    if len(boundary) >= 3:
        ellipse = fit_boundary_ellipse(boundary, shape)
    else:
        ellipse = np.zeros(shape, dtype=bool)
    ref_area = int(ellipse.sum())

    nucleus_fg = np.asarray(nucleus_mask_sub) > 0
    s_vals = np.asarray(s_channel, dtype=np.float64)

    scores = []
    for cand in candidates:
        fg = cand.mask > 0
        cir_rato = _mask_shape_scores(cand.mask)
        b_adh = _border_adhesion(cand.mask)
        cyto = fg & ~nucleus_fg
        sgmv = float(s_vals[cyto].mean() / 255.0) if cyto.any() else 0.0
        if ref_area > 0:
            out_a = int((fg & ~ellipse).sum())
            in_a = int((ellipse & ~fg).sum())
            cir_sim = float(np.clip(1.0 - (out_a + in_a) / ref_area, 0.0, 1.0))
        else:
            cir_sim = 0.0
        score = DecisionScore(cir_rato=cir_rato, b_adh=b_adh, sgmv=sgmv,
                              cir_sim=cir_sim,
                              dec=decision_value(cir_rato, b_adh, sgmv, cir_sim))
        cand.score = score
        scores.append(score)
    return scores


def decide(candidates: list[CandidateMask]) -> CandidateMask:
    """The candidate with the largest decision value; ties keep G, H, S order."""
    scored = [c for c in candidates if c.score is not None]
    if not scored:
        raise ValueError("no scored candidates to decide between")
    order = {ch: k for k, ch in enumerate(CHANNELS)}
    scored.sort(key=lambda c: order.get(c.channel, len(order)))
    best = scored[0]
    for cand in scored[1:]:
        if cand.score.dec > best.score.dec:
            best = cand
    return best


def _site_nucleus_mask(site: LeukocyteSite, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for comp in site.components:
        out |= comp.mask
    return as_mask(out)


def segment(img: np.ndarray, config: PipelineConfig = PipelineConfig(),
            debug_sink=None) -> list[SegmentationResult]:
    """Segment every leukocyte in an RGB image.

    Site failures (no usable candidate) are reported in the result list
    without aborting the remaining sites.  debug_sink, when given, is
    called as debug_sink(stage, site_index, image) with intermediate
    rasters.
    """
    img = np.asarray(img)
    clean, sites = segment_nucleus(img, config)
    if debug_sink is not None:
        debug_sink("hsg", None, enhanced_image(img, config))
        debug_sink("nucleus", None, clean)
    shape = img.shape[:2]
    results = []
    for k, site in enumerate(sites):
        roi = site.combined_roi
        sub = img[roi.y1:roi.y2 + 1, roi.x1:roi.x2 + 1]
        site_nucleus = _site_nucleus_mask(site, shape)
        nucleus_sub = site_nucleus[roi.y1:roi.y2 + 1, roi.x1:roi.x2 + 1]
        origin = (site.stats.centroid[0] - roi.x1, site.stats.centroid[1] - roi.y1)

        debug: dict | None = {} if debug_sink is not None else None
        candidates = []
        for channel in CHANNELS:
            cand = channel_candidate(sub, channel, origin, config, debug=debug)
            if cand is not None:
                candidates.append(cand)
        if debug is not None:
            for stage, raster in debug.items():
                debug_sink(stage, k, raster)

        cell_full = np.zeros(shape, dtype=np.uint8)
        if not candidates:
            results.append(SegmentationResult(
                site=site, nucleus_mask=site_nucleus, cell_mask=cell_full,
                winning_channel=None, candidates=(), failed=True))
            continue

        _, s_chan, _ = rgb_to_hsi(sub)
        score_candidates(candidates, s_chan, nucleus_sub)
        winner = decide(candidates)
        cell_full[roi.y1:roi.y2 + 1, roi.x1:roi.x2 + 1] = winner.mask
        if debug_sink is not None:
            debug_sink("winner", k, cell_full)
        results.append(SegmentationResult(
            site=site, nucleus_mask=site_nucleus, cell_mask=cell_full,
            winning_channel=winner.channel, candidates=tuple(candidates)))
    return results
