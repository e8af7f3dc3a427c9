"""Stepwise conditional-mean extraction of characteristic grey levels.

Blood-smear channels separate into four grey populations: background,
erythrocytes, leukocyte cytoplasm and leukocyte nuclei.  Three rounds of
conditional averaging walk a cursor up the histogram and report one mean
per population; the nucleus level is the mean of the brightest residue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import DegenerateImageError, apply_threshold, histogram, round_half_up

ASCENDING = "ascending"
DESCENDING = "descending"


@dataclass(frozen=True)
class GreyLevels:
    """Characteristic grey values for the four smear populations.

    For ascending polarity (nucleus brightest) background <= erythrocyte
    <= cytoplasm <= nucleus; reversed for descending polarity (nucleus
    darkest, e.g. the green channel).
    """

    background: int
    erythrocyte: int
    cytoplasm: int
    nucleus: int
    polarity: str = ASCENDING

    def ascending_order(self) -> tuple[int, int, int, int]:
        """The four levels sorted from darkest to brightest."""
        return tuple(sorted((self.background, self.erythrocyte,
                             self.cytoplasm, self.nucleus)))


def _conditional_mean(hist: np.ndarray, lo: int, hi: int) -> int | None:
    """Rounded mean grey value over the open band (lo, hi); None if empty."""
    lo_i = max(lo + 1, 0)
    hi_i = min(hi, 256)
    if hi_i <= lo_i:
        return None
    counts = hist[lo_i:hi_i]
    total = int(counts.sum())
    if total == 0:
        return None
    weighted = int((np.arange(lo_i, hi_i, dtype=np.int64) * counts).sum())
    return int(round_half_up(weighted / total))


def levels_from_histogram(hist: np.ndarray) -> GreyLevels:
    """Run the stepwise averaging rounds on a 256-bin histogram.

    Each round takes t_j = mean of values above the cursor, then t_k =
    mean of values strictly between the cursor and t_j, and advances the
    cursor to t_k.  An empty band between cursor and t_j falls back to
    their midpoint (degenerate few-population images).  No values above
    the cursor at all is unrecoverable and raises.
    """
    hist = np.asarray(hist, dtype=np.int64)
    cursor = 0
    tk_seq: list[int] = []
    tj = 0
    for _ in range(3):
        tj_val = _conditional_mean(hist, cursor, 256)
        if tj_val is None:
            raise DegenerateImageError(
                "no grey values above the running mean; image too flat")
        tj = tj_val
        tk = _conditional_mean(hist, cursor, tj)
        if tk is None:
            tk = int(round_half_up((cursor + tj) / 2.0))
        tk_seq.append(tk)
        cursor = tk
    return GreyLevels(background=tk_seq[0], erythrocyte=tk_seq[1],
                      cytoplasm=tk_seq[2], nucleus=tj, polarity=ASCENDING)


def grey_levels(img: np.ndarray, polarity: str = ASCENDING) -> GreyLevels:
    """Extract the four characteristic grey levels of a channel image.

    This is a histogram-only function: permuting pixels does not change
    the result.  Descending channels are handled by inverting the image,
    running the ascending procedure and mapping the levels back.
    """
    if polarity not in (ASCENDING, DESCENDING):
        raise ValueError(f"unknown polarity {polarity!r}")
    hist = histogram(np.asarray(img))
    if polarity == DESCENDING:
        asc = levels_from_histogram(hist[::-1])
        return GreyLevels(background=255 - asc.background,
                          erythrocyte=255 - asc.erythrocyte,
                          cytoplasm=255 - asc.cytoplasm,
                          nucleus=255 - asc.nucleus,
                          polarity=DESCENDING)
    return levels_from_histogram(hist)


def nucleus_threshold(levels: GreyLevels) -> int:
    """Midpoint of the cytoplasm and nucleus levels, rounded."""
    return int(round_half_up((levels.cytoplasm + levels.nucleus) / 2.0))


def nucleus_mask(img: np.ndarray, levels: GreyLevels) -> np.ndarray:
    """Raw nucleus mask: threshold at the cytoplasm/nucleus midpoint.

    Impurities are not removed here; mask cleanup happens in the locator.
    """
    t = nucleus_threshold(levels)
    keep = "above" if levels.polarity == ASCENDING else "below"
    return apply_threshold(np.asarray(img), t, keep=keep)
