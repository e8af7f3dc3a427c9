"""Segmentation quality metrics against ground-truth masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    """Pixel counts and the four derived rates for one mask pair.

    Misclassified pixels are the symmetric difference between ground
    truth and prediction, so sa == 100 * (1 - er_rate) holds exactly.
    """

    rs: int           # ground-truth foreground pixels
    ts: int           # predicted foreground pixels
    os_pixels: int    # predicted but not in ground truth
    us_pixels: int    # ground truth but not predicted
    sa: float         # segmentation accuracy, percent
    or_rate: float    # over-segmentation rate
    ur_rate: float    # under-segmentation rate
    er_rate: float    # error rate


def evaluate(gt: np.ndarray, pred: np.ndarray) -> EvalReport:
    """Compare a predicted mask against ground truth.

    Requires equal dimensions and a non-empty ground truth.
    """
    g = np.asarray(gt) > 0
    p = np.asarray(pred) > 0
    if g.shape != p.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {p.shape}")
    rs = int(g.sum())
    if rs == 0:
        raise ValueError("ground truth mask is empty")
    ts = int(p.sum())
    os_pixels = int((p & ~g).sum())
    us_pixels = int((g & ~p).sum())
    er = (os_pixels + us_pixels) / rs
    return EvalReport(
        rs=rs, ts=ts, os_pixels=os_pixels, us_pixels=us_pixels,
        sa=(1.0 - er) * 100.0,
        or_rate=os_pixels / (rs + os_pixels),
        ur_rate=us_pixels / (rs + os_pixels),
        er_rate=er,
    )
