"""Interval-valued fuzzy multilevel threshold selection.

A candidate threshold tuple splits the histogram into regions; each pixel
gets a Cauchy-style membership toward its region mean, widened to an
interval [mu^(1/delta), mu^delta] and recombined with the probabilistic
sum.  The selected tuple minimizes the exponential fuzzy divergence
between the recombined membership map and the ideal all-ones map.

Everything is computed on the grey-level histogram: pixels with the same
grey value share membership, so per-tuple cost is O(256), not O(pixels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imagecore import DegenerateImageError, histogram, round_half_up

FULL_RANGE = (1, 254)       # interior thresholds
DEFAULT_RANGE_WIDTH = 25    # grey levels either side of a seeded centre
_MAX_TUPLES = 4_000_000


@dataclass(frozen=True)
class IntervalFuzzyConfig:
    """Search settings for one channel.

    delta in (0, 1) controls the interval width (lower bound mu^(1/delta),
    upper bound mu^delta).  search_ranges holds one inclusive (lo, hi)
    grey interval per threshold; None searches the full interior range.
    """

    n_classes: int
    delta: float = 0.5
    search_ranges: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.n_classes not in (2, 3, 4):
            raise ValueError("n_classes must be 2, 3 or 4")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie strictly between 0 and 1")
        if self.search_ranges is not None:
            if len(self.search_ranges) != self.n_classes - 1:
                raise ValueError("need one search range per threshold")
            for lo, hi in self.search_ranges:
                if hi < lo:
                    raise ValueError(f"empty search range ({lo}, {hi})")


@dataclass(frozen=True)
class ThresholdResult:
    thresholds: tuple[int, ...]
    divergence: float
    region_means: tuple[float, ...] = field(default=())


def region_means(hist: np.ndarray, thresholds) -> list[float]:
    """Mean grey value of each region induced by the thresholds.

    Regions are [t_{c-1}, t_c) with implied t_0 = 0 and a final region
    closed at 255.  An empty region reports the midpoint of its grey
    bounds so downstream membership stays finite.
    """
    hist = np.asarray(hist, dtype=np.int64)
    ts = list(thresholds)
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("thresholds must be strictly increasing")
    bounds = [0] + ts + [256]
    means = []
    for c in range(len(bounds) - 1):
        lo, hi = bounds[c], bounds[c + 1]
        counts = hist[lo:hi]
        total = int(counts.sum())
        if total == 0:
            upper = 255 if c == len(bounds) - 2 else bounds[c + 1]
            means.append((lo + upper) / 2.0)
        else:
            weighted = int((np.arange(lo, hi, dtype=np.int64) * counts).sum())
            means.append(weighted / total)
    return means


def membership(f, avg_c, f_min: int, f_max: int):
    """Cauchy-form membership of grey value f toward the region mean.

    mu = 1 / (1 + |f - avg_c| / (f_max - f_min)); symmetric about the
    mean, always in (0.5, 1] when |f - avg_c| < f_max - f_min.
    """
    if f_max <= f_min:
        raise DegenerateImageError("constant image: f_max equals f_min")
    const = 1.0 / (f_max - f_min)
    return 1.0 / (1.0 + const * np.abs(np.asarray(f, dtype=np.float64) - avg_c))


def interval_membership(mu, delta: float):
    """Probabilistic-sum recombination of the membership interval."""
    mu = np.asarray(mu, dtype=np.float64)
    lower = mu ** (1.0 / delta)
    upper = mu ** delta
    return lower + upper - lower * upper


def fuzzy_divergence(mu_a: np.ndarray, mu_b: np.ndarray) -> float:
    """Exponential fuzzy divergence between two membership maps."""
    a = np.asarray(mu_a, dtype=np.float64)
    b = np.asarray(mu_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    terms = 2.0 - (1.0 - d) * np.exp(d) - (1.0 + d) * np.exp(-d)
    return float(terms.sum())


def divergence_to_ideal(mu_a: np.ndarray) -> float:
    """Fuzzy divergence against the ideal (all memberships 1) map."""
    a = np.asarray(mu_a, dtype=np.float64)
    terms = 2.0 - (2.0 - a) * np.exp(a - 1.0) - a * np.exp(1.0 - a)
    return float(terms.sum())


def _ideal_gap(mu: np.ndarray) -> np.ndarray:
    """Per-value divergence-to-ideal term (vector form of the summand)."""
    return 2.0 - (2.0 - mu) * np.exp(mu - 1.0) - mu * np.exp(1.0 - mu)


def search_ranges_from_levels(levels_ascending, n_classes: int,
                              width: int = DEFAULT_RANGE_WIDTH) -> tuple[tuple[int, int], ...]:
    """Threshold search windows seeded from the four stepwise grey levels.

    Window centres are midpoints of consecutive levels.  Channels that
    model fewer classes merge populations away from the marker class:
    three classes drop the lowest midpoint, two classes keep the middle
    one (cell vs non-cell boundary).
    """
    ls = sorted(int(v) for v in levels_ascending)
    if len(ls) != 4:
        raise ValueError("expected four grey levels")
    mids = [int(round_half_up((a + b) / 2.0)) for a, b in zip(ls, ls[1:])]
    pick = {4: (0, 1, 2), 3: (1, 2), 2: (1,)}[n_classes]
    ranges = []
    for k in pick:
        lo = max(FULL_RANGE[0], mids[k] - width)
        hi = min(FULL_RANGE[1], mids[k] + width)
        ranges.append((min(lo, FULL_RANGE[1]), max(hi, FULL_RANGE[0])))
    return tuple(ranges)


class _SegmentDivergence:
    """Memoized divergence contribution of support slices [i, j)."""

    def __init__(self, fs: np.ndarray, cs: np.ndarray, delta: float):
        self.fs = fs.astype(np.float64)
        self.cs = cs.astype(np.float64)
        self.wsum = np.concatenate(([0], np.cumsum(fs.astype(np.int64) * cs)))
        self.csum = np.concatenate(([0], np.cumsum(cs)))
        self.delta = delta
        self.const = 1.0 / (int(fs[-1]) - int(fs[0]))
        self._cache: dict[tuple[int, int], float] = {}

    def __call__(self, i: int, j: int) -> float:
        if j <= i:
            return 0.0
        key = (i, j)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        mean = (self.wsum[j] - self.wsum[i]) / (self.csum[j] - self.csum[i])
        mu = 1.0 / (1.0 + self.const * np.abs(self.fs[i:j] - mean))
        mu_new = interval_membership(mu, self.delta)
        val = float((self.cs[i:j] * _ideal_gap(mu_new)).sum())
        self._cache[key] = val
        return val


def _enumerate_tuples(ranges: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Strictly increasing tuples from per-threshold ranges, lexicographic."""
    sizes = [hi - lo + 1 for lo, hi in ranges]
    total = int(np.prod([float(s) for s in sizes]))
    if total > _MAX_TUPLES:
        raise ValueError("search space too large; restrict search_ranges")
    axes = [np.arange(lo, hi + 1) for lo, hi in ranges]
    grid = np.meshgrid(*axes, indexing="ij")
    tuples = np.stack([g.ravel() for g in grid], axis=1)
    if tuples.shape[1] > 1:
        keep = np.all(np.diff(tuples, axis=1) > 0, axis=1)
        tuples = tuples[keep]
    if tuples.size == 0:
        raise ValueError("search ranges admit no ordered threshold tuple")
    return tuples


def search_thresholds(img: np.ndarray, config: IntervalFuzzyConfig,
                      region: np.ndarray | None = None) -> ThresholdResult:
    """Exhaustive divergence-minimizing search over threshold tuples.

    Ties are broken toward the lexicographically smallest tuple.  With
    region given, only pixels under the mask contribute to the histogram
    (and hence to the divergence).
    """
    hist = histogram(np.asarray(img), region)
    support = np.flatnonzero(hist)
    if support.size == 0:
        raise DegenerateImageError("no pixels to threshold")
    if support.size == 1 or support[0] == support[-1]:
        raise DegenerateImageError("constant image: f_max equals f_min")

    ranges = config.search_ranges
    if ranges is None:
        ranges = tuple([FULL_RANGE] * (config.n_classes - 1))
    tuples = _enumerate_tuples(ranges)

    fs = support
    cs = hist[support]
    seg = _SegmentDivergence(fs, cs, config.delta)

    # Region boundaries in support coordinates; equal-boundary regions are
    # empty and contribute nothing.
    bounds = np.empty((tuples.shape[0], config.n_classes + 1), dtype=np.int64)
    bounds[:, 0] = 0
    bounds[:, -1] = fs.size
    for c in range(tuples.shape[1]):
        bounds[:, c + 1] = np.searchsorted(fs, tuples[:, c], side="left")

    pairs = {}
    for c in range(config.n_classes):
        for i, j in zip(bounds[:, c], bounds[:, c + 1]):
            key = (int(i), int(j))
            if key not in pairs:
                pairs[key] = seg(*key)
    div = np.zeros(tuples.shape[0], dtype=np.float64)
    for c in range(config.n_classes):
        div += np.fromiter(
            (pairs[(int(i), int(j))] for i, j in zip(bounds[:, c], bounds[:, c + 1])),
            dtype=np.float64, count=tuples.shape[0])

    best = int(np.argmin(div))   # first minimum == lexicographically smallest
    thresholds = tuple(int(t) for t in tuples[best])
    return ThresholdResult(thresholds=thresholds, divergence=float(div[best]),
                           region_means=tuple(region_means(hist, thresholds)))


def final_threshold(result: ThresholdResult, channel: str) -> int:
    """Collapse a multilevel result to the single cytoplasm threshold.

    G models four classes and blends the middle thresholds; H models
    three and blends the lower pair; S models two and uses its only
    threshold directly.
    """
    ts = result.thresholds
    expected = {"G": 4, "H": 3, "S": 2}
    if channel not in expected:
        raise ValueError(f"channel must be G, H or S, got {channel!r}")
    if len(ts) != expected[channel] - 1:
        raise ValueError(
            f"channel {channel} needs {expected[channel] - 1} thresholds, got {len(ts)}")
    if channel == "G":
        value = 0.8 * ts[1] + 0.2 * ts[2]
    elif channel == "H":
        value = 0.8 * ts[0] + 0.2 * ts[1]
    else:
        value = float(ts[0])
    return int(round_half_up(value))
