"""TCSPC products: cross-correlation and sync histograms, pulsed g2(0)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simulate import Channel, TimeTagStream


@dataclass
class Histogram:
    bin_width: int
    start: int
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width < 1:
            raise ValueError("bin_width must be >= 1 ps")
        self.counts = np.asarray(self.counts, dtype=np.uint64)
        if self.counts.ndim != 1 or self.counts.size < 1:
            raise ValueError("counts must be a non-empty 1-D array")

    @property
    def edges(self) -> np.ndarray:
        return self.start + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def bin_starts(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + self.bin_width / 2

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rebin(self, factor: int) -> "Histogram":
        n = self.counts.size // factor
        c = self.counts[: n * factor].reshape(n, factor).sum(axis=1)
        return Histogram(self.bin_width * factor, self.start, c)

    def to_csv(self) -> str:
        lines = [f"# bin_width_ps={self.bin_width}, start_ps={self.start}", "bin_start_ps,count"]
        lines += [f"{s},{c}" for s, c in zip(self.bin_starts.tolist(), self.counts.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        lines = [l.strip() for l in text.strip().splitlines()]
        rows = [l.split(",") for l in lines if l and not l.startswith("#") and not l.startswith("bin_start")]
        starts = np.array([int(float(r[0])) for r in rows])
        counts = np.array([int(r[1]) for r in rows], dtype=np.uint64)
        if starts.size >= 2:
            width = int(starts[1] - starts[0])
        else:
            header = next(l for l in lines if "bin_width_ps=" in l)
            width = int(header.split("bin_width_ps=")[1].split(",")[0])
        return cls(width, int(starts[0]), counts)


def _bins_for_window(window: int, bin_width: int, start: int | None):
    if start is None:
        start = -window
    n_bins = (window - start) // bin_width + 1
    return start, n_bins


def correlate_times(ta, tb, window, bin_width, start=None, chunk=1 << 16) -> Histogram:
    """Histogram of t_b - t_a over all pairs with |t_b - t_a| <= window.

    Both inputs must be sorted. ``a`` is processed in chunks; for each chunk only
    the slice of ``b`` inside the window is touched, so memory stays bounded.
    Delay ``d`` lands in bin ``floor((d - start) / bin_width)``.
    """
    window, bin_width = int(window), int(bin_width)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if window < bin_width:
        raise ValueError("window must be at least one bin wide")
    start, n_bins = _bins_for_window(window, bin_width, start)
    counts = np.zeros(n_bins, dtype=np.int64)
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        return Histogram(bin_width, start, counts)
    lo_all = np.searchsorted(tb, ta - window, side="left")
    hi_all = np.searchsorted(tb, ta + window, side="right")
    for c0 in range(0, ta.size, chunk):
        lo, hi = lo_all[c0 : c0 + chunk], hi_all[c0 : c0 + chunk]
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        rep_a = np.repeat(ta[c0 : c0 + chunk], n)
        # index into b: lo repeated, plus running offset within each group
        offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        d = tb[np.repeat(lo, n) + offs] - rep_a
        k = (d - start) // bin_width
        k = k[(k >= 0) & (k < n_bins)]
        counts += np.bincount(k, minlength=n_bins)
    return Histogram(bin_width, start, counts)


def cross_correlate(tags: TimeTagStream, ch_a, ch_b, window, bin_width, start=None) -> Histogram:
    """Correlation histogram; positive delay means the ``ch_b`` event came later."""
    return correlate_times(tags.times(ch_a), tags.times(ch_b), window, bin_width, start)


def sync_histogram(tags: TimeTagStream, ch, rep_period: float, bin_width: int) -> Histogram:
    """Histogram of the delay to the preceding SYNC, folded into [0, rep_period)."""
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1 ps")
    sync = tags.times(Channel.SYNC)
    if sync.size == 0:
        raise ValueError("stream contains no SYNC records")
    t = tags.times(ch)
    n_bins = int(math.ceil(rep_period / bin_width))
    idx = np.clip(np.searchsorted(sync, t, side="right") - 1, 0, None)
    d = np.mod((t - sync[idx]).astype(float), rep_period)
    k = np.minimum(np.floor(d / bin_width).astype(np.int64), n_bins - 1)
    return Histogram(int(bin_width), 0, np.bincount(k, minlength=n_bins))


@dataclass(frozen=True)
class G2Result:
    value: float
    sigma: float
    central: int
    side_mean: float


def g2_pulsed(hist: Histogram, rep_period: float, n_side_peaks: int = 5, window: float | None = None) -> G2Result:
    """Central-peak area over mean side-peak area of a pulsed correlation histogram.

    Each peak is integrated over bins whose centres lie within ``window``
    (default one full period) centred on ``k * rep_period``.
    """
    if n_side_peaks < 1:
        raise ValueError("need at least one side peak")
    window = rep_period if window is None else window
    centers = hist.centers
    reach = n_side_peaks * rep_period + window / 2
    if centers[0] - hist.bin_width / 2 > -reach + hist.bin_width or centers[-1] + hist.bin_width / 2 < reach - hist.bin_width:
        raise ValueError("histogram does not span the requested side peaks")
    counts = hist.counts.astype(np.int64)

    def area(k):
        m = (centers >= k * rep_period - window / 2) & (centers < k * rep_period + window / 2)
        return int(counts[m].sum())

    central = area(0)
    sides = [area(k) for k in range(-n_side_peaks, n_side_peaks + 1) if k != 0]
    side_sum = sum(sides)
    if side_sum == 0:
        raise ValueError("side peaks contain no counts")
    side_mean = side_sum / len(sides)
    g2 = central / side_mean
    if central == 0:
        sigma = 1 / side_mean  # one-count upper scale
    else:
        sigma = g2 * math.sqrt(1 / central + 1 / side_sum)
    return G2Result(g2, sigma, central, side_mean)
