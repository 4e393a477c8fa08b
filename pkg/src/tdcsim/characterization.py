"""Code-density linearity, pairwise timing precision and N-cycle jitter."""

from dataclasses import dataclass
from typing import NamedTuple
import math

import numpy as np

from .errors import InconsistentMatrixError, InsufficientStatisticsError

MIN_PAIRS = 100
MIN_WINDOWS = 1000


class CodeHistogram(NamedTuple):
    counts: np.ndarray
    overflow: int


def code_density(codes, n_codes):
    """Histogram of output codes; out-of-range codes go to ``overflow``."""
    codes = np.asarray(codes, dtype=np.int64)
    inside = (codes >= 0) & (codes < n_codes)
    counts = np.bincount(codes[inside], minlength=n_codes)
    return CodeHistogram(counts, int(codes.size - inside.sum()))


def covered_window(counts):
    """Inclusive bounds of the codes between the first and last non-empty bin."""
    nz = np.flatnonzero(np.asarray(counts))
    if nz.size == 0:
        raise InsufficientStatisticsError("histogram is empty")
    return int(nz[0]), int(nz[-1])


def dnl_from_histogram(counts, window=None):
    """DNL in LSB: count / mean count over the window - 1.

    Codes inside the window with no hits read -1 (missing codes); codes
    outside the window are NaN.
    """
    counts = np.asarray(getattr(counts, "counts", counts), dtype=float)
    lo, hi = covered_window(counts) if window is None else window
    dnl = np.full(counts.size, np.nan)
    seg = counts[lo:hi + 1]
    mean = seg.mean()
    if mean == 0:
        raise InsufficientStatisticsError("histogram is empty")
    dnl[lo:hi + 1] = seg / mean - 1
    return dnl


def inl_from_dnl(dnl):
    """Running sum of DNL over the covered codes (NaN outside stays NaN)."""
    dnl = np.asarray(dnl, dtype=float)
    inl = np.full(dnl.size, np.nan)
    ok = np.isfinite(dnl)
    inl[ok] = np.cumsum(dnl[ok])
    return inl


@dataclass
class LinearityReport:
    histogram: np.ndarray
    overflow: int
    window: tuple
    dnl_lsb: np.ndarray
    inl_lsb: np.ndarray
    lsb_ps: float

    @property
    def n_events(self):
        return int(self.histogram.sum())

    def _w(self, a):
        lo, hi = self.window
        return a[lo:hi + 1]

    @property
    def dnl_min(self):
        return float(np.min(self._w(self.dnl_lsb)))

    @property
    def dnl_max(self):
        return float(np.max(self._w(self.dnl_lsb)))

    @property
    def inl_min(self):
        return float(np.min(self._w(self.inl_lsb)))

    @property
    def inl_max(self):
        return float(np.max(self._w(self.inl_lsb)))

    @property
    def inl_pp(self):
        return self.inl_max - self.inl_min

    @property
    def inl_std_lsb(self):
        return float(np.std(self._w(self.inl_lsb)))

    @property
    def inl_std_ps(self):
        return self.inl_std_lsb * self.lsb_ps

    @property
    def missing_codes(self):
        return int(np.sum(self._w(self.histogram) == 0))


def linearity_report(codes, n_codes, lsb_ps, window=None):
    hist = code_density(codes, n_codes)
    win = covered_window(hist.counts) if window is None else tuple(window)
    dnl = dnl_from_histogram(hist.counts, win)
    return LinearityReport(hist.counts, hist.overflow, win, dnl, inl_from_dnl(dnl), lsb_ps)


def pairwise_precision(d_out_i, d_out_j, lsb_ps=1.0):
    """Std of the paired difference (ps) after removing its mean."""
    a = np.asarray(d_out_i, dtype=float)
    b = np.asarray(d_out_j, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.size < MIN_PAIRS:
        raise InsufficientStatisticsError(f"need >= {MIN_PAIRS} pairs, got {a.size}")
    return float(np.std((a - b) * lsb_ps, ddof=1))


@dataclass
class PairwiseMatrix:
    """Symmetric matrix of pair-difference variances sigma_ij^2 (ps^2)."""

    sigma_sq_ps2: np.ndarray

    def __post_init__(self):
        m = np.array(self.sigma_sq_ps2, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("pairwise matrix must be square")
        if m.shape[0] < 3:
            raise ValueError("need at least 3 channels")
        off = ~np.eye(m.shape[0], dtype=bool)
        if not np.allclose(m, m.T, rtol=1e-12, atol=0):
            raise ValueError("pairwise matrix must be symmetric")
        if np.any(m[off] < 0):
            raise ValueError("pairwise variances must be >= 0")
        np.fill_diagonal(m, np.nan)
        self.sigma_sq_ps2 = m

    @property
    def n(self):
        return self.sigma_sq_ps2.shape[0]

    @classmethod
    def from_sigmas(cls, sigma_ij_ps):
        return cls(np.asarray(sigma_ij_ps, dtype=float) ** 2)


class ChannelSigmas(NamedTuple):
    sigma_t_sq_ps2: float
    sigma_sq_ps2: np.ndarray

    @property
    def sigma_t_ps(self):
        return math.sqrt(self.sigma_t_sq_ps2)

    @property
    def sigma_ps(self):
        return np.sqrt(self.sigma_sq_ps2)


def solve_channel_sigmas(m):
    """Per-channel variances from pair-difference variances.

    Sums sigma_ij^2 = sigma_i^2 + sigma_j^2 over j != i, which with the
    total T = sum_i sigma_i^2 gives (n-2) sigma_i^2 + T = row_i and
    T = sum(all off-diagonal) / (2n - 2).
    """
    if not isinstance(m, PairwiseMatrix):
        m = PairwiseMatrix(m)
    n = m.n
    rows = np.nansum(m.sigma_sq_ps2, axis=1)
    total = rows.sum() / (2 * n - 2)
    var = (rows - total) / (n - 2)
    bad = np.flatnonzero(var < 0)
    if bad.size:
        raise InconsistentMatrixError(int(bad[0]), float(var[bad[0]]))
    return ChannelSigmas(float(total), var)


def n_cycle_jitter(edges, n):
    """Std of the span of n consecutive clock periods (ps)."""
    edges = np.asarray(edges, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    spans = edges[n:] - edges[:-n]
    if spans.size < MIN_WINDOWS:
        raise InsufficientStatisticsError(f"need >= {MIN_WINDOWS} windows, got {spans.size}")
    return float(np.std(spans))
