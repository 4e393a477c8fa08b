"""Clock, Gray counter, Nutt-method synchronizer and asynchronous hit generator.

All times are in picoseconds.  Clock edge ``k`` nominally sits at
``k * period_ps``; the shared counter holds ``k mod 256`` right after edge k.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.signal import lfilter

from .errors import CodeRangeError, HorizonError

T_CK_PS = 6250.0
TAU_Q_PS = T_CK_PS / 32
GOLDEN = (1 + math.sqrt(5)) / 2
COUNTER_BITS = 8


@dataclass(frozen=True)
class ClockModel:
    """Statistical model of the 160 MHz clock.

    Edge k = k*period + pattern[k mod len(pattern)] + white_k + wander_k.
    ``white`` is independent per edge.  ``wander`` is a stationary first-order
    Gauss-Markov process (exponential autocorrelation with time constant
    ``wander_corr_time_ns``) whose standard deviation is
    ``wander_plateau_ps``; the N-cycle jitter therefore saturates at
    ``sqrt(2) * plateau`` once N*period is several correlation times.
    ``edge_pattern_ps`` is a deterministic offset sequence repeating every
    ``len(edge_pattern_ps)`` edges (PLL divider spurs); empty means none.
    """

    period_ps: float = T_CK_PS
    white_edge_jitter_ps: float = 0.0
    wander_plateau_ps: float = 0.0
    wander_corr_time_ns: float = 50.0
    edge_pattern_ps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "edge_pattern_ps", tuple(float(x) for x in self.edge_pattern_ps))
        if not (self.period_ps > 0 and math.isfinite(self.period_ps)):
            raise ValueError(f"period_ps must be positive, got {self.period_ps}")
        for name in ("white_edge_jitter_ps", "wander_plateau_ps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not (self.wander_corr_time_ns > 0 and math.isfinite(self.wander_corr_time_ns)):
            raise ValueError(f"wander_corr_time_ns must be > 0, got {self.wander_corr_time_ns}")
        if not all(math.isfinite(x) for x in self.edge_pattern_ps):
            raise ValueError("edge_pattern_ps must be finite")

    @property
    def is_ideal(self):
        return (self.white_edge_jitter_ps == 0 and self.wander_plateau_ps == 0
                and not any(self.edge_pattern_ps))

    @property
    def wander_rho(self):
        """Edge-to-edge autocorrelation of the wander process."""
        return math.exp(-self.period_ps / (self.wander_corr_time_ns * 1e3))


@dataclass
class GrayCounterState:
    width_bits: int = COUNTER_BITS
    value: int = 0

    def tick(self):
        self.value = (self.value + 1) % (1 << self.width_bits)
        return self

    @property
    def output(self):
        return gray_encode(self.value, self.width_bits)


@dataclass(frozen=True)
class HitStream:
    hit_times_ps: np.ndarray
    source: str = "external_list"

    def __post_init__(self):
        t = np.asarray(self.hit_times_ps, dtype=float)
        if t.ndim != 1:
            raise ValueError("hit times must be one-dimensional")
        if t.size and (t[0] < 0 or np.any(np.diff(t) <= 0)):
            raise ValueError("hit times must be >= 0 and strictly increasing")
        object.__setattr__(self, "hit_times_ps", t)
        if self.source not in ("periodic_async", "uniform_random", "external_list"):
            raise ValueError(f"unknown hit source {self.source!r}")

    def __len__(self):
        return self.hit_times_ps.size


def gray_encode(n, width_bits=COUNTER_BITS):
    """Reflected-binary Gray code of ``n``."""
    if not 0 <= n < (1 << width_bits):
        raise CodeRangeError(f"{n} outside [0, {1 << width_bits})")
    return n ^ (n >> 1)


def gray_decode(code, width_bits=COUNTER_BITS):
    if not 0 <= code < (1 << width_bits):
        raise CodeRangeError(f"{code} outside [0, {1 << width_bits})")
    n = code
    shift = code >> 1
    while shift:
        n ^= shift
        shift >>= 1
    return n


def _edge_block(model, rng, start_index, count, wander_prev):
    """Generate ``count`` edges starting at ``start_index``.

    ``wander_prev`` is the wander value at the edge before the block.  Returns
    the edges and the wander value at the last edge.  Draw order within a
    block is fixed: white terms first, then wander innovations.
    """
    k = np.arange(start_index, start_index + count, dtype=float)
    edges = k * model.period_ps
    if model.edge_pattern_ps:
        pat = np.asarray(model.edge_pattern_ps)
        edges += pat[np.arange(start_index, start_index + count) % pat.size]
    if model.white_edge_jitter_ps > 0:
        edges += model.white_edge_jitter_ps * rng.standard_normal(count)
    if model.wander_plateau_ps > 0:
        rho = model.wander_rho
        scale = model.wander_plateau_ps * math.sqrt(1 - rho * rho)
        innov = scale * rng.standard_normal(count)
        wander, _ = lfilter([1.0], [1.0, -rho], innov, zi=[rho * wander_prev])
        edges += wander
        wander_prev = float(wander[-1])
    return edges, wander_prev


def _initial_wander(model, rng):
    if model.wander_plateau_ps > 0:
        return model.wander_plateau_ps * float(rng.standard_normal())
    return 0.0


def sample_clock_edges(model, count, rng):
    """Return ``count`` consecutive edge times starting with edge 0."""
    if count < 1:
        raise ValueError("count must be >= 1")
    wander0 = _initial_wander(model, rng)
    edges, _ = _edge_block(model, rng, 0, count, wander0)
    return edges


class ClockStream:
    """Lazily generated clock realization for long simulated spans.

    Edges are produced in fixed-size blocks so the random draws consumed do
    not depend on which hits are queried; two streams built from the same
    model and seed yield bit-identical edges.
    """

    def __init__(self, model, rng, block=1 << 16):
        self.model = model
        self._rng = rng
        self._block = block
        self._wander = _initial_wander(model, rng)
        self.base = 0                     # index of self.edges[0]
        self.edges = np.empty(0)
        self._next = 0                    # index of next edge to generate

    def _extend(self):
        new, self._wander = _edge_block(self.model, self._rng, self._next, self._block, self._wander)
        self.edges = np.concatenate([self.edges, new])
        self._next += self._block

    def ensure(self, t_ps):
        """Generate edges until the last one is strictly after ``t_ps``."""
        while self.edges.size == 0 or self.edges[-1] <= t_ps:
            self._extend()

    def discard_before(self, t_ps):
        """Drop edges no longer needed by hits at or after ``t_ps``."""
        cut = int(np.searchsorted(self.edges, t_ps, side="right")) - 2
        if cut > 0:
            self.edges = self.edges[cut:]
            self.base += cut

    def locate(self, t_hits):
        """Index and time of the first edge strictly after each hit."""
        t_hits = np.asarray(t_hits, dtype=float)
        if t_hits.size == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        self.ensure(float(t_hits.max()))
        if t_hits.min() < self.edges[0]:
            raise HorizonError("hit precedes the retained part of the clock stream")
        pos = np.searchsorted(self.edges, t_hits, side="right")
        return pos.astype(np.int64) + self.base, self.edges[pos]


def next_edge(t_hits, edges, base=0):
    """Index and time of the first edge strictly after each hit in ``edges``."""
    t_hits = np.asarray(t_hits, dtype=float)
    pos = np.searchsorted(edges, t_hits, side="right")
    if np.any(pos >= len(edges)):
        bad = float(t_hits[pos >= len(edges)][0])
        raise HorizonError(f"hit at {bad} ps is beyond the last generated clock edge")
    return pos.astype(np.int64) + base, np.asarray(edges)[pos]


def synchronize_hit(t_hit, edges, tau_q_ps=TAU_Q_PS, sync_taps=4, eps_meta_ps=0.0, rng=None):
    """Nutt-method synchronization of one hit.

    Returns ``(flash_time, counter_at_flash, delta)``.  A hit exactly on an
    edge is taken by the next edge.  With ``eps_meta_ps > 0`` the decision
    instant is perturbed by a uniform draw in +-eps_meta (metastability
    window); this needs ``rng``.
    """
    t_dec = t_hit
    if eps_meta_ps > 0:
        t_dec = t_hit + rng.uniform(-eps_meta_ps, eps_meta_ps)
    idx, edge = next_edge([t_dec], edges)
    flash = float(edge[0]) + sync_taps * tau_q_ps
    return flash, int(idx[0]) % (1 << COUNTER_BITS), flash - t_hit


def gen_async_hits(mode, count, span_ps, rng, period_ps=None, start_ps=None):
    """Asynchronous hit generator (the on-chip ACG or an external source).

    ``uniform_random``: ``count`` hits uniform in [0, span).
    ``periodic_async``: up to ``count`` hits spaced by ``period_ps`` (default
    T_ck*(1 + 1/golden)) from a random start phase, truncated at ``span``.
    """
    if count < 0 or span_ps <= 0:
        raise ValueError("count must be >= 0 and span positive")
    if count == 0:
        return HitStream(np.empty(0), mode)
    if mode == "uniform_random":
        t = np.sort(rng.uniform(0.0, span_ps, count))
        t = np.unique(t)
        return HitStream(t, mode)
    if mode == "periodic_async":
        period = T_CK_PS * (1 + 1 / GOLDEN) if period_ps is None else float(period_ps)
        if period <= 0:
            raise ValueError("period must be positive")
        start = rng.uniform(0.0, period) if start_ps is None else float(start_ps)
        n = min(count, int(math.floor((span_ps - start) / period)) + 1) if span_ps > start else 0
        return HitStream(start + period * np.arange(n), mode)
    raise ValueError(f"unknown hit generator mode {mode!r}")
