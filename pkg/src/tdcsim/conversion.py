"""Per-hit conversion: synchronizer, coarse line, residue, TA, fine line, code assembly.

A chip is an immutable snapshot (PVT, locked master voltage, channel
mismatch, trims).  Conversions are computed in batches; the scalar
functions below wrap the batch path or restate it for single events.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
import math

import numpy as np

from . import kernels
from .delay_lines import (
    DEFAULT_MODEL, IDEAL_CHANNEL, N_CDL_TAPS, N_GDL_TAPS, N_SIGNIFICANT_TAPS,
    ChannelMismatch, DelayElementModel, PvtCondition, TrimSetting,
    cdl_tap_delays, default_dac_step, gdl_tap_delays, gradient_profile, lock_master_dll, sample_channel,
    trimmed_vctrl,
)
from .errors import DomainError, HorizonError, ResidueError
from .time_amplifier import TaConfig, ta_amplify_batch, ta_busy_time
from .timebase import COUNTER_BITS, T_CK_PS, ClockModel, ClockStream, next_edge
from . import rng as rngmod

WINDOW_TAPS = 6
NO_CODE = -1


@dataclass(frozen=True)
class MismatchConfig:
    sigma_gain_rel: float = 0.00448
    sigma_tap_ps: float = 3.5
    sigma_voff_mv: float = 1.0
    tap_jitter_ps: float = 1.9
    sigma_gradient_ps: float = 0.0
    # same delay drift along every slave coarse line (layout), ps at the span ends
    systematic_gradient_ps: float = 2.5


@dataclass(frozen=True)
class ChipConfig:
    n_taps_significant: int = N_SIGNIFICANT_TAPS
    n_taps_total: int = N_CDL_TAPS
    gdl_taps: int = N_GDL_TAPS
    tau_q_ps: float = T_CK_PS / N_SIGNIFICANT_TAPS
    ta: TaConfig = TaConfig()
    truncate_to_bits: int = 10
    channels: int = 72
    master_group: int = 36
    sync_taps: int = 4
    encode_tail_ps: float = 3000.0
    stop_window_ps: tuple = (800.0, 7000.0)
    latency_margin_ps: float = 800.0
    mismatch: MismatchConfig = MismatchConfig()
    model: DelayElementModel = DEFAULT_MODEL
    dac_step_mv: float = 0.0          # 0 selects the default sizing rule

    def __post_init__(self):
        if self.n_taps_total != self.n_taps_significant + 10:
            raise ValueError("the coarse line must have 10 margin taps")
        if self.gdl_taps != N_GDL_TAPS:
            raise ValueError(f"the gated line has {N_GDL_TAPS} taps")
        if abs(self.tau_q_ps * self.n_taps_significant - T_CK_PS) > 1e-9:
            raise ValueError("tau_q * 32 must equal the clock period")
        if not 1 <= self.truncate_to_bits <= 17:
            raise ValueError("truncate_to_bits must be in [1, 17]")
        if self.channels < 1 or self.master_group < 1:
            raise ValueError("channels and master_group must be >= 1")

    @property
    def gain_a(self):
        return self.ta.gain_a

    @property
    def lsb_ps(self):
        return self.tau_q_ps / self.ta.gain_a

    @property
    def codes_per_period(self):
        return self.n_taps_significant * self.ta.gain_a

    @property
    def period_start_code(self):
        """Code (mod codes_per_period) of the earliest hit phase in a period."""
        return (-(self.sync_taps - 1) * self.gain_a) % self.codes_per_period


@dataclass
class ConversionRecord:
    channel: int
    t_hit_ps: float
    d_counter: int
    d_ctdc: int
    d_ftdc: int
    d_out: int
    latency_ps: float
    dropped: bool
    flags: int = 0

    COLUMNS = ("channel", "t_hit_ps", "d_counter", "d_ctdc", "d_ftdc", "d_out", "latency_ps", "dropped")


FLAG_CTDC_SAT = 1
FLAG_FTDC_SAT = 2
FLAG_OVERFLOW = 4
FLAG_WINDOW = 8
FLAG_FTDC_RANGE = 16


@dataclass
class ConversionBatch:
    """Column arrays for a sequence of conversions on one channel.

    ``d_out_wide`` is the untruncated code built from the full edge index
    (no counter wrap); dropped events carry NO_CODE in every code column.
    """

    channel: int
    t_hit_ps: np.ndarray
    d_counter: np.ndarray
    d_ctdc: np.ndarray
    d_ftdc: np.ndarray
    d_out: np.ndarray
    d_out_wide: np.ndarray
    latency_ps: np.ndarray
    dropped: np.ndarray
    flags: np.ndarray
    residue_ps: np.ndarray

    def __len__(self):
        return self.t_hit_ps.size

    @property
    def kept(self):
        return ~self.dropped

    def records(self):
        for i in range(len(self)):
            yield ConversionRecord(self.channel, float(self.t_hit_ps[i]), int(self.d_counter[i]),
                                   int(self.d_ctdc[i]), int(self.d_ftdc[i]), int(self.d_out[i]),
                                   float(self.latency_ps[i]), bool(self.dropped[i]), int(self.flags[i]))

    @staticmethod
    def concat(parts, channel):
        if not parts:
            e = np.empty(0)
            ei = np.empty(0, dtype=np.int64)
            return ConversionBatch(channel, e, ei, ei, ei, ei, ei, e, np.empty(0, bool), ei, e)
        cols = {f: np.concatenate([getattr(p, f) for p in parts])
                for f in ("t_hit_ps", "d_counter", "d_ctdc", "d_ftdc", "d_out", "d_out_wide",
                          "latency_ps", "dropped", "flags", "residue_ps")}
        return ConversionBatch(channel, **cols)


def assemble(d_counter, d_ctdc, d_ftdc, cfg=ChipConfig(), truncate=True):
    """Combine the three partial codes into the output code.

    d_out = d_counter*N*A - (d_ctdc - 1)*A - d_ftdc, reduced modulo
    2**truncate_to_bits when ``truncate``.  Works on ints or arrays.
    """
    a = cfg.gain_a
    full = d_counter * (cfg.n_taps_significant * a) - (d_ctdc - 1) * a - d_ftdc
    if not truncate:
        return full
    return full % (1 << cfg.truncate_to_bits)


def conversion_latency_bounds(cfg=ChipConfig()):
    """Conversion-time budget (ps): stop window + A*T_loop + encode tail (+ margin)."""
    busy = ta_busy_time(cfg.ta)
    lo, hi = cfg.stop_window_ps
    return lo + busy + cfg.encode_tail_ps, hi + cfg.latency_margin_ps + busy + cfg.encode_tail_ps


def power_estimate(hit_rate_mhz):
    """Per-channel power (mW), linear between idle and one hit per 25 ns."""
    if not 0 <= hit_rate_mhz <= 40:
        raise DomainError(f"hit rate {hit_rate_mhz} MHz outside [0, 40]")
    return 0.101 + (2.2 - 0.101) * hit_rate_mhz / 40


@dataclass(frozen=True)
class ChannelLines:
    """Static cumulative delays of one channel's lines (index 0 = 0 ps)."""

    cdl_cum: np.ndarray
    gdl_cum: np.ndarray
    tap_jitter_ps: float
    v_mv: float


@dataclass(frozen=True)
class Chip:
    cfg: ChipConfig
    pvt: PvtCondition
    clock: ClockModel
    channels: tuple
    trims: tuple
    dac_step_mv: float

    @cached_property
    def v_master(self):
        return lock_master_dll(self.pvt, self.cfg.model, self.cfg.n_taps_significant)

    @cached_property
    def tau_master(self):
        return self.cfg.model.base_delay(self.v_master, self.pvt)

    @property
    def n_channels(self):
        return len(self.channels)

    def group_of(self, channel):
        return channel // self.cfg.master_group

    def trim(self, channel):
        return self.trims[channel]

    def channel_v(self, channel):
        ch = self.channels[channel]
        return trimmed_vctrl(self.v_master, self.trims[channel], ch.v_off_mv)

    def lines(self, channel):
        cache = self.__dict__.setdefault("_lines", {})
        if channel not in cache:
            ch = self.channels[channel]
            v = self.channel_v(channel)
            cdl = np.concatenate([[0.0], np.cumsum(cdl_tap_delays(ch, v, self.pvt, self.cfg.model))])
            gdl = np.concatenate([[0.0], np.cumsum(gdl_tap_delays(ch, self.v_master, self.pvt, self.cfg.model))])
            cache[channel] = ChannelLines(cdl, gdl, ch.tap_jitter_ps, v)
        return cache[channel]

    def with_trims(self, trims):
        """Copy with some channels' trims replaced (``trims``: {channel: TrimSetting})."""
        new = list(self.trims)
        for c, t in trims.items():
            new[c] = t
        return replace(self, trims=tuple(new))

    def untrimmed(self):
        return replace(self, trims=tuple(TrimSetting(0, 1, self.dac_step_mv, False) for _ in self.channels))

    def at(self, pvt):
        """Same silicon at another operating point; the master relocks, trims stay."""
        return replace(self, pvt=pvt)

    def with_clock(self, clock):
        return replace(self, clock=clock)

    def with_channel(self, channel, mismatch):
        chans = list(self.channels)
        chans[channel] = mismatch
        return replace(self, channels=tuple(chans))


def build_chip(cfg=ChipConfig(), pvt=PvtCondition(), clock=ClockModel(), seed=0, ideal=False, channels=None):
    """Sample a chip's channel population from the ``(seed, 'mismatch', c)`` substreams."""
    n = cfg.channels if channels is None else channels
    m = cfg.mismatch
    if ideal:
        chans = tuple(IDEAL_CHANNEL for _ in range(n))
    else:
        chans = tuple(sample_channel(m.sigma_gain_rel, m.sigma_tap_ps, m.sigma_voff_mv,
                                     rngmod.substream(seed, "mismatch", c), m.tap_jitter_ps,
                                     m.sigma_gradient_ps)
                      for c in range(n))
        if m.systematic_gradient_ps:
            bow = m.systematic_gradient_ps * gradient_profile()
            chans = tuple(replace(ch, cdl_tap_eps_ps=tuple(np.asarray(ch.cdl_tap_eps_ps) + bow))
                          for ch in chans)
    nominal_v = lock_master_dll(PvtCondition(), cfg.model, cfg.n_taps_significant)
    step = cfg.dac_step_mv or default_dac_step(nominal_v, m.sigma_gain_rel, m.sigma_voff_mv)
    trims = tuple(TrimSetting(0, 1, step, False) for _ in range(n))
    return Chip(cfg, pvt, clock, chans, trims, step)


def ideal_chip(cfg=ChipConfig(), channels=1):
    """Noiseless, mismatch-free chip with a zero-error TA and jitter-free clock."""
    from .time_amplifier import ZERO_ERROR
    cfg = replace(cfg, ta=replace(cfg.ta, sigma_w_ps=0.0, static_error=ZERO_ERROR),
                  mismatch=MismatchConfig(0.0, 0.0, 0.0, 0.0))
    return build_chip(cfg, PvtCondition(), ClockModel(), ideal=True, channels=channels)


def gen_residue(delta_ps, k, cdl_cum):
    """Residue pulse width: cumulative delay of tap k+2 minus delta."""
    r = k + 2
    if r > len(cdl_cum) - 1:
        raise ResidueError(f"residue reference tap {r} exceeds the {len(cdl_cum) - 1}-tap line")
    return float(cdl_cum[r] - delta_ps)


def convert_events(chip, channel, t_hit, edge_index, edge_time, rng, busy_until=-math.inf):
    """Convert hits whose flash edges are already located.

    Random draws per batch, in order: coarse-line window normals (n, 7),
    TA circulation normals (n, A), fine-line window normals (n, 7); each
    block is skipped when its noise amplitude is zero.
    Returns ``(batch, busy_until_after)``.
    """
    cfg = chip.cfg
    a = cfg.gain_a
    n = t_hit.size
    lines = chip.lines(channel)
    sigma_j = lines.tap_jitter_ps
    zero_w = np.zeros((n, WINDOW_TAPS + 1))

    flash = edge_time + cfg.sync_taps * chip.tau_master
    delta = flash - t_hit

    z_c = rng.standard_normal((n, WINDOW_TAPS + 1)) if sigma_j > 0 else zero_w
    k, t_r, st_c = kernels.window_count(delta, lines.cdl_cum, z_c, sigma_j, 2)

    z_t = rng.standard_normal((n, a)) if cfg.ta.sigma_w_ps > 0 else np.zeros((n, a))
    good = np.isfinite(t_r) & (t_r > 0)
    train = np.zeros(n)
    train[good] = ta_amplify_batch(t_r[good], cfg.ta, chip.pvt, z_t[good])

    z_g = rng.standard_normal((n, WINDOW_TAPS + 1)) if sigma_j > 0 else zero_w
    raw, _, st_g = kernels.window_count(train, lines.gdl_cum, z_g, sigma_j, -1)

    flags = np.zeros(n, dtype=np.int64)
    flags[st_c == kernels.STATUS_SATURATED] |= FLAG_CTDC_SAT
    flags[st_c == kernels.STATUS_OVERFLOW] |= FLAG_OVERFLOW
    flags[(st_c == kernels.STATUS_WINDOW) | (st_g == kernels.STATUS_WINDOW)] |= FLAG_WINDOW
    flags[st_g == kernels.STATUS_SATURATED] |= FLAG_FTDC_SAT
    flags[(raw < a) | (raw > 2 * a)] |= FLAG_FTDC_RANGE

    # the fine encoder spans exactly [A, 2A] taps per coarse step; a residue
    # stretched by coarse-tap mismatch saturates there instead of spilling
    # into the neighbouring coarse step's codes
    d_ftdc = 2 * a - np.clip(raw, a, 2 * a)
    d_counter = edge_index % (1 << COUNTER_BITS)
    d_out_wide = assemble(edge_index, k, d_ftdc, cfg, truncate=False)
    d_out = d_out_wide % (1 << cfg.truncate_to_bits)
    t_r_lat = np.where(np.isfinite(t_r), t_r, 2 * chip.tau_master)
    latency = delta + t_r_lat + ta_busy_time(cfg.ta) + cfg.encode_tail_ps
    dropped, busy_until = kernels.drop_mask(np.ascontiguousarray(t_hit, dtype=float),
                                            np.ascontiguousarray(t_hit + latency), busy_until)
    # a conversion without a usable residue produces no code
    dropped |= ~good
    batch = ConversionBatch(channel, t_hit, d_counter, k, d_ftdc, d_out, d_out_wide,
                            latency, dropped, flags, t_r)
    for col in ("d_counter", "d_ctdc", "d_ftdc", "d_out", "d_out_wide"):
        getattr(batch, col)[dropped] = NO_CODE
    return batch, busy_until


def convert_stream(chip, hits, clock_rng, conv_rngs, chunk_periods=1 << 16):
    """Convert hits on several channels sharing one clock realization.

    ``hits`` maps channel -> sorted hit times.  Hits are processed in fixed
    time chunks of ``chunk_periods`` clock periods so random consumption does
    not depend on the hit pattern.  Returns {channel: ConversionBatch}.
    """
    stream = ClockStream(chip.clock, clock_rng)
    hits = {c: np.asarray(t, dtype=float) for c, t in hits.items()}
    t_max = max((t[-1] for t in hits.values() if t.size), default=0.0)
    span = chunk_periods * chip.clock.period_ps
    parts = {c: [] for c in hits}
    busy = {c: -math.inf for c in hits}
    pos = {c: 0 for c in hits}
    t0 = 0.0
    while t0 <= t_max:
        t1 = t0 + span
        for c, t in hits.items():
            j = int(np.searchsorted(t, t1, side="left"))
            sel = t[pos[c]:j]
            pos[c] = j
            if sel.size == 0:
                continue
            idx, edge = stream.locate(sel)
            b, busy[c] = convert_events(chip, c, sel, idx, edge, conv_rngs[c], busy[c])
            parts[c].append(b)
        stream.discard_before(t1)
        t0 = t1
    return {c: ConversionBatch.concat(parts[c], c) for c in hits}


class ChannelSession:
    """Hit-by-hit conversion on one channel against a fixed clock realization.

    Keeps the one-conversion-at-a-time state so a hit arriving while the
    previous conversion is still running is reported as dropped.
    """

    def __init__(self, chip, channel, edges, rng):
        self.chip = chip
        self.channel = channel
        self.edges = np.asarray(edges, dtype=float)
        self.rng = rng
        self.busy_until = -math.inf

    def convert(self, t_hit_ps):
        idx, edge = next_edge([t_hit_ps], self.edges)
        batch, self.busy_until = convert_events(self.chip, self.channel, np.array([float(t_hit_ps)]),
                                                idx, edge, self.rng, self.busy_until)
        return next(batch.records())


def convert_hit(t_hit_ps, chip, channel, rng, edges=None):
    """Convert a single isolated hit (clock realization built if not given)."""
    if edges is None:
        n_edges = int(t_hit_ps // chip.clock.period_ps) + 3
        from .timebase import sample_clock_edges
        edges = sample_clock_edges(chip.clock, n_edges, rng)
    return ChannelSession(chip, channel, edges, rng).convert(t_hit_ps)


def ftdc_encode(train_ps, ch, v_f_mv, pvt, cfg=ChipConfig(), rng=None):
    """Fine code of a pulse-train duration: ``(d_ftdc, raw, saturated)``.

    raw counts gated-line taps whose cumulative (jittered) delay is <= the
    train duration, capped at 40; the reported code is 2A - raw.
    """
    if train_ps < 0:
        raise DomainError("train duration must be >= 0")
    cum = np.cumsum(gdl_tap_delays(ch, v_f_mv, pvt, cfg.model))
    if ch.tap_jitter_ps > 0:
        cum = cum + np.cumsum(ch.tap_jitter_ps * rng.standard_normal(N_GDL_TAPS))
    raw = int(np.searchsorted(cum, train_ps, side="right"))
    return 2 * cfg.gain_a - raw, raw, raw >= N_GDL_TAPS
