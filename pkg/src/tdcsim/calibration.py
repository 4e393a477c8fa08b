"""Per-channel trim search and software INL corrections.

Three layers: the hardware R_CAL/I_CAL trim chosen from code-density runs,
four per-clock-period offsets ("4-LUT"), and the full per-code INL table.

Sign convention: with INL the running sum of DNL, code k is hit by times
``inl[k]`` LSB later than its nominal position, so corrections are *added*
to ``d_out * LSB``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .delay_lines import TrimSetting
from .errors import CalibrationError, InsufficientStatisticsError
from .measurement import code_density_run

LEVELS = ("none", "hw_only", "four_lut", "total_lut")
QUADRANT_CODES = 256
N_QUADRANTS = 4
UNFIXABLE_INL_PP_LSB = 6.0
MIN_TRIAL_EVENTS = 10_000


def sawtooth_slope(inl_lsb, window, period_codes, start_code):
    """Signed tooth amplitude (LSB per clock period) of an INL curve.

    Codes are grouped by clock period (period boundaries at ``start_code``
    modulo ``period_codes``); a common slope is fitted with a free intercept
    per period, and returned multiplied by ``period_codes``.
    """
    lo, hi = window
    codes = np.arange(lo, hi + 1)
    y = np.asarray(inl_lsb)[lo:hi + 1]
    ok = np.isfinite(y)
    codes, y = codes[ok], y[ok]
    rel = codes - start_code
    block = np.floor_divide(rel, period_codes)
    x = np.mod(rel, period_codes).astype(float)
    xc = x.copy()
    yc = y.copy()
    for b in np.unique(block):
        m = block == b
        xc[m] -= x[m].mean()
        yc[m] -= y[m].mean()
    den = float(np.dot(xc, xc))
    if den == 0:
        return 0.0
    return float(np.dot(xc, yc) / den) * period_codes


@dataclass(frozen=True)
class TrimResult:
    rcal_code: int
    ical_sign: int
    unfixable: bool
    inl_rms_lsb: float
    inl_pp_lsb: float
    trials: int

    @property
    def signed_code(self):
        return self.ical_sign * self.rcal_code

    def setting(self, dac_step_mv):
        return TrimSetting(self.rcal_code, self.ical_sign, dac_step_mv, True)

    def __iter__(self):
        return iter((self.rcal_code, self.ical_sign))


def _as_seed(rng_or_seed):
    if isinstance(rng_or_seed, (int, np.integer)):
        return int(rng_or_seed)
    return int(rng_or_seed.integers(0, 2**63))


def find_rcal(chip, channel, events_per_trial, rng, max_trials=16):
    """Choose the trim setting minimizing the RMS INL of a code-density run.

    Settings are the 63 signed codes s in [-31, 31] (code |s|, current
    direction sign(s)).  The INL sawtooth amplitude is linear in s, so it is
    measured at s = 0 and s = 8, the zero crossing is predicted, and a local
    descent on RMS INL over neighbouring codes finishes the search.  All
    trials reuse the same stimulus and noise draws.
    """
    if events_per_trial < MIN_TRIAL_EVENTS:
        raise InsufficientStatisticsError(f"need >= {MIN_TRIAL_EVENTS} events per trial")
    seed = _as_seed(rng)
    cfg = chip.cfg
    cache = {}

    def measure(s):
        if s not in cache:
            trim = TrimSetting.from_signed(s, chip.dac_step_mv, enabled=s != 0)
            rep, _ = code_density_run(chip.with_trims({channel: trim}), channel, events_per_trial,
                                      seed, tag="trim")
            slope = sawtooth_slope(rep.inl_lsb, rep.window, cfg.codes_per_period, cfg.period_start_code)
            cache[s] = (rep.inl_std_lsb, rep.inl_pp, slope)
        return cache[s]

    a0 = measure(0)[2]
    probe = 8
    a1 = measure(probe)[2]
    gain = (a1 - a0) / probe
    if gain != 0 and math.isfinite(gain):
        s = int(np.clip(round(-a0 / gain), -31, 31))
    else:
        s = 0
    while len(cache) < max_trials:
        here = measure(s)[0]
        nbrs = [t for t in (s - 1, s + 1) if -31 <= t <= 31]
        best = min(nbrs, key=lambda t: measure(t)[0])
        if measure(best)[0] < here:
            s = best
        else:
            break
    rms, pp, _ = measure(s)
    return TrimResult(abs(s), -1 if s < 0 else 1, pp >= UNFIXABLE_INL_PP_LSB, rms, pp, len(cache))


def four_lut_offsets(inl_lsb, window, lsb_ps):
    """Mean INL (ps) over each 256-code quadrant intersected with the window."""
    inl = np.asarray(inl_lsb, dtype=float)
    lo, hi = window
    out = []
    for q in range(N_QUADRANTS):
        a, b = max(lo, q * QUADRANT_CODES), min(hi, (q + 1) * QUADRANT_CODES - 1)
        seg = inl[a:b + 1] if b >= a else np.empty(0)
        seg = seg[np.isfinite(seg)]
        if seg.size == 0:
            raise CalibrationError(f"quadrant {q} has no covered codes")
        out.append(float(seg.mean() * lsb_ps))
    return out


def total_lut(inl_lsb, lsb_ps):
    """Per-code INL in ps (codes outside the covered window get 0)."""
    inl = np.asarray(inl_lsb, dtype=float)
    return np.where(np.isfinite(inl), inl * lsb_ps, 0.0)


@dataclass
class ChannelCalibration:
    channel: int
    rcal_code: int = 0
    ical_sign: int = 1
    four_lut_ps: tuple = (0.0, 0.0, 0.0, 0.0)
    total_lut_ps: np.ndarray = None

    def __post_init__(self):
        if not 0 <= self.rcal_code <= 31:
            raise ValueError("rcal_code outside [0, 31]")
        self.four_lut_ps = tuple(float(x) for x in self.four_lut_ps)
        if len(self.four_lut_ps) != N_QUADRANTS or not all(map(math.isfinite, self.four_lut_ps)):
            raise ValueError("four_lut_ps needs 4 finite offsets")
        if self.total_lut_ps is not None:
            self.total_lut_ps = np.asarray(self.total_lut_ps, dtype=float)


@dataclass
class CalibrationTable:
    lsb_ps: float
    n_codes: int = 1024
    channels: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    levels: tuple = ("none", "hw_only", "four_lut")

    def __getitem__(self, channel):
        return self.channels[channel]

    def add(self, cal):
        if cal.total_lut_ps is not None and cal.total_lut_ps.size != self.n_codes:
            raise ValueError(f"total LUT must have {self.n_codes} entries")
        self.channels[cal.channel] = cal


def apply_correction(d_out, table, level, channel):
    """Corrected time in ps for code(s) ``d_out`` of ``channel``."""
    if level not in LEVELS:
        raise ValueError(f"unknown correction level {level!r}")
    d = np.asarray(d_out)
    t = d * table.lsb_ps
    if level in ("none", "hw_only"):
        if level == "hw_only" and channel not in table.channels:
            raise CalibrationError(f"no trim recorded for channel {channel}")
        return t
    if channel not in table.channels:
        raise CalibrationError(f"no calibration for channel {channel}")
    cal = table.channels[channel]
    if level == "four_lut":
        q = (d // QUADRANT_CODES) % N_QUADRANTS
        return t + np.asarray(cal.four_lut_ps)[q]
    if cal.total_lut_ps is None:
        raise CalibrationError(f"channel {channel} has no total LUT")
    return t + cal.total_lut_ps[d % table.n_codes]


def residual_inl(inl_lsb, table, level, channel):
    """INL (LSB) left after a correction level is applied to code positions."""
    codes = np.arange(np.asarray(inl_lsb).size)
    corr = apply_correction(codes, table, level, channel) - codes * table.lsb_ps
    return np.asarray(inl_lsb) - corr / table.lsb_ps


def calibrate_channel(chip, channel, events, seed, trim=None, with_total_lut=True):
    """Code-density calibration run on an (already trimmed) channel."""
    rep, _ = code_density_run(chip, channel, events, seed, tag="calibration")
    setting = chip.trims[channel]
    four = four_lut_offsets(rep.inl_lsb, rep.window, rep.lsb_ps)
    lut = total_lut(rep.inl_lsb, rep.lsb_ps) if with_total_lut else None
    return ChannelCalibration(channel, setting.rcal_code if setting.enabled else 0,
                              setting.ical_sign, four, lut), rep
