"""Chip-level experiments: trimming, calibration, delay sweeps, temperature,
yield Monte-Carlo, TA jitter and latency audits.

Each function is deterministic in its ``seed`` argument.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .calibration import (
    LEVELS, CalibrationTable, apply_correction, calibrate_channel, find_rcal,
)
from .conversion import (
    ChipConfig, MismatchConfig, build_chip, conversion_latency_bounds,
)
from .delay_lines import PvtCondition, sample_total_deviation, yield_estimate
from .errors import InsufficientStatisticsError
from .measurement import code_density_run, pair_hits, random_hits, run_channels, unwrap_difference
from .rng import substream
from .time_amplifier import (
    TaConfig, input_referred_jitter, pulse_train_widths, ta_amplify_batch, train_jitter_sigma,
)
from .timebase import ClockModel

DEFAULT_MISMATCH = MismatchConfig()
DEFAULT_CLOCK = ClockModel(white_edge_jitter_ps=2.0, wander_plateau_ps=12.0,
                           wander_corr_time_ns=50.0, edge_pattern_ps=(-8.0, 0.0, 8.0, 0.0))
DEFAULT_DELAYS_NS = (-25.0, -12.5, -3.5, 0.0, 3.5, 7.0, 12.5, 25.0, 50.0, 100.0, 200.0, 300.0, 400.0)
CALIBRATION_EVENTS = 200_000


def default_chip(seed=1, pvt=PvtCondition(), cfg=ChipConfig(), clock=DEFAULT_CLOCK, channels=None):
    return build_chip(cfg, pvt, clock, seed=seed, channels=channels)


def trim_chip(chip, seed, events_per_trial=CALIBRATION_EVENTS, channels=None):
    """Run find_rcal on each channel; returns (trimmed chip, {channel: TrimResult})."""
    channels = range(chip.n_channels) if channels is None else channels
    results = {c: find_rcal(chip, c, events_per_trial, seed) for c in channels}
    trims = {c: r.setting(chip.dac_step_mv) for c, r in results.items()}
    return chip.with_trims(trims), results


def calibrate(chip, seed, events=CALIBRATION_EVENTS, channels=None, with_total_lut=True):
    """Software calibration tables from code-density runs on a trimmed chip."""
    channels = range(chip.n_channels) if channels is None else channels
    levels = ("none", "hw_only", "four_lut") + (("total_lut",) if with_total_lut else ())
    table = CalibrationTable(chip.cfg.lsb_ps, 1 << chip.cfg.truncate_to_bits,
                             meta={"seed": seed, "temperature_c": chip.pvt.temperature_c,
                                   "events": events},
                             levels=levels)
    reports = {}
    for c in channels:
        cal, rep = calibrate_channel(chip, c, events, seed, with_total_lut=with_total_lut)
        table.add(cal)
        reports[c] = rep
    return table, reports


def linearity(chip, channels, events, seed, tag="linearity", stimulus="acg"):
    return {c: code_density_run(chip, c, events, seed, tag=tag, stimulus=stimulus)[0] for c in channels}


def default_pairs(n_channels, group=36):
    """(i, i + group) pairs: first subgroup pulsed first, second delayed."""
    if n_channels > group:
        return [(i, i + group) for i in range(min(group, n_channels - group))]
    half = n_channels // 2
    return [(i, i + half) for i in range(half)]


@dataclass
class SweepPoint:
    delay_ns: float
    level: str
    precision_ps: float         # single-channel: pair std / sqrt(2), mean over pairs
    precision_spread_ps: float
    mean_error_ps: float        # mean measured - expected difference, averaged over pairs


def _pair_precision(ba, bb, table, level, a, b, delay_ps):
    keep = ba.kept & bb.kept
    if keep.sum() < 100:
        raise InsufficientStatisticsError(f"pair ({a}, {b}): only {int(keep.sum())} usable pairs")
    ta = apply_correction(ba.d_out[keep], table, level, a)
    tb = apply_correction(bb.d_out[keep], table, level, b)
    modulus = table.n_codes * table.lsb_ps
    raw = tb - ta
    # centre on the circular mean before unwrapping code-window wraparound
    ang = np.angle(np.mean(np.exp(2j * np.pi * raw / modulus)))
    centre = ang / (2 * np.pi) * modulus
    diff = unwrap_difference(raw, centre, modulus)
    expected = unwrap_difference(np.array([delay_ps]), centre, modulus)[0]
    return float(np.std(diff, ddof=1)) / math.sqrt(2), float(np.mean(diff) - expected)


def delay_sweep(raw_chip, trimmed_chip, table, seed, delays_ns=DEFAULT_DELAYS_NS, n_pairs=10_000,
                pairs=None, levels=LEVELS):
    """Timing precision versus inter-pulse delay for each correction level.

    Level ``none`` uses the untrimmed chip; the other levels use the trimmed
    chip's data with the table's corrections.  Per-pair ``mean_error`` is
    relative to the channel pair's offset at zero correction and is only
    meaningful between delays of the same level.
    """
    pairs = default_pairs(raw_chip.n_channels, raw_chip.cfg.master_group) if pairs is None else pairs
    none_table = CalibrationTable(table.lsb_ps, table.n_codes, levels=("none",))
    out = []
    for d_ns in delays_ns:
        d = d_ns * 1e3
        t = pair_hits(n_pairs, d, seed, f"sweep{d_ns:g}")
        hits = {}
        for a, b in pairs:
            hits[a] = t
            hits[b] = t + d
        runs = {}
        if "none" in levels:
            runs["raw"] = run_channels(raw_chip, hits, seed, f"sweep{d_ns:g}")
        if any(lv != "none" for lv in levels):
            runs["trim"] = run_channels(trimmed_chip, hits, seed, f"sweep{d_ns:g}")
        for level in levels:
            res = runs["raw" if level == "none" else "trim"]
            tab = none_table if level == "none" else table
            vals = [_pair_precision(res[a], res[b], tab, level, a, b, d) for a, b in pairs]
            p = np.array([v[0] for v in vals])
            e = np.array([v[1] for v in vals])
            out.append(SweepPoint(d_ns, level, float(p.mean()), float(p.std()), float(e.mean())))
    return out


def sweep_summary(points):
    """Per level: mean, min and max precision over the sweep."""
    out = {}
    for lv in LEVELS:
        p = np.array([x.precision_ps for x in points if x.level == lv])
        if p.size:
            out[lv] = {"mean": float(p.mean()), "min": float(p.min()), "max": float(p.max())}
    return out


def ordering_holds(summary, key="mean"):
    vals = [summary[lv][key] for lv in LEVELS if lv in summary]
    return all(a >= b for a, b in zip(vals, vals[1:]))


def temperature_sweep(trimmed_chip, channels, events, seed, temperatures=(-35.0, 25.0, 65.0)):
    """Linearity of a chip trimmed at its current PVT, re-evaluated at other
    temperatures (same corner and supply); {temperature: {channel: report}}."""
    base = trimmed_chip.pvt
    out = {}
    for t in temperatures:
        chip = trimmed_chip.at(PvtCondition(base.corner, base.supply_v, t))
        out[t] = linearity(chip, channels, events, seed, tag=f"temp{t:g}")
    return out


def yield_mc(n_chips, n_channels, sigma_d_ps, threshold_ps, seed, period_ps=6250.0, chunk=2000):
    """Fraction of chips whose channels all deviate by less than ``threshold``.

    Deviations are drawn as a pure relative gain spread with total-delay std
    ``sigma_d_ps``.  Returns (empirical yield, formula yield).
    """
    rng = substream(seed, "yield", 0)
    good = 0
    done = 0
    while done < n_chips:
        m = min(chunk, n_chips - done)
        dev = sample_total_deviation(m * n_channels, sigma_d_ps / period_ps, 0.0, rng,
                                     period_ps=period_ps).reshape(m, n_channels)
        good += int(np.sum(np.all(np.abs(dev) < threshold_ps, axis=1)))
        done += m
    return good / n_chips, yield_estimate(sigma_d_ps, threshold_ps, n_channels)


def ta_jitter_check(sigma_w_ps, trials, seed, ns=(1, 2, 4, 8, 16), t_r_ps=300.0):
    """Monte-Carlo train-width std versus the closed form for each n.

    Also amplifies at gains 8 and 16 through the chip-level TA path (static
    error off) and reports the input-referred std.  Returns a list of rows
    (n, mc_std, formula_std, rel_err, mc_input_referred, formula_input_referred).
    """
    from .time_amplifier import ZERO_ERROR
    rows = []
    for n in ns:
        w = pulse_train_widths(t_r_ps, n, sigma_w_ps, trials, substream(seed, "ta_jitter", n))
        mc = float(np.std(w, ddof=1))
        f = train_jitter_sigma(n, sigma_w_ps)
        rows.append((n, mc, f, mc / f - 1 if f else 0.0, mc / n, input_referred_jitter(n, sigma_w_ps)))
    gains = []
    for a in (8, 16):
        cfg = TaConfig(gain_a=a, sigma_w_ps=sigma_w_ps, static_error=ZERO_ERROR)
        z = substream(seed, "ta_gain", a).standard_normal((trials, a))
        d = ta_amplify_batch(np.full(trials, t_r_ps), cfg, PvtCondition(), z)
        gains.append((a, float(np.std(d, ddof=1)) / a, input_referred_jitter(a, sigma_w_ps)))
    return rows, gains


def latency_audit(chip, events, seed, channel=0, mean_spacing_ps=20_000.0):
    """Latencies of kept conversions under random hits; returns (batch, bounds)."""
    t = random_hits(events, seed, channel, "latency", mean_spacing_ps)
    batch = run_channels(chip, {channel: t}, seed, "latency")[channel]
    return batch, conversion_latency_bounds(chip.cfg)


def with_gain(cfg, gain_a):
    return replace(cfg, ta=replace(cfg.ta, gain_a=gain_a))
