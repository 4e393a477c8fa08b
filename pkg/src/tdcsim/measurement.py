"""Stimulus generation and simulated measurement runs.

Random streams are keyed ``(seed, "<tag>/<role>", channel)`` so two runs
with the same tag see identical stimulus, clock and noise draws (common
random numbers), which the trim search relies on.
"""

import math

import numpy as np

from .characterization import linearity_report
from .conversion import convert_stream
from .rng import substream
from .timebase import GOLDEN, gen_async_hits

# four clock periods times the golden ratio: longer than any conversion,
# and its phase modulo the 25 ns code window is maximally equidistributed
ACG_PERIOD_FACTOR = 4 * GOLDEN


def acg_hits(count, seed, channel=0, tag="linearity", period_ps=None, t_ck_ps=6250.0):
    """Periodic hits from the asynchronous clock generator."""
    period = ACG_PERIOD_FACTOR * t_ck_ps if period_ps is None else period_ps
    rng = substream(seed, f"{tag}/stimulus", channel)
    span = period * (count + 1)
    return gen_async_hits("periodic_async", count, span, rng, period_ps=period).hit_times_ps


def random_hits(count, seed, channel=0, tag="random", mean_spacing_ps=100_000.0):
    """Uniformly random hits with the given mean spacing (some may be dropped)."""
    rng = substream(seed, f"{tag}/stimulus", channel)
    return gen_async_hits("uniform_random", count, count * mean_spacing_ps, rng).hit_times_ps


def run_channels(chip, hits, seed, tag):
    """Convert ``hits`` ({channel: times}) on a shared clock; {channel: batch}."""
    clock_rng = substream(seed, f"{tag}/clock", 0)
    conv = {c: substream(seed, f"{tag}/conversion", c) for c in hits}
    return convert_stream(chip, hits, clock_rng, conv)


def code_density_run(chip, channel, events, seed, tag="linearity", stimulus="acg", window=None):
    """Code-density measurement on one channel; returns (LinearityReport, batch)."""
    if stimulus == "acg":
        t = acg_hits(events, seed, channel, tag, t_ck_ps=chip.clock.period_ps)
    elif stimulus == "uniform_random":
        t = random_hits(events, seed, channel, tag)
    else:
        raise ValueError(f"unknown stimulus {stimulus!r}")
    batch = run_channels(chip, {channel: t}, seed, tag)[channel]
    codes = batch.d_out[batch.kept]
    report = linearity_report(codes, 1 << chip.cfg.truncate_to_bits, chip.cfg.lsb_ps, window)
    return report, batch


def pair_hits(n_pairs, delay_ps, seed, tag, window_ps=25_000.0, guard_ps=40_000.0):
    """Start times for paired pulses: one per slot, phase uniform over ``window_ps``.

    Slots are long enough that neither channel is still converting when the
    next pulse arrives.
    """
    rng = substream(seed, f"{tag}/stimulus", 0)
    slot = window_ps + abs(delay_ps) + guard_ps
    base = slot * np.arange(n_pairs) + rng.uniform(0.0, window_ps, n_pairs)
    return base + max(0.0, -delay_ps)


def pair_run(chip, ch_a, ch_b, delay_ps, n_pairs, seed, tag="pairs"):
    """Pulse ``ch_a`` at t and ``ch_b`` at t + delay; returns both batches."""
    t = pair_hits(n_pairs, delay_ps, seed, tag)
    out = run_channels(chip, {ch_a: t, ch_b: t + delay_ps}, seed, tag)
    return out[ch_a], out[ch_b]


def unwrap_difference(diff_ps, expected_ps, modulus_ps):
    """Fold code-window wraparound out of a time difference near ``expected``."""
    return expected_ps + np.mod(diff_ps - expected_ps + modulus_ps / 2, modulus_ps) - modulus_ps / 2
