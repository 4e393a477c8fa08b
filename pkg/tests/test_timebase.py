import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from tdcsim.characterization import n_cycle_jitter
from tdcsim.errors import CodeRangeError, HorizonError
from tdcsim.rng import substream
from tdcsim.timebase import (
    GOLDEN, T_CK_PS, ClockModel, ClockStream, GrayCounterState, HitStream, gen_async_hits,
    gray_decode, gray_encode, sample_clock_edges, synchronize_hit,
)


@pytest.mark.parametrize("n,code", [(0, 0), (2, 3), (7, 4)])
def test_gray_examples(n, code):
    assert gray_encode(n) == code
    assert gray_decode(code) == n


@given(st.integers(0, 255))
def test_gray_roundtrip_and_single_bit(n):
    assert gray_decode(gray_encode(n)) == n
    nxt = (n + 1) % 256
    assert bin(gray_encode(n) ^ gray_encode(nxt)).count("1") == 1


def test_gray_range():
    with pytest.raises(CodeRangeError):
        gray_encode(256)
    with pytest.raises(CodeRangeError):
        gray_decode(-1)


def test_counter_wraps():
    c = GrayCounterState(value=255).tick()
    assert c.value == 0 and c.output == 0


def test_ideal_edges():
    assert list(sample_clock_edges(ClockModel(), 3, substream(0, "t"))) == [0.0, 6250.0, 12500.0]


def test_white_jitter_period_std():
    e = sample_clock_edges(ClockModel(white_edge_jitter_ps=5.0), 100_001, substream(1, "t"))
    s = np.std(np.diff(e))
    assert abs(s / (math.sqrt(2) * 5) - 1) < 0.02


def test_wander_n_cycle_saturates():
    m = ClockModel(wander_plateau_ps=12.0, wander_corr_time_ns=50.0)
    e = sample_clock_edges(m, 400_000, substream(1, "wander"))
    j = [n_cycle_jitter(e, n) for n in (1, 4, 16, 64, 256, 1024)]
    assert j[0] < j[1] < j[2] < j[3]
    # 1024 periods = 6.4 us, far beyond the 50 ns correlation time
    assert abs(j[-1] / (math.sqrt(2) * 12) - 1) < 0.05


def test_n_cycle_jitter_white_and_ideal():
    e = sample_clock_edges(ClockModel(white_edge_jitter_ps=5.0), 200_000, substream(2, "t"))
    for n in (1, 10, 100):
        assert abs(n_cycle_jitter(e, n) / 7.0711 - 1) < 0.02
    e0 = sample_clock_edges(ClockModel(), 2000, substream(2, "t"))
    assert n_cycle_jitter(e0, 5) == 0


def test_edge_pattern_repeats():
    m = ClockModel(edge_pattern_ps=(-8, 0, 8, 0))
    e = sample_clock_edges(m, 8, substream(0, "t"))
    assert np.allclose(e - T_CK_PS * np.arange(8), [-8, 0, 8, 0, -8, 0, 8, 0])


def test_clock_stream_matches_block_sampler():
    m = ClockModel(white_edge_jitter_ps=2.0, wander_plateau_ps=12.0)
    cs = ClockStream(m, substream(3, "c"), block=1000)
    cs.ensure(5000 * T_CK_PS)
    ref = sample_clock_edges(m, 1000, substream(3, "c"))
    assert np.array_equal(cs.edges[:1000], ref)


def test_clock_stream_horizon():
    cs = ClockStream(ClockModel(), substream(0, "c"), block=100)
    cs.ensure(1e6)
    cs.discard_before(5e5)
    with pytest.raises(HorizonError):
        cs.locate([1000.0])


IDEAL = np.arange(10) * T_CK_PS


@pytest.mark.parametrize("t,flash,delta", [
    (1000.0, 7031.25, 6031.25),
    (0.0, 7031.25, 7031.25),          # on an edge: taken by the next one
    (6249.9, 7031.25, 781.35),
])
def test_synchronize_examples(t, flash, delta):
    f, counter, d = synchronize_hit(t, IDEAL)
    assert f == pytest.approx(flash)
    assert counter == 1
    assert d == pytest.approx(delta, abs=1e-9)


@given(st.floats(0, 8 * T_CK_PS, allow_nan=False))
def test_delta_bounds(t):
    _, _, d = synchronize_hit(t, IDEAL)
    assert 4 * 195.3125 < d <= T_CK_PS + 4 * 195.3125 + 1e-9


def test_uniform_phase_chi_square():
    h = gen_async_hits("uniform_random", 1_000_000, 1e12, substream(1, "u"))
    ph = np.mod(h.hit_times_ps, T_CK_PS)
    counts, _ = np.histogram(ph, bins=64, range=(0, T_CK_PS))
    assert chisquare(counts).pvalue > 0.01


def test_periodic_async_phase_coverage():
    p = T_CK_PS * (1 + 1 / GOLDEN)
    h = gen_async_hits("periodic_async", 10_000, 1e12, substream(1, "p"), period_ps=p)
    ph = np.sort(np.mod(h.hit_times_ps, T_CK_PS))
    gaps = np.diff(np.concatenate([ph, [ph[0] + T_CK_PS]]))
    assert len(h) == 10_000
    assert gaps.max() < T_CK_PS / 100


def test_empty_stream():
    assert len(gen_async_hits("uniform_random", 0, 1e6, substream(0, "x"))) == 0


def test_hitstream_validation():
    with pytest.raises(ValueError):
        HitStream(np.array([5.0, 3.0]))
    with pytest.raises(ValueError):
        HitStream(np.array([1.0]), source="bogus")
