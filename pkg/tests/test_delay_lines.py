import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from tdcsim.delay_lines import (
    N_CDL_TAPS, ChannelMismatch, PvtCondition, TrimSetting, ctdc_encode, element_delay,
    gradient_profile, ideal_shift, lock_master_dll, locked_tau_q, recenter_master,
    sample_channel, sample_total_deviation, slave_total_delay, trimmed_vctrl, yield_estimate,
)
from tdcsim.errors import DomainError
from tdcsim.rng import substream

NOM = PvtCondition()
V0 = 6250 / (32 * 0.4)
IDEAL = ChannelMismatch()

pvts = st.builds(PvtCondition, st.sampled_from(["ss", "tt", "ff"]), st.floats(1.08, 1.32),
                 st.floats(-50, 65))


def test_element_delay_examples():
    assert element_delay(488.28125, NOM) == pytest.approx(195.3125)
    assert element_delay(488.28125, NOM, 5.0) == pytest.approx(200.3125)
    with pytest.raises(DomainError):
        element_delay(0.0, NOM)


def test_lock_examples():
    assert lock_master_dll(NOM) == pytest.approx(488.28125)
    ff = PvtCondition("ff")
    v = lock_master_dll(ff)
    assert v == pytest.approx(406.901, abs=1e-3)
    assert 32 * element_delay(v, ff) == pytest.approx(6250, abs=0.01)


@given(pvts)
def test_master_is_pvt_immune(pvt):
    assert locked_tau_q(pvt) == pytest.approx(195.3125, abs=0.01 / 32)


def test_gain_spread_gives_28ps():
    rng = substream(1, "test_gain")
    dev = [slave_total_delay(sample_channel(0.00448, 0, 0, rng), V0, NOM) - 6250 for _ in range(10_000)]
    assert abs(np.std(dev) / 28 - 1) < 0.03


def test_zero_sigma_is_ideal():
    ch = sample_channel(0, 0, 0, substream(0, "x"))
    assert ch == IDEAL
    assert slave_total_delay(ch, V0, NOM) == 6250.0


def test_voff_spread():
    rng = substream(2, "voff")
    v = [sample_channel(0, 0, 3.0, rng).v_off_mv for _ in range(10_000)]
    assert abs(np.std(v) / 3 - 1) < 0.03


def test_vectorized_population_matches():
    a = sample_total_deviation(200_000, 0.00448, 2.0, substream(3, "pop"))
    assert abs(np.std(a) / math.hypot(28, 2 * math.sqrt(32)) - 1) < 0.01


@pytest.mark.parametrize("eps,v,expected", [(0, 500, 0), (0.01, 600, -5.941), (-0.02, 500, 10.204)])
def test_ideal_shift(eps, v, expected):
    assert ideal_shift(eps, v) == pytest.approx(expected, abs=1e-3)


@given(st.floats(-0.05, 0.05), st.floats(100, 1000))
def test_ideal_shift_restores_total(eps, v):
    pvt = NOM
    ch = ChannelMismatch(eps_kvdl=eps)
    assert slave_total_delay(ch, v + ideal_shift(eps, v), pvt) == pytest.approx(
        slave_total_delay(IDEAL, v, pvt), rel=1e-9)


def test_trimmed_vctrl_examples():
    assert trimmed_vctrl(488.28, TrimSetting(0, 1, 0.5)) == 488.28
    assert trimmed_vctrl(488.28, TrimSetting(16, 1, 0.5), 1.0) == pytest.approx(497.28)
    assert trimmed_vctrl(500.0, TrimSetting(31, -1, 0.5)) == pytest.approx(484.5)


def test_trim_setting_range():
    with pytest.raises(ValueError):
        TrimSetting(32, 1, 0.5)
    with pytest.raises(ValueError):
        TrimSetting(3, 0, 0.5)


def test_slave_total_examples():
    assert slave_total_delay(IDEAL, V0, NOM) == pytest.approx(6250)
    ch = ChannelMismatch(eps_kvdl=0.00448)
    assert slave_total_delay(ch, V0, NOM) == pytest.approx(6278.0)
    assert slave_total_delay(ch, V0 + ideal_shift(0.00448, V0), NOM) == pytest.approx(6250, abs=0.01)


@pytest.mark.parametrize("delta,k", [(1000, 5), (6031.25, 30), (0, 0)])
def test_ctdc_examples(delta, k):
    assert ctdc_encode(delta, IDEAL, V0, NOM).k == k


@given(st.floats(0, 9000), st.floats(0, 9000))
def test_ctdc_monotone(a, b):
    lo, hi = sorted((a, b))
    assert ctdc_encode(lo, IDEAL, V0, NOM).k <= ctdc_encode(hi, IDEAL, V0, NOM).k


def test_ctdc_saturates():
    c = ctdc_encode(1e5, IDEAL, V0, NOM)
    assert c.k == N_CDL_TAPS and c.saturated


def test_yield_examples():
    assert yield_estimate(6.7, 24.4, 72) == pytest.approx(0.981, abs=5e-4)
    assert yield_estimate(0.0, 24.4, 72) == 1.0
    assert yield_estimate(28, 24.4, 72) < 1e-10


@given(st.floats(0.5, 50), st.floats(1, 100), st.integers(1, 200))
def test_yield_matches_normal_cdf(s, t, n):
    # independent oracle: per-channel two-sided normal probability
    p = 1 - 2 * norm.sf(t / s)
    assert yield_estimate(s, t, n) == pytest.approx(p ** n, rel=1e-9, abs=1e-300)


def test_gradient_profile_zero_sum():
    g = gradient_profile()
    assert g.size == N_CDL_TAPS
    assert abs(g[:32].sum()) < 1e-12
    assert g[0] == -1 and g[31] == 1


def test_recenter_master_zero_sum():
    ch = sample_channel(0.01, 4.0, 1.0, substream(5, "m"))
    m = recenter_master(ch)
    assert m.eps_kvdl == 0 and m.v_off_mv == 0
    assert abs(sum(m.cdl_tap_eps_ps[:32])) < 1e-9
