import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdcsim.characterization import (
    PairwiseMatrix, code_density, covered_window, dnl_from_histogram, inl_from_dnl,
    linearity_report, pairwise_precision, solve_channel_sigmas,
)
from tdcsim.conversion import ideal_chip
from tdcsim.delay_lines import ChannelMismatch
from tdcsim.errors import InconsistentMatrixError, InsufficientStatisticsError
from tdcsim.measurement import code_density_run
from tdcsim.rng import substream


def test_code_density_flat_and_empty():
    h = code_density(np.arange(1024), 1024)
    assert np.all(h.counts == 1) and h.overflow == 0
    e = code_density([], 1024)
    assert not e.counts.any()
    assert code_density([-1, 5, 2000], 1024).overflow == 2


def test_dnl_examples():
    assert np.allclose(dnl_from_histogram(np.full(1024, 50)), 0)
    d = dnl_from_histogram(np.array([1.0, 1.0, 1.0, 3.0]))
    assert d[3] == pytest.approx(1.0)
    c = np.full(1024, 50)
    c[100] = 0
    assert dnl_from_histogram(c)[100] == -1


def test_dnl_outside_window_is_nan():
    c = np.zeros(16)
    c[3:9] = 10
    assert covered_window(c) == (3, 8)
    d = dnl_from_histogram(c)
    assert np.isnan(d[:3]).all() and np.isnan(d[9:]).all()
    with pytest.raises(InsufficientStatisticsError):
        covered_window(np.zeros(8))


def test_inl_examples():
    assert np.all(inl_from_dnl(np.zeros(8)) == 0)
    assert np.allclose(inl_from_dnl([0.5, -0.5, 0.0]), [0.5, 0.0, 0.0])


@given(st.lists(st.integers(1, 1000), min_size=2, max_size=200))
def test_dnl_sums_to_zero(counts):
    d = dnl_from_histogram(np.array(counts))
    assert abs(d.sum()) < 1e-9
    assert inl_from_dnl(d)[-1] == pytest.approx(0, abs=1e-9)


def test_ideal_chip_poisson():
    rep, _ = code_density_run(ideal_chip(), 0, 1_000_000, 1, stimulus="uniform_random")
    lo, hi = rep.window
    seg = rep.histogram[lo:hi + 1].astype(float)
    assert (lo, hi) == (0, 1023)
    assert np.all(np.abs(seg - seg.mean()) <= 5 * math.sqrt(seg.mean()))
    assert rep.missing_codes == 0


def tooth_stats(inl, start_code=232, period=256):
    mag = np.abs(np.fft.rfft(inl - inl.mean()))
    teeth = int(np.argmax(mag[1:]) + 1)
    q = ((np.arange(inl.size) - start_code) % inl.size) // period
    pp = [float(np.ptp(inl[q == i])) for i in range(inl.size // period)]
    return teeth, pp


def test_sawtooth_100ps():
    chip = ideal_chip().with_channel(0, ChannelMismatch(eps_kvdl=100 / 6250))
    rep, _ = code_density_run(chip, 0, 1_000_000, 1)
    teeth, pp = tooth_stats(rep.inl_lsb)
    assert teeth == 4
    assert all(abs(p - 4.1) <= 0.5 for p in pp)
    assert np.ptp(pp) < 0.1           # identical teeth


def test_sawtooth_pp_scales_with_error():
    out = []
    for err in (50, 100):
        chip = ideal_chip().with_channel(0, ChannelMismatch(eps_kvdl=err / 6250))
        rep, _ = code_density_run(chip, 0, 400_000, 2)
        out.append(tooth_stats(rep.inl_lsb)[1][0])
    assert out[1] / out[0] == pytest.approx(2, rel=0.1)


def test_pairwise_examples():
    rng = substream(1, "pp")
    n = 100_000
    a, b = 16 * rng.standard_normal(n), 16 * rng.standard_normal(n)
    assert abs(pairwise_precision(a, b) / 22.6 - 1) < 0.03
    x = rng.integers(0, 1024, n)
    assert pairwise_precision(x, x) == 0
    a, b = 3 * rng.standard_normal(n), 4 * rng.standard_normal(n)
    assert abs(pairwise_precision(a, b) / 5 - 1) < 0.03


def test_pairwise_needs_pairs():
    with pytest.raises(InsufficientStatisticsError):
        pairwise_precision(np.zeros(10), np.zeros(10))


def test_solver_examples():
    s = solve_channel_sigmas(np.full((3, 3), 2.0))
    assert np.allclose(s.sigma_ps, 1) and s.sigma_t_sq_ps2 == pytest.approx(3)
    m = np.array([[0, 5, 10], [5, 0, 13], [10, 13, 0.0]])
    s = solve_channel_sigmas(m)
    assert np.allclose(s.sigma_sq_ps2, [1, 4, 9]) and s.sigma_t_sq_ps2 == pytest.approx(14)


@given(st.lists(st.floats(0.1, 50), min_size=3, max_size=12))
def test_solver_exact_on_consistent(sig):
    v = np.array(sig) ** 2
    m = v[:, None] + v[None, :]
    s = solve_channel_sigmas(m)
    assert np.allclose(s.sigma_sq_ps2, v, rtol=1e-9, atol=1e-9)
    assert s.sigma_t_sq_ps2 == pytest.approx(v.sum(), rel=1e-9)


def test_solver_noisy_recovery():
    rng = substream(1, "solver")
    sig = rng.uniform(12, 20, 8)
    e = sig * rng.standard_normal((100_000, 8))
    m = np.zeros((8, 8))
    for i in range(8):
        for j in range(i + 1, 8):
            m[i, j] = m[j, i] = np.var(e[:, i] - e[:, j])
    s = solve_channel_sigmas(m)
    assert np.all(np.abs(s.sigma_ps / sig - 1) < 0.02)


def test_solver_equals_least_squares():
    # brute-force oracle: minimize sum (s_i + s_j - m_ij)^2 over all pairs
    rng = substream(2, "lsq")
    n = 9
    v = rng.uniform(100, 400, n)
    m = v[:, None] + v[None, :] + rng.normal(0, 10, (n, n))
    m = (m + m.T) / 2
    rows, rhs = [], []
    for i in range(n):
        for j in range(i + 1, n):
            r = np.zeros(n)
            r[[i, j]] = 1
            rows.append(r)
            rhs.append(m[i, j])
    ls = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    assert np.allclose(solve_channel_sigmas(m).sigma_sq_ps2, ls, rtol=1e-10)


def test_histogram_counts_kept_events():
    rep, b = code_density_run(ideal_chip(), 0, 50_000, 4)
    assert rep.n_events + rep.overflow == int(b.kept.sum())
    lo, hi = rep.window
    assert np.nansum(rep.dnl_lsb[lo:hi + 1] + 1) == pytest.approx(hi - lo + 1)


def test_solver_inconsistent():
    m = np.array([[0, 1, 1], [1, 0, 10], [1, 10, 0.0]])
    with pytest.raises(InconsistentMatrixError):
        solve_channel_sigmas(m)


@pytest.mark.parametrize("m", [np.ones((2, 2)), np.array([[0, 1, 2], [1, 0, 3], [5, 3, 0.0]]),
                               np.array([[0, -1, 2], [-1, 0, 3], [2, 3, 0.0]])])
def test_matrix_validation(m):
    with pytest.raises(ValueError):
        PairwiseMatrix(m)


def test_linearity_report_fields():
    codes = np.repeat(np.arange(10, 20), 5)
    r = linearity_report(codes, 32, 24.4)
    assert r.window == (10, 19) and r.n_events == 50 and r.missing_codes == 0
    assert r.inl_std_ps == 0
