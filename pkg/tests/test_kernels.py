"""Compiled and pure-Python kernels must agree bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdcsim import kernels
from tdcsim.rng import substream

BACKENDS = kernels.backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def _line(seed, n_taps=42, tau=195.3125, sigma=3.0):
    rng = substream(seed, "kernel_line")
    d = tau + sigma * rng.standard_normal(n_taps)
    return np.concatenate([[0.0], np.cumsum(d)])


@compiled
@given(st.integers(0, 10_000), st.floats(0, 5), st.integers(-1, 2))
def test_window_count_equivalent(seed, sigma, offset):
    cum = _line(seed)
    rng = substream(seed, "kernel_in")
    thr = rng.uniform(-100, cum[-1] + 300, 257)
    z = rng.standard_normal((257, 7))
    py = BACKENDS["python"].window_count(thr, cum, z, sigma, offset)
    cy = BACKENDS["cython"].window_count(thr, cum, z, sigma, offset)
    assert np.array_equal(py[0], cy[0])
    assert np.array_equal(py[1], cy[1], equal_nan=True)
    assert np.array_equal(py[2], cy[2])


@compiled
@given(st.integers(0, 10_000), st.floats(-1e4, 1e4))
def test_drop_mask_equivalent(seed, busy):
    rng = substream(seed, "drop")
    t = np.cumsum(rng.exponential(8000.0, 300))
    end = t + rng.uniform(9000, 17000, 300)
    py = BACKENDS["python"].drop_mask(t, end, busy)
    cy = BACKENDS["cython"].drop_mask(t, end, busy)
    assert np.array_equal(py[0], cy[0]) and py[1] == cy[1]


def test_window_count_noiseless_is_searchsorted():
    cum = _line(1)
    thr = np.linspace(0, cum[-1] + 50, 1000)
    k, _, _ = kernels.window_count(thr, cum, np.zeros((1000, 7)), 0.0, -1)
    assert np.array_equal(k, np.searchsorted(cum[1:], thr, side="right"))


def test_backend_selected_by_env():
    code = "import tdcsim.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, TDCSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@compiled
def test_end_to_end_backend_agreement():
    code = ("import numpy as np, tdcsim.kernels as k; from tdcsim.conversion import build_chip; "
            "from tdcsim.measurement import code_density_run; "
            "r,b = code_density_run(build_chip(seed=3, channels=1), 0, 20000, 3); "
            "print(k.BACKEND, int(np.sum(b.d_out * np.arange(b.d_out.size) % 1000003)))")
    outs = []
    for pure in ("", "1"):
        env = dict(os.environ, TDCSIM_PURE_PYTHON=pure)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout.split())
    assert outs[0][0] == "cython" and outs[1][0] == "python"
    assert outs[0][1] == outs[1][1]
