"""Voltage-controlled delay elements, master DLL lock, slave mismatch and trimming.

Delays are in ps, voltages in mV.  A slave coarse delay line (CDL) tap i
(1-based) has delay ``K(pvt) * (1 + eps_kvdl) * v * (1 + c*v) + eps_i(T)``
where ``v`` is the (trimmed) control voltage copied from the master DLL.
"""

from dataclasses import dataclass, field, replace
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf

from .errors import DomainError, LockError
from .timebase import T_CK_PS

N_SIGNIFICANT_TAPS = 32
N_CDL_TAPS = 42
N_GDL_TAPS = 40
T_NOMINAL_C = 25.0
V_NOMINAL = 1.2
LOCK_TOL_PS = 0.01


@dataclass(frozen=True)
class PvtCondition:
    corner: str = "tt"
    supply_v: float = V_NOMINAL
    temperature_c: float = T_NOMINAL_C

    def __post_init__(self):
        if self.corner not in ("ss", "tt", "ff"):
            raise ValueError(f"corner must be ss, tt or ff, got {self.corner!r}")
        if not 1.08 <= self.supply_v <= 1.32:
            raise ValueError(f"supply_v {self.supply_v} outside [1.08, 1.32] V")
        if not -50.0 <= self.temperature_c <= 65.0:
            raise ValueError(f"temperature_c {self.temperature_c} outside [-50, 65] C")


@dataclass(frozen=True)
class DelayElementModel:
    """Delay-vs-control-voltage law of one delay element.

    The law is affine in V by default; ``nonlin_curvature`` (1/mV) adds a
    mild quadratic term.  ``mismatch_temp_coeff_per_c`` scales the static
    per-tap errors away from 25 C.
    """

    k_vdl_ps_per_mv: float = 0.4
    corner_scale: tuple = (("ss", 0.8), ("tt", 1.0), ("ff", 1.2))
    temp_coeff_per_c: float = 1.0e-3
    supply_coeff_per_v: float = -0.2
    nonlin_curvature: float = 0.0
    v_max_mv: float = 1200.0
    mismatch_temp_coeff_per_c: float = 2.5e-3

    def __post_init__(self):
        if self.k_vdl_ps_per_mv <= 0:
            raise ValueError("k_vdl_ps_per_mv must be > 0")
        if self.nonlin_curvature < 0 and self.v_max_mv >= -0.5 / self.nonlin_curvature:
            raise ValueError("nonlin_curvature makes the delay law non-monotone below v_max_mv")

    def gain(self, pvt):
        """K(pvt) in ps/mV."""
        scale = dict(self.corner_scale)[pvt.corner]
        return (self.k_vdl_ps_per_mv * scale
                * (1 + self.temp_coeff_per_c * (pvt.temperature_c - T_NOMINAL_C))
                * (1 + self.supply_coeff_per_v * (pvt.supply_v - V_NOMINAL)))

    def mismatch_scale(self, pvt):
        return 1 + self.mismatch_temp_coeff_per_c * (pvt.temperature_c - T_NOMINAL_C)

    def check_voltage(self, v_mv):
        if not (0 < v_mv <= self.v_max_mv) or not math.isfinite(v_mv):
            raise DomainError(f"control voltage {v_mv} mV outside (0, {self.v_max_mv}] mV")

    def base_delay(self, v_mv, pvt):
        """Delay of an error-free element (ps)."""
        self.check_voltage(v_mv)
        return self.gain(pvt) * v_mv * (1 + self.nonlin_curvature * v_mv)


DEFAULT_MODEL = DelayElementModel()


@dataclass(frozen=True)
class ChannelMismatch:
    eps_kvdl: float = 0.0
    cdl_tap_eps_ps: tuple = (0.0,) * N_CDL_TAPS
    gdl_tap_eps_ps: tuple = (0.0,) * N_GDL_TAPS
    v_off_mv: float = 0.0
    tap_jitter_ps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cdl_tap_eps_ps", tuple(float(x) for x in self.cdl_tap_eps_ps))
        object.__setattr__(self, "gdl_tap_eps_ps", tuple(float(x) for x in self.gdl_tap_eps_ps))
        if len(self.cdl_tap_eps_ps) != N_CDL_TAPS or len(self.gdl_tap_eps_ps) != N_GDL_TAPS:
            raise ValueError(f"need {N_CDL_TAPS} CDL and {N_GDL_TAPS} GDL tap errors")
        vals = (self.eps_kvdl, self.v_off_mv, self.tap_jitter_ps) + self.cdl_tap_eps_ps + self.gdl_tap_eps_ps
        if not all(math.isfinite(x) for x in vals):
            raise ValueError("channel mismatch values must be finite")
        if self.tap_jitter_ps < 0:
            raise ValueError("tap_jitter_ps must be >= 0")
        if self.eps_kvdl <= -1:
            raise ValueError("eps_kvdl must be > -1")


IDEAL_CHANNEL = ChannelMismatch()


@dataclass(frozen=True)
class TrimSetting:
    rcal_code: int = 0
    ical_sign: int = 1
    dac_step_mv: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if not 0 <= self.rcal_code <= 31:
            raise ValueError(f"rcal_code {self.rcal_code} outside [0, 31]")
        if self.ical_sign not in (1, -1):
            raise ValueError("ical_sign must be +1 or -1")
        if not self.dac_step_mv > 0:
            raise ValueError("dac_step_mv must be > 0")

    @property
    def signed_code(self):
        return self.ical_sign * self.rcal_code if self.enabled else 0

    @classmethod
    def from_signed(cls, s, dac_step_mv, enabled=True):
        return cls(abs(int(s)), -1 if s < 0 else 1, dac_step_mv, enabled)


def element_delay(v_ctrl_mv, pvt, tap_eps_ps=0.0, model=DEFAULT_MODEL):
    """Delay of one element at control voltage ``v_ctrl_mv`` (ps)."""
    return model.base_delay(v_ctrl_mv, pvt) + tap_eps_ps * model.mismatch_scale(pvt)


def lock_master_dll(pvt, model=DEFAULT_MODEL, n_taps=N_SIGNIFICANT_TAPS, period_ps=T_CK_PS):
    """Fixed point of the master DLL: V such that n_taps * delay(V) = period.

    The master's own tap errors sum to zero over its locked span, so only the
    error-free element law enters.  Raises LockError when the target delay is
    outside what the control range can produce.
    """
    def residual(v):
        return n_taps * model.base_delay(v, pvt) - period_ps

    lo, hi = model.v_max_mv * 1e-9, model.v_max_mv
    if residual(lo) > 0 or residual(hi) < 0:
        raise LockError(f"master DLL cannot lock at {pvt}: "
                        f"delay range [{residual(lo) + period_ps:.1f}, {residual(hi) + period_ps:.1f}] ps")
    v = brentq(residual, lo, hi, xtol=1e-12, rtol=1e-15, maxiter=200)
    if abs(residual(v)) >= LOCK_TOL_PS:
        raise LockError(f"lock residual {residual(v):.3g} ps exceeds tolerance")
    return v


def locked_tau_q(pvt, model=DEFAULT_MODEL):
    return model.base_delay(lock_master_dll(pvt, model), pvt)


def gradient_profile(n_taps=N_CDL_TAPS, span=N_SIGNIFICANT_TAPS):
    """Linear tap-delay gradient shape, zero-sum over the first ``span`` taps."""
    mid = (span - 1) / 2
    return (np.arange(n_taps) - mid) / mid


def sample_channel(sigma_gain_rel, sigma_tap_ps, sigma_voff_mv, rng, tap_jitter_ps=0.0,
                   sigma_gradient_ps=0.0):
    """Draw one channel's static mismatch.

    Draw order: eps_kvdl, 42 CDL taps, 40 GDL taps, v_off, gradient.  The
    gradient is a systematic linear drift of CDL tap delays along the line
    (delay change at the ends of the 32-tap span); it leaves the span's
    total delay unchanged and bows the INL within each clock period.
    """
    if min(sigma_gain_rel, sigma_tap_ps, sigma_voff_mv, sigma_gradient_ps) < 0:
        raise ValueError("sigmas must be >= 0")
    eps = sigma_gain_rel * rng.standard_normal()
    cdl = sigma_tap_ps * rng.standard_normal(N_CDL_TAPS)
    gdl = sigma_tap_ps * rng.standard_normal(N_GDL_TAPS)
    voff = sigma_voff_mv * rng.standard_normal()
    if sigma_gradient_ps > 0:
        cdl = cdl + sigma_gradient_ps * rng.standard_normal() * gradient_profile()
    return ChannelMismatch(float(eps), tuple(cdl), tuple(gdl), float(voff), tap_jitter_ps)


def recenter_master(ch, n_taps=N_SIGNIFICANT_TAPS):
    """Master-DLL version of a sampled channel: the closed loop absorbs the
    gain error and the tap errors over the locked span sum to zero."""
    cdl = np.array(ch.cdl_tap_eps_ps)
    cdl[:n_taps] -= cdl[:n_taps].mean()
    return replace(ch, eps_kvdl=0.0, v_off_mv=0.0, cdl_tap_eps_ps=tuple(cdl))


def sample_total_deviation(n, sigma_gain_rel, sigma_tap_ps, rng, n_taps=N_SIGNIFICANT_TAPS,
                           period_ps=T_CK_PS):
    """Vectorized population draw of slave total-delay deviations at lock (ps).

    Equivalent in distribution to ``slave_total_delay(sample_channel(...)) -
    period`` for the linear law at nominal PVT, without building n objects.
    """
    eps = sigma_gain_rel * rng.standard_normal(n)
    dev = period_ps * eps
    if sigma_tap_ps > 0:
        dev += sigma_tap_ps * math.sqrt(n_taps) * rng.standard_normal(n)
    return dev


def ideal_shift(eps_kvdl, v_ctrl_mv):
    """Voltage shift that cancels a relative gain error exactly."""
    if eps_kvdl <= -1:
        raise DomainError("eps_kvdl must be > -1")
    return -eps_kvdl / (1 + eps_kvdl) * v_ctrl_mv


def trimmed_vctrl(v_ctrl_mv, trim, v_off_mv=0.0):
    """Channel control voltage: master V plus DAC shift plus OTA offset."""
    if trim is None or not trim.enabled:
        return v_ctrl_mv + v_off_mv
    return v_ctrl_mv + trim.ical_sign * trim.rcal_code * trim.dac_step_mv + v_off_mv


def cdl_tap_delays(ch, v_mv, pvt, model=DEFAULT_MODEL, n_taps=N_CDL_TAPS):
    base = model.base_delay(v_mv, pvt) * (1 + ch.eps_kvdl)
    eps = np.asarray(ch.cdl_tap_eps_ps[:n_taps]) * model.mismatch_scale(pvt)
    return base + eps


def gdl_tap_delays(ch, v_mv, pvt, model=DEFAULT_MODEL):
    base = model.base_delay(v_mv, pvt)
    return base + np.asarray(ch.gdl_tap_eps_ps) * model.mismatch_scale(pvt)


def slave_total_delay(ch, v_mv, pvt, n_taps=N_SIGNIFICANT_TAPS, model=DEFAULT_MODEL):
    if not 1 <= n_taps <= N_CDL_TAPS:
        raise ValueError(f"n_taps {n_taps} outside [1, {N_CDL_TAPS}]")
    return float(np.sum(cdl_tap_delays(ch, v_mv, pvt, model, n_taps)))


class CoarseCode(NamedTuple):
    k: int
    saturated: bool


def _count_passed(cum, threshold):
    return int(np.searchsorted(cum, threshold, side="right"))


def ctdc_encode(delta_ps, ch, v_mv, pvt, rng=None, model=DEFAULT_MODEL):
    """Number of CDL taps whose cumulative delay is <= delta (RS-latch capture).

    Each event draws independent per-tap jitter (``ch.tap_jitter_ps``), which
    accumulates along the line.  A tap reached exactly at ``delta`` counts as
    passed.  The code saturates at 42.
    """
    if delta_ps < 0:
        raise DomainError("delta must be >= 0")
    cum = np.cumsum(cdl_tap_delays(ch, v_mv, pvt, model))
    if ch.tap_jitter_ps > 0:
        cum = cum + np.cumsum(ch.tap_jitter_ps * rng.standard_normal(N_CDL_TAPS))
    k = _count_passed(cum, delta_ps)
    return CoarseCode(k, k >= N_CDL_TAPS)


def yield_estimate(sigma_d_ps, threshold_ps, n_channels):
    """Probability that all channels of a chip stay within +-threshold."""
    if threshold_ps <= 0 or n_channels < 1 or sigma_d_ps < 0:
        raise ValueError("need threshold > 0, n_channels >= 1, sigma_d >= 0")
    if sigma_d_ps == 0:
        return 1.0
    return float(erf(threshold_ps / (math.sqrt(2) * sigma_d_ps)) ** n_channels)


def default_dac_step(v_ctrl_mv, sigma_gain_rel, sigma_voff_mv, full_scale_sigmas=4.0, max_code=31):
    """DAC step whose full scale spans +-4 sigma of the combined voltage error."""
    sigma_v = math.hypot(sigma_gain_rel * v_ctrl_mv, sigma_voff_mv)
    if sigma_v == 0:
        return 0.5
    return full_scale_sigmas * sigma_v / max_code
