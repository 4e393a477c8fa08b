"""Pulse-train time amplifier: gain, static input-referred error, circulation jitter."""

from dataclasses import dataclass
import math

import numpy as np

from .delay_lines import PvtCondition, T_NOMINAL_C, V_NOMINAL
from .errors import DomainError, ResidueError

T_R_DOMAIN_PS = (150.0, 450.0)
_SHAPE_CENTER_PS = 300.0
_SHAPE_HALF_WIDTH_PS = 100.0
# x - x^3 peaks at 2/(3*sqrt(3)) on [-1, 1]; this normalizes the peak to 1
_SHAPE_NORM = 3 * math.sqrt(3) / 2


@dataclass(frozen=True)
class StaticErrorCurve:
    """Input-referred TA error: per-corner offset plus a bounded cubic shape.

    shape(t_r) = amplitude(pvt) * s(x), x = (t_r - 300 ps) / 100 ps, with
    s(x) = 2.598 * (x - x^3) so that |s| <= 1 on [200, 400] ps.  The
    amplitude grows with temperature above 25 C and with supply droop.
    """

    offset_ps: tuple = (("ss", -6.0), ("tt", 0.0), ("ff", 4.0))
    offset_temp_coeff_ps_per_c: float = 0.05
    amplitude_ps: tuple = (("ss", 3.0), ("tt", 2.0), ("ff", 2.2))
    hot_gain: float = 0.5      # relative amplitude increase at 65 C
    droop_gain: float = 0.5    # relative amplitude increase at 1.08 V
    shape_enabled: bool = True

    def offset(self, pvt):
        return dict(self.offset_ps)[pvt.corner] + self.offset_temp_coeff_ps_per_c * (pvt.temperature_c - T_NOMINAL_C)

    def amplitude(self, pvt):
        if not self.shape_enabled:
            return 0.0
        hot = max(pvt.temperature_c - T_NOMINAL_C, 0.0) / 40.0
        droop = max(V_NOMINAL - pvt.supply_v, 0.0) / 0.12
        return dict(self.amplitude_ps)[pvt.corner] * (1 + self.hot_gain * hot + self.droop_gain * droop)

    def shape(self, t_r_ps, pvt):
        x = (np.asarray(t_r_ps, dtype=float) - _SHAPE_CENTER_PS) / _SHAPE_HALF_WIDTH_PS
        return self.amplitude(pvt) * _SHAPE_NORM * (x - x ** 3)


ZERO_ERROR = StaticErrorCurve(offset_ps=(("ss", 0.0), ("tt", 0.0), ("ff", 0.0)),
                              offset_temp_coeff_ps_per_c=0.0, shape_enabled=False)


@dataclass(frozen=True)
class TaConfig:
    gain_a: int = 8
    t_loop_ps: float = 750.0
    sigma_w_ps: float = 0.3
    static_error: StaticErrorCurve = StaticErrorCurve()

    def __post_init__(self):
        if self.gain_a not in (8, 16):
            raise ValueError(f"TA gain must be 8 or 16, got {self.gain_a}")
        if not (self.sigma_w_ps >= 0 and math.isfinite(self.sigma_w_ps)):
            raise ValueError(f"sigma_w_ps must be finite and >= 0, got {self.sigma_w_ps}")
        if not (self.t_loop_ps >= 0 and math.isfinite(self.t_loop_ps)):
            raise ValueError(f"t_loop_ps must be finite and >= 0, got {self.t_loop_ps}")

    @property
    def window_ps(self):
        return self.gain_a * self.t_loop_ps


def ta_static_error(t_r_ps, pvt, curve=StaticErrorCurve()):
    """Input-referred static TA error (ps) at residue ``t_r_ps``."""
    t = np.asarray(t_r_ps, dtype=float)
    lo, hi = T_R_DOMAIN_PS
    if np.any((t < lo) | (t > hi)):
        raise DomainError(f"t_r outside model domain [{lo}, {hi}] ps")
    out = curve.offset(pvt) + curve.shape(t, pvt)
    return float(out) if out.ndim == 0 else out


def _static_error_clipped(t_r_ps, pvt, curve):
    # the curve is only characterized on its domain; hold it flat outside
    lo, hi = T_R_DOMAIN_PS
    return curve.offset(pvt) + curve.shape(np.clip(t_r_ps, lo, hi), pvt)


def train_jitter_sigma(n, sigma_w_ps):
    """Std of the total pulse-train width after n circulations."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return sigma_w_ps * math.sqrt(n * (n + 1) * (2 * n + 1) / 6)


def input_referred_jitter(n, sigma_w_ps):
    if n < 1:
        raise DomainError("n must be >= 1")
    return sigma_w_ps * math.sqrt((n + 1) * (2 * n + 1) / (6 * n))


def circulation_weights(gain_a):
    """Weight of circulation i's width modulation on the train: A - i + 1."""
    return np.arange(gain_a, 0, -1, dtype=float)


def ta_amplify_batch(t_r_ps, cfg, pvt, z):
    """Vectorized amplification; ``z`` holds standard normals, shape (n, A).

    Circulation i's width error w_i = sigma_w * z[:, i-1] persists in every
    later copy, so it enters the train with weight A - i + 1.
    """
    t_r = np.asarray(t_r_ps, dtype=float)
    if np.any(t_r <= 0):
        raise ResidueError("residue pulse of non-positive width would be lost in the TA ring")
    train = cfg.gain_a * (t_r + _static_error_clipped(t_r, pvt, cfg.static_error))
    if cfg.sigma_w_ps > 0:
        train = train + cfg.sigma_w_ps * (z @ circulation_weights(cfg.gain_a))
    return train


def pulse_train_widths(t_r_ps, n, sigma_w_ps, trials, rng):
    """Monte-Carlo total train width after ``n`` circulations (no static error).

    Built pulse by pulse: copy j carries the modulation of every circulation
    up to j, so the cumulative sum of w is summed again over the copies.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    w = sigma_w_ps * rng.standard_normal((trials, n))
    copies = t_r_ps + np.cumsum(w, axis=1)
    return copies.sum(axis=1)


def ta_amplify(t_r_ps, cfg, pvt, rng=None):
    """Amplify one residue; returns ``(train_duration_ps, n_circulations)``."""
    if t_r_ps <= 0:
        raise ResidueError("residue pulse of non-positive width would be lost in the TA ring")
    z = rng.standard_normal((1, cfg.gain_a)) if cfg.sigma_w_ps > 0 else np.zeros((1, cfg.gain_a))
    return float(ta_amplify_batch(np.array([t_r_ps]), cfg, pvt, z)[0]), cfg.gain_a


def ta_busy_time(cfg):
    return cfg.gain_a * cfg.t_loop_ps
