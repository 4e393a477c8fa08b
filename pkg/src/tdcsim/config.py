"""Scenario configuration: flat ``key = value`` text with section prefixes.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Top-level keys (``scenario``, ``seed``, ``events``, ``channels``,
``output_dir``) select the run; ``chip.``, ``clock.``, ``ta.``, ``calib.``,
``pvt.`` and ``scenario.`` keys override model and experiment parameters.
Every problem found is reported, each with its line number and key.
"""

from dataclasses import dataclass, field, replace
import math

from .conversion import ChipConfig, MismatchConfig
from .delay_lines import DEFAULT_MODEL, PvtCondition
from .errors import ConfigError
from .experiments import CALIBRATION_EVENTS, DEFAULT_CLOCK, DEFAULT_DELAYS_NS
from .time_amplifier import StaticErrorCurve, TaConfig

SCENARIOS = ("linearity", "trim_search", "delay_sweep", "temperature_sweep", "yield_mc",
             "ta_jitter_check", "latency_audit")
MAX_SEED = 2**64 - 1


def _int(s):
    return int(s.replace("_", ""), 0)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _floats(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(_float(x) for x in s.split(","))


def parse_channels(s):
    """'all' -> None; otherwise comma list of integers and a-b ranges."""
    s = s.strip()
    if s == "all":
        return None
    out = []
    for part in s.split(","):
        part = part.strip()
        if "-" in part:
            a, b = (int(x) for x in part.split("-", 1))
            if b < a:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if len(set(out)) != len(out):
        raise ValueError("duplicate channel")
    return tuple(out)


def _choice(*opts):
    def conv(s):
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s
    return conv


def _ge(lo):
    return lambda v: v >= lo or f"must be >= {lo}"


def _gt(lo):
    return lambda v: v > lo or f"must be > {lo}"


def _between(lo, hi):
    return lambda v: lo <= v <= hi or f"must be in [{lo}, {hi}]"


_SE = StaticErrorCurve()
_MM = MismatchConfig()
_TA = TaConfig()
_CH = ChipConfig()

# key: (parser, default, check or None)
SCHEMA = {
    "scenario": (_choice(*SCENARIOS), None, None),
    "seed": (_int, None, _between(0, MAX_SEED)),
    "events": (_int, 200_000, _ge(1)),
    "channels": (parse_channels, None, None),
    "output_dir": (str, "out", None),

    "chip.channels": (_int, _CH.channels, _ge(1)),
    "chip.master_group": (_int, _CH.master_group, _ge(1)),
    "chip.truncate_bits": (_int, _CH.truncate_to_bits, _between(1, 17)),
    "chip.sync_taps": (_int, _CH.sync_taps, _between(1, 8)),
    "chip.encode_tail_ps": (_float, _CH.encode_tail_ps, _ge(0)),
    "chip.ideal": (_bool, False, None),
    "chip.sigma_gain_rel": (_float, _MM.sigma_gain_rel, _ge(0)),
    "chip.sigma_tap_ps": (_float, _MM.sigma_tap_ps, _ge(0)),
    "chip.sigma_voff_mv": (_float, _MM.sigma_voff_mv, _ge(0)),
    "chip.tap_jitter_ps": (_float, _MM.tap_jitter_ps, _ge(0)),
    "chip.sigma_gradient_ps": (_float, _MM.sigma_gradient_ps, _ge(0)),
    "chip.systematic_gradient_ps": (_float, _MM.systematic_gradient_ps, None),
    "chip.dac_step_mv": (_float, 0.0, _ge(0)),
    "chip.k_vdl_ps_per_mv": (_float, DEFAULT_MODEL.k_vdl_ps_per_mv, _gt(0)),
    "chip.temp_coeff_per_c": (_float, DEFAULT_MODEL.temp_coeff_per_c, None),
    "chip.supply_coeff_per_v": (_float, DEFAULT_MODEL.supply_coeff_per_v, None),
    "chip.nonlin_curvature": (_float, DEFAULT_MODEL.nonlin_curvature, None),
    "chip.mismatch_temp_coeff_per_c": (_float, DEFAULT_MODEL.mismatch_temp_coeff_per_c, None),

    "clock.white_jitter_ps": (_float, DEFAULT_CLOCK.white_edge_jitter_ps, _ge(0)),
    "clock.wander_plateau_ps": (_float, DEFAULT_CLOCK.wander_plateau_ps, _ge(0)),
    "clock.wander_corr_time_ns": (_float, DEFAULT_CLOCK.wander_corr_time_ns, _gt(0)),
    "clock.edge_pattern_ps": (_floats, DEFAULT_CLOCK.edge_pattern_ps, None),

    "ta.gain": (_int, _TA.gain_a, lambda v: v in (8, 16) or "must be 8 or 16"),
    "ta.t_loop_ps": (_float, _TA.t_loop_ps, _ge(0)),
    "ta.sigma_w_ps": (_float, _TA.sigma_w_ps, _ge(0)),
    "ta.static_shape": (_bool, True, None),
    "ta.offset_ss_ps": (_float, dict(_SE.offset_ps)["ss"], None),
    "ta.offset_tt_ps": (_float, dict(_SE.offset_ps)["tt"], None),
    "ta.offset_ff_ps": (_float, dict(_SE.offset_ps)["ff"], None),
    "ta.amplitude_ss_ps": (_float, dict(_SE.amplitude_ps)["ss"], _ge(0)),
    "ta.amplitude_tt_ps": (_float, dict(_SE.amplitude_ps)["tt"], _ge(0)),
    "ta.amplitude_ff_ps": (_float, dict(_SE.amplitude_ps)["ff"], _ge(0)),

    "calib.events": (_int, CALIBRATION_EVENTS, _ge(10_000)),
    "calib.trim_events": (_int, CALIBRATION_EVENTS, _ge(10_000)),
    "calib.total_lut": (_bool, True, None),
    "calib.trim": (_bool, True, None),

    "pvt.corner": (_choice("ss", "tt", "ff"), "tt", None),
    "pvt.supply_v": (_float, 1.2, _between(1.08, 1.32)),
    "pvt.temperature_c": (_float, 25.0, _between(-50.0, 65.0)),

    "scenario.stimulus": (_choice("acg", "uniform_random"), "acg", None),
    "scenario.write_conversions": (_bool, True, None),
    "scenario.delays_ns": (_floats, DEFAULT_DELAYS_NS, None),
    "scenario.pairs": (_int, 10_000, _ge(100)),
    "scenario.temperatures_c": (_floats, (-35.0, 25.0, 65.0), None),
    "scenario.n_chips": (_int, 20_000, _ge(1)),
    "scenario.sigma_d_ps": (_float, 6.7, _gt(0)),
    "scenario.threshold_ps": (_float, 24.4, _gt(0)),
    "scenario.trials": (_int, 100_000, _ge(2)),
    "scenario.mean_spacing_ps": (_float, 20_000.0, _gt(0)),
}

REQUIRED = ("scenario", "seed")


@dataclass
class ScenarioConfig:
    """Validated configuration with every default materialized."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def scenario(self):
        return self.values["scenario"]

    @property
    def seed(self):
        return self.values["seed"]

    def pvt(self):
        v = self.values
        return PvtCondition(v["pvt.corner"], v["pvt.supply_v"], v["pvt.temperature_c"])

    def clock(self):
        v = self.values
        return replace(DEFAULT_CLOCK, white_edge_jitter_ps=v["clock.white_jitter_ps"],
                       wander_plateau_ps=v["clock.wander_plateau_ps"],
                       wander_corr_time_ns=v["clock.wander_corr_time_ns"],
                       edge_pattern_ps=v["clock.edge_pattern_ps"])

    def ta(self):
        v = self.values
        curve = StaticErrorCurve(
            offset_ps=tuple((c, v[f"ta.offset_{c}_ps"]) for c in ("ss", "tt", "ff")),
            amplitude_ps=tuple((c, v[f"ta.amplitude_{c}_ps"]) for c in ("ss", "tt", "ff")),
            shape_enabled=v["ta.static_shape"])
        return TaConfig(v["ta.gain"], v["ta.t_loop_ps"], v["ta.sigma_w_ps"], curve)

    def chip_config(self):
        v = self.values
        model = replace(DEFAULT_MODEL, k_vdl_ps_per_mv=v["chip.k_vdl_ps_per_mv"],
                        temp_coeff_per_c=v["chip.temp_coeff_per_c"],
                        supply_coeff_per_v=v["chip.supply_coeff_per_v"],
                        nonlin_curvature=v["chip.nonlin_curvature"],
                        mismatch_temp_coeff_per_c=v["chip.mismatch_temp_coeff_per_c"])
        mm = MismatchConfig(v["chip.sigma_gain_rel"], v["chip.sigma_tap_ps"], v["chip.sigma_voff_mv"],
                            v["chip.tap_jitter_ps"], v["chip.sigma_gradient_ps"],
                            v["chip.systematic_gradient_ps"])
        return ChipConfig(ta=self.ta(), truncate_to_bits=v["chip.truncate_bits"],
                          channels=v["chip.channels"], master_group=v["chip.master_group"],
                          sync_taps=v["chip.sync_taps"], encode_tail_ps=v["chip.encode_tail_ps"],
                          mismatch=mm, model=model, dac_step_mv=v["chip.dac_step_mv"])

    def channel_list(self):
        ch = self.values["channels"]
        n = self.values["chip.channels"]
        return tuple(range(n)) if ch is None else ch

    def echo(self):
        """Canonical ``key = value`` lines for every key, in schema order."""
        return [f"{k} = {format_value(self.values[k])}" for k in SCHEMA]


def format_value(v):
    if v is None:
        return "all"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    return str(v)


def validate_config(text, overrides=None):
    """Parse and validate config text; raises ConfigError with all diagnostics.

    ``overrides`` maps keys to already-typed values (command-line flags) and
    wins over the file.
    """
    diags = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            diags.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, val = (x.strip() for x in body.split("=", 1))
        if key not in SCHEMA:
            diags.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            diags.append(f"line {lineno}: duplicate key {key!r} (first on line {raw[key][0]})")
            continue
        raw[key] = (lineno, val)

    values = {}
    for key, (parse, default, check) in SCHEMA.items():
        if key in (overrides or {}):
            values[key] = overrides[key]
            where = "command line"
        elif key in raw:
            lineno, val = raw[key]
            where = f"line {lineno}"
            try:
                values[key] = parse(val)
            except ValueError as e:
                diags.append(f"{where}: {key}: cannot parse {val!r} ({e})")
                continue
        else:
            if key in REQUIRED:
                diags.append(f"missing required key {key!r}")
                continue
            values[key] = default
            continue
        if check is not None and values[key] is not None:
            ok = check(values[key])
            if ok is not True:
                diags.append(f"{where}: {key}: {values[key]!r} {ok}")
    if not diags:
        n = values["chip.channels"]
        bad = [c for c in (values["channels"] or ()) if not 0 <= c < n]
        if bad:
            diags.append(f"channels: {bad} outside [0, {n - 1}]")
        if values["scenario"] == "delay_sweep" and values["channels"] is not None and len(values["channels"]) % 2:
            diags.append("channels: delay_sweep needs an even number of channels")
    if diags:
        raise ConfigError(diags)
    return ScenarioConfig(values)
