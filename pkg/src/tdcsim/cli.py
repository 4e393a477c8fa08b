"""Command-line front end: ``tdcsim run <config> [flags]``.

Builds the chip described by the config, runs one scenario, and writes its
tables plus ``summary.txt`` into the output directory.  Exit status: 0 on a
completed run (check outcomes are in the summary), 2 for an invalid config,
1 for a simulation error.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import io as tio
from .calibration import LEVELS, apply_correction
from .characterization import PairwiseMatrix, solve_channel_sigmas
from .config import parse_channels, validate_config
from .conversion import ConversionBatch, build_chip, ideal_chip
from .errors import ConfigError, TdcError
from .experiments import (
    calibrate, delay_sweep, linearity, latency_audit, ordering_holds, sweep_summary,
    ta_jitter_check, temperature_sweep, trim_chip, yield_mc,
)
from .measurement import code_density_run, pair_hits, run_channels, unwrap_difference

INL_LIMIT_LSB = 2.5
INL_STD_LIMIT_PS = 14.6
TEMP_INL_RANGE_LSB = (-2.5, 3.0)
TEMP_STD_RANGE_PS = (8.0, 18.0)


class Run:
    """Output sink for one scenario run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = tio.ensure_dir(cfg["output_dir"])
        self.items = []

    def header(self, kind, **extra):
        # output_dir is left out so a run reproduces byte-for-byte anywhere
        lines = [x for x in self.cfg.echo() if not x.startswith("output_dir ")]
        return tio.header_lines(kind, self.cfg.seed, lines, extra)

    def path(self, name):
        return os.path.join(self.out, name)

    def put(self, key, value):
        self.items.append((key, value))

    def finish(self):
        checks = [v for k, v in self.items if k.startswith("check.")]
        self.put("checks_passed", sum(bool(c) for c in checks))
        self.put("checks_total", len(checks))
        tio.write_summary(self.path("summary.txt"), self.header("summary", scenario=self.cfg.scenario),
                          self.items)
        return all(checks)


def _chip(cfg):
    ccfg = cfg.chip_config()
    if cfg["chip.ideal"]:
        chip = ideal_chip(ccfg, ccfg.channels)
        return chip.at(cfg.pvt())
    return build_chip(ccfg, cfg.pvt(), cfg.clock(), seed=cfg.seed)


def _trimmed(cfg, chip, channels):
    if cfg["chip.ideal"] or not cfg["calib.trim"]:
        return chip, {}
    return trim_chip(chip, cfg.seed, cfg["calib.trim_events"], channels)


def _lin_items(run, prefix, reports):
    a = np.array([(r.dnl_min, r.dnl_max, r.inl_min, r.inl_max, r.inl_std_ps, r.missing_codes)
                  for r in reports.values()])
    run.put(f"{prefix}.dnl_min_lsb", float(a[:, 0].min()))
    run.put(f"{prefix}.dnl_max_lsb", float(a[:, 1].max()))
    run.put(f"{prefix}.inl_min_lsb", float(a[:, 2].min()))
    run.put(f"{prefix}.inl_max_lsb", float(a[:, 3].max()))
    run.put(f"{prefix}.inl_std_mean_ps", float(a[:, 4].mean()))
    run.put(f"{prefix}.inl_std_max_ps", float(a[:, 4].max()))
    run.put(f"{prefix}.missing_codes", int(a[:, 5].sum()))
    return a


def _write_lin(run, reports, suffix=""):
    for c, r in reports.items():
        tio.write_linearity(run.path(f"linearity_ch{c:02d}{suffix}.txt"), r, run.header("linearity"), c)


def poisson_ok(report, nsig=5.0):
    lo, hi = report.window
    seg = report.histogram[lo:hi + 1].astype(float)
    mu = seg.mean()
    return bool(np.all(np.abs(seg - mu) <= nsig * math.sqrt(mu)))


def scenario_linearity(cfg, run):
    chip = _chip(cfg)
    chans = cfg.channel_list()
    chip, _ = _trimmed(cfg, chip, chans)
    reports, batches = {}, []
    for c in chans:
        rep, b = code_density_run(chip, c, cfg["events"], cfg.seed, stimulus=cfg["scenario.stimulus"])
        reports[c] = rep
        batches.append(b)
    _write_lin(run, reports)
    if cfg["scenario.write_conversions"]:
        tio.write_conversions(run.path("conversions.txt"), batches, run.header("conversions"))
    a = _lin_items(run, "linearity", reports)
    run.put("linearity.events_kept", int(sum(r.n_events for r in reports.values())))
    run.put("check.dnl_within_1lsb", bool(a[:, 0].min() > -1 and a[:, 1].max() < 1))
    run.put("check.no_missing_codes", bool(a[:, 5].sum() == 0))
    if cfg["chip.ideal"]:
        run.put("check.ideal_poisson_5sigma", all(poisson_ok(r) for r in reports.values()))


def scenario_trim_search(cfg, run):
    raw = _chip(cfg)
    chans = cfg.channel_list()
    before = linearity(raw, chans, cfg["events"], cfg.seed, tag="pretrim")
    chip, results = trim_chip(raw, cfg.seed, cfg["calib.trim_events"], chans)
    table, _ = calibrate(chip, cfg.seed, cfg["calib.events"], chans, cfg["calib.total_lut"])
    tio.write_calibration(run.path("calibration.json"), table)
    tio.write_mismatch(run.path("mismatch.txt"), raw.channels, run.header("mismatch"))
    after = linearity(chip, chans, cfg["events"], cfg.seed, tag="posttrim")
    _write_lin(run, after)
    rows = [(c, r.ical_sign * r.rcal_code, r.trials, r.unfixable, before[c].inl_pp, after[c].inl_min,
             after[c].inl_max, after[c].inl_std_ps) for c, r in results.items()]
    tio.write_table(run.path("trim.txt"), run.header("trim"),
                    ("channel", "signed_code", "trials", "unfixable", "inl_pp_before_lsb", "inl_min_lsb",
                     "inl_max_lsb", "inl_std_ps"), rows)
    _lin_items(run, "untrimmed", before)
    a = _lin_items(run, "trimmed", after)
    ok = (a[:, 2] >= -INL_LIMIT_LSB) & (a[:, 3] <= INL_LIMIT_LSB) & (a[:, 4] <= INL_STD_LIMIT_PS)
    run.put("trim.unfixable_channels", int(sum(r.unfixable for r in results.values())))
    run.put("trim.fraction_within_limits", float(ok.mean()))
    run.put("check.trimmed_95pct_within_limits", bool(ok.mean() >= 0.95))


def pair_matrix(batches, table, level, channels):
    """Pair-difference variances (ps^2) over events every channel kept."""
    keep = np.logical_and.reduce([batches[c].kept for c in channels])
    times = {c: apply_correction(batches[c].d_out[keep], table, level, c) for c in channels}
    modulus = table.n_codes * table.lsb_ps
    n = len(channels)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            raw = times[channels[j]] - times[channels[i]]
            ang = np.angle(np.mean(np.exp(2j * np.pi * raw / modulus)))
            d = unwrap_difference(raw, ang / (2 * np.pi) * modulus, modulus)
            m[i, j] = m[j, i] = np.var(d, ddof=1)
    return m


def scenario_delay_sweep(cfg, run):
    raw = _chip(cfg)
    chans = cfg.channel_list()
    half = len(chans) // 2
    pairs = list(zip(chans[:half], chans[half:2 * half]))
    chip, _ = trim_chip(raw, cfg.seed, cfg["calib.trim_events"], chans)
    table, _ = calibrate(chip, cfg.seed, cfg["calib.events"], chans, True)
    tio.write_calibration(run.path("calibration.json"), table)
    pts = delay_sweep(raw, chip, table, cfg.seed, cfg["scenario.delays_ns"], cfg["scenario.pairs"], pairs)
    tio.write_table(run.path("delay_sweep.txt"), run.header("delay_sweep"),
                    ("delay_ns", "level", "precision_ps", "spread_ps", "mean_error_ps"),
                    [(p.delay_ns, p.level, p.precision_ps, p.precision_spread_ps, p.mean_error_ps) for p in pts])
    # full pairwise matrix at a 3.5 ns inter-pulse delay, hardware calibration only
    d = 3500.0
    t = pair_hits(cfg["scenario.pairs"], d, cfg.seed, "matrix")
    hits = {c: t for c in chans[:half]}
    hits.update({c: t + d for c in chans[half:]})
    res = run_channels(chip, hits, cfg.seed, "matrix")
    m = pair_matrix(res, table, "hw_only", list(chans))
    solved = solve_channel_sigmas(PairwiseMatrix(m))
    rows = [(chans[i], chans[j], math.sqrt(m[i, j])) for i in range(len(chans)) for j in range(i + 1, len(chans))]
    tio.write_precision(run.path("precision.txt"), rows, run.header("precision", delay_ps=d),
                        (chans, solved.sigma_ps))
    summ = sweep_summary(pts)
    for lv in LEVELS:
        for k in ("mean", "min", "max"):
            run.put(f"sweep.{lv}.{k}_ps", summ[lv][k])
    run.put("precision.solved_mean_ps", float(np.mean(solved.sigma_ps)))
    run.put("precision.solved_spread_ps", float(np.std(solved.sigma_ps)))
    run.put("check.level_ordering", ordering_holds(summ))
    run.put("check.four_lut_below_22ps", bool(summ["four_lut"]["max"] <= 22.0))
    run.put("check.total_lut_floor_10_20ps", bool(10.0 <= summ["total_lut"]["min"] <= 20.0))


def scenario_temperature_sweep(cfg, run):
    raw = _chip(cfg)
    chans = cfg.channel_list()
    chip, _ = trim_chip(raw, cfg.seed, cfg["calib.trim_events"], chans)
    res = temperature_sweep(chip, chans, cfg["events"], cfg.seed, cfg["scenario.temperatures_c"])
    rows = []
    ok_all = True
    for temp, reps in res.items():
        for c, r in reps.items():
            rows.append((temp, c, r.inl_min, r.inl_max, r.inl_std_ps, r.dnl_min, r.dnl_max, r.missing_codes))
        a = _lin_items(run, f"temp{temp:g}", reps)
        inl_ok = a[:, 2].min() >= TEMP_INL_RANGE_LSB[0] and a[:, 3].max() <= TEMP_INL_RANGE_LSB[1]
        std_ok = TEMP_STD_RANGE_PS[0] <= a[:, 4].mean() <= TEMP_STD_RANGE_PS[1]
        ok_all &= bool(inl_ok and std_ok)
    tio.write_table(run.path("temperature.txt"), run.header("temperature"),
                    ("temperature_c", "channel", "inl_min_lsb", "inl_max_lsb", "inl_std_ps", "dnl_min_lsb",
                     "dnl_max_lsb", "missing_codes"), rows)
    run.put("check.inl_range_and_std_band", ok_all)


def scenario_yield_mc(cfg, run):
    n = cfg["chip.channels"]
    emp, formula = yield_mc(cfg["scenario.n_chips"], n, cfg["scenario.sigma_d_ps"],
                            cfg["scenario.threshold_ps"], cfg.seed)
    run.put("yield.n_chips", cfg["scenario.n_chips"])
    run.put("yield.n_channels", n)
    run.put("yield.empirical", emp)
    run.put("yield.formula", formula)
    se = math.sqrt(formula * (1 - formula) / cfg["scenario.n_chips"])
    run.put("check.empirical_matches_formula", bool(abs(emp - formula) <= max(0.005, 4 * se)))


def scenario_ta_jitter_check(cfg, run):
    sw = cfg["ta.sigma_w_ps"]
    rows, gains = ta_jitter_check(sw, cfg["scenario.trials"], cfg.seed)
    tio.write_table(run.path("ta_jitter.txt"), run.header("ta_jitter"),
                    ("n", "mc_std_ps", "formula_std_ps", "rel_err", "mc_input_ps", "formula_input_ps"), rows)
    for n, mc, f, rel, _, _ in rows:
        run.put(f"ta.n{n}.rel_err", rel)
    for a, mc, f in gains:
        run.put(f"ta.gain{a}.input_referred_ps", mc)
        run.put(f"ta.gain{a}.formula_ps", f)
    run.put("check.jitter_law_2pct", all(abs(r[3]) <= 0.02 for r in rows))


def scenario_latency_audit(cfg, run):
    chip = _chip(cfg)
    chans = cfg.channel_list()
    batches = []
    for c in chans:
        b, bounds = latency_audit(chip, cfg["events"], cfg.seed, c, cfg["scenario.mean_spacing_ps"])
        batches.append(b)
    if cfg["scenario.write_conversions"]:
        tio.write_conversions(run.path("conversions.txt"), batches, run.header("conversions"))
    lat = np.concatenate([b.latency_ps[b.kept] for b in batches])
    run.put("latency.bound_min_ps", bounds[0])
    run.put("latency.bound_max_ps", bounds[1])
    run.put("latency.min_ps", float(lat.min()))
    run.put("latency.max_ps", float(lat.max()))
    run.put("latency.kept", int(lat.size))
    run.put("latency.dropped", int(sum(int(b.dropped.sum()) for b in batches)))
    run.put("check.latency_within_bounds", bool(lat.min() >= bounds[0] and lat.max() <= bounds[1]))


SCENARIO_RUNNERS = {
    "linearity": scenario_linearity,
    "trim_search": scenario_trim_search,
    "delay_sweep": scenario_delay_sweep,
    "temperature_sweep": scenario_temperature_sweep,
    "yield_mc": scenario_yield_mc,
    "ta_jitter_check": scenario_ta_jitter_check,
    "latency_audit": scenario_latency_audit,
}


def run_scenario(cfg):
    """Run a validated config; returns True when every check passed."""
    run = Run(cfg)
    SCENARIO_RUNNERS[cfg.scenario](cfg, run)
    return run.finish()


def _overrides(args):
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.out is not None:
        o["output_dir"] = args.out
    if args.events is not None:
        o["events"] = args.events
    if args.temp is not None:
        o["pvt.temperature_c"] = args.temp
    if args.ta_gain is not None:
        o["ta.gain"] = args.ta_gain
    if args.channels is not None:
        o["channels"] = args.channels
    return o


def _channel_arg(s):
    try:
        return parse_channels(s)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser():
    p = argparse.ArgumentParser(prog="tdcsim", description="Multichannel 3-step TDC simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the scenario described by a config file")
    r.add_argument("config", help="key = value config file")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory")
    r.add_argument("--events", type=int)
    r.add_argument("--temp", type=float, help="operating temperature (C)")
    r.add_argument("--ta-gain", type=int, choices=(8, 16))
    r.add_argument("--channels", type=_channel_arg, help="e.g. 0-7,36-43 or all")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as f:
            text = f.read()
    except OSError as e:
        print(f"tdcsim: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = validate_config(text, _overrides(args))
    except ConfigError as e:
        for d in e.diagnostics:
            print(f"{args.config}: {d}", file=sys.stderr)
        return 2
    try:
        ok = run_scenario(cfg)
    except (TdcError, ValueError) as e:
        print(f"tdcsim: {cfg.scenario} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"{cfg.scenario}: {'all checks passed' if ok else 'some checks failed'}; "
          f"outputs in {cfg['output_dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
