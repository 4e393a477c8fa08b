"""Plain-text and JSON readers/writers for simulator outputs.

Tables are whitespace-separated with one column-name line; every file starts
with ``#`` header lines (tool version, file kind, seed, echoed config).
Floats that must reload exactly are written with ``repr``.
"""

import json
import math
import os

import numpy as np

from .calibration import CalibrationTable, ChannelCalibration
from .conversion import ConversionRecord
from .delay_lines import ChannelMismatch, N_CDL_TAPS, N_GDL_TAPS
from .timebase import HitStream

VERSION = "0.1.0"
CONVERSION_COLUMNS = ConversionRecord.COLUMNS
LINEARITY_COLUMNS = ("code", "count", "dnl_lsb", "inl_lsb")
PRECISION_COLUMNS = ("channel_i", "channel_j", "sigma_ij_ps")
SOLVED_COLUMNS = ("channel", "sigma_i_ps")
MISMATCH_COLUMNS = (("eps_kvdl", "v_off_mv") + tuple(f"cdl_{i}" for i in range(N_CDL_TAPS))
                    + tuple(f"gdl_{i}" for i in range(N_GDL_TAPS)))


def header_lines(kind, seed=None, config_lines=(), extra=None):
    out = [f"# tdcsim {VERSION}", f"# file: {kind}"]
    if seed is not None:
        out.append(f"# seed: {seed}")
    for k, v in (extra or {}).items():
        out.append(f"# {k}: {v}")
    out.extend(f"# config: {line}" for line in config_lines)
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _write(path, lines):
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_table(path, header, columns, rows):
    lines = list(header) + [" ".join(columns)]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    _write(path, lines)


def read_header(path):
    meta, config = {}, []
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("config: "):
                config.append(body[len("config: "):])
            elif ": " in body:
                k, v = body.split(": ", 1)
                meta[k] = v
    return meta, config


def read_table(path):
    """Return {column: ndarray} for the first table block of a file."""
    blocks = read_blocks(path)
    return blocks[0]


def read_blocks(path):
    """All table blocks (a '#' line after data starts a new block)."""
    blocks, cols, rows = [], None, []
    in_data = False
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if in_data:
                    blocks.append(_columns(cols, rows))
                    cols, rows, in_data = None, [], False
                continue
            if not line.strip():
                continue
            if cols is None:
                cols = line.split()
                in_data = True
            else:
                rows.append(line.split())
    if cols is not None:
        blocks.append(_columns(cols, rows))
    return blocks


def _columns(cols, rows):
    out = {}
    for j, c in enumerate(cols):
        vals = [r[j] for r in rows]
        try:
            out[c] = np.array([int(v) for v in vals], dtype=np.int64)
        except ValueError:
            try:
                out[c] = np.array([float(v) for v in vals])
            except ValueError:
                out[c] = np.array(vals)
    return out


def write_conversions(path, batches, header):
    """Rows ordered by channel then hit time (batches are per channel)."""
    rows = []
    for b in sorted(batches, key=lambda b: b.channel):
        for r in b.records():
            rows.append([getattr(r, c) for c in CONVERSION_COLUMNS])
    write_table(path, header, CONVERSION_COLUMNS, rows)


def read_conversions(path):
    t = read_table(path)
    t["dropped"] = t["dropped"].astype(bool)
    return t


def write_linearity(path, report, header, channel=None):
    rows = [(k, int(report.histogram[k]), report.dnl_lsb[k], report.inl_lsb[k])
            for k in range(report.histogram.size)]
    extra = {"window": f"{report.window[0]} {report.window[1]}", "overflow": report.overflow,
             "lsb_ps": repr(report.lsb_ps)}
    if channel is not None:
        extra = {"channel": channel, **extra}
    write_table(path, list(header) + [f"# {k}: {v}" for k, v in extra.items()], LINEARITY_COLUMNS, rows)


def write_precision(path, pairs, header, solved=None):
    """``pairs``: iterable of (i, j, sigma_ij_ps); ``solved``: (channels, sigmas)."""
    lines = list(header) + [" ".join(PRECISION_COLUMNS)]
    lines += [f"{int(i)} {int(j)} {_fmt(s)}" for i, j, s in pairs]
    if solved is not None:
        chans, sig = solved
        lines += ["# solved per-channel precision", " ".join(SOLVED_COLUMNS)]
        lines += [f"{int(c)} {_fmt(s)}" for c, s in zip(chans, sig)]
    _write(path, lines)


def calibration_to_dict(table):
    chans = []
    for c in sorted(table.channels):
        cal = table.channels[c]
        chans.append({
            "channel": cal.channel,
            "rcal_code": cal.rcal_code,
            "ical_sign": cal.ical_sign,
            "four_lut_ps": list(cal.four_lut_ps),
            "total_lut_ps": None if cal.total_lut_ps is None else [float(x) for x in cal.total_lut_ps],
        })
    return {"header": {"tool": f"tdcsim {VERSION}", **{k: table.meta[k] for k in sorted(table.meta)}},
            "lsb_ps": table.lsb_ps, "n_codes": table.n_codes, "levels": list(table.levels),
            "channels": chans}


def write_calibration(path, table):
    with open(path, "w", newline="\n") as f:
        json.dump(calibration_to_dict(table), f, indent=1, allow_nan=False)
        f.write("\n")


def read_calibration(path):
    with open(path) as f:
        d = json.load(f)
    meta = {k: v for k, v in d["header"].items() if k != "tool"}
    table = CalibrationTable(d["lsb_ps"], d["n_codes"], meta=meta, levels=tuple(d["levels"]))
    for c in d["channels"]:
        table.add(ChannelCalibration(c["channel"], c["rcal_code"], c["ical_sign"], tuple(c["four_lut_ps"]),
                                     c["total_lut_ps"]))
    return table


def write_hits(path, hits):
    t = hits.hit_times_ps if isinstance(hits, HitStream) else np.asarray(hits, dtype=float)
    _write(path, [repr(float(x)) for x in t])


def read_hits(path):
    vals = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                vals.append(float(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {s!r}") from None
    return HitStream(np.array(vals))


def write_mismatch(path, channels, header=()):
    jit = {ch.tap_jitter_ps for ch in channels}
    if len(jit) > 1:
        raise ValueError("channels must share one tap_jitter_ps")
    extra = [f"# tap_jitter_ps: {repr(float(jit.pop())) if jit else '0.0'}"]
    rows = [(ch.eps_kvdl, ch.v_off_mv) + ch.cdl_tap_eps_ps + ch.gdl_tap_eps_ps for ch in channels]
    write_table(path, list(header) + extra, MISMATCH_COLUMNS, rows)


def read_mismatch(path):
    meta, _ = read_header(path)
    jit = float(meta.get("tap_jitter_ps", 0.0))
    t = read_table(path)
    n = t["eps_kvdl"].size
    out = []
    for i in range(n):
        cdl = tuple(float(t[f"cdl_{j}"][i]) for j in range(N_CDL_TAPS))
        gdl = tuple(float(t[f"gdl_{j}"][i]) for j in range(N_GDL_TAPS))
        out.append(ChannelMismatch(float(t["eps_kvdl"][i]), cdl, gdl, float(t["v_off_mv"][i]), jit))
    return out


def write_summary(path, header, items):
    """``items``: ordered (key, value) pairs; written as ``key = value``."""
    lines = list(header)
    for k, v in items:
        if isinstance(v, float):
            v = repr(v)
        elif isinstance(v, bool):
            v = "pass" if v else "FAIL"
        lines.append(f"{k} = {v}")
    _write(path, lines)


def read_summary(path):
    out = {}
    with open(path) as f:
        for line in f:
            if line.startswith("#") or "=" not in line:
                continue
            k, v = (x.strip() for x in line.split("=", 1))
            out[k] = v
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
