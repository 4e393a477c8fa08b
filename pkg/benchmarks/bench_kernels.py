"""Compiled versus pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Times the two per-event kernels directly on both backends, then one
end-to-end code-density run per backend in a fresh interpreter (the backend
is fixed at import, so TDCSIM_PURE_PYTHON must be set before start-up).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tdcsim import kernels
from tdcsim.rng import substream

END_TO_END = """
import time
from tdcsim.conversion import build_chip
from tdcsim.kernels import BACKEND
from tdcsim.measurement import code_density_run
chip = build_chip(seed=1, channels=1)
t0 = time.perf_counter()
code_density_run(chip, 0, {events}, 1)
print(BACKEND, time.perf_counter() - t0)
"""


def kernel_inputs(n):
    rng = substream(0, "bench")
    cum = np.concatenate([[0.0], np.cumsum(195.3125 + 3.5 * rng.standard_normal(42))])
    thr = rng.uniform(800, 7200, n)
    z = rng.standard_normal((n, 7))
    t = np.cumsum(rng.exponential(20_000.0, n))
    end = t + rng.uniform(10_000, 16_000, n)
    return cum, thr, z, t, end


def bench_kernels(n, repeat):
    cum, thr, z, t, end = kernel_inputs(n)
    rows = []
    for name, mod in kernels.backends().items():
        wc = min(timeit.repeat(lambda: mod.window_count(thr, cum, z, 1.9, 2), number=1, repeat=repeat))
        dm = min(timeit.repeat(lambda: mod.drop_mask(t, end, -1e300), number=1, repeat=repeat))
        rows.append((name, wc, dm))
    return rows


def bench_end_to_end(events):
    out = []
    for pure in ("", "1"):
        env = dict(os.environ, TDCSIM_PURE_PYTHON=pure)
        r = subprocess.run([sys.executable, "-c", END_TO_END.format(events=events)], env=env,
                           capture_output=True, text=True, check=True)
        name, secs = r.stdout.split()
        out.append((name, float(secs)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rows = bench_kernels(args.events, args.repeat)
    print(f"kernels, {args.events} events, best of {args.repeat}")
    print(f"{'backend':10s} {'window_count ms':>16s} {'drop_mask ms':>14s}")
    for name, wc, dm in rows:
        print(f"{name:10s} {wc * 1e3:16.2f} {dm * 1e3:14.2f}")
    if len(rows) == 2:
        (_, wc_py, dm_py), (_, wc_cy, dm_cy) = rows
        print(f"speed-up   {wc_py / wc_cy:16.1f}x {dm_py / dm_cy:13.1f}x")

    e2e = bench_end_to_end(args.events)
    print(f"\ncode-density run, {args.events} events")
    for name, secs in e2e:
        print(f"{name:10s} {secs:8.3f} s")
    if len(e2e) == 2 and e2e[0][0] != e2e[1][0]:
        print(f"speed-up   {e2e[1][1] / e2e[0][1]:8.2f}x")


if __name__ == "__main__":
    main()
