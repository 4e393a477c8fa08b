"""Pure-numpy implementations of the per-event kernels.

These mirror ``_kernels.pyx`` operation for operation so both backends
return bit-identical results for the same inputs.
"""

import numpy as np

STATUS_OK = 0
STATUS_SATURATED = 1
STATUS_OVERFLOW = 2
STATUS_WINDOW = 3


def window_count(threshold, cum, z, sigma, residue_offset):
    """Count jittered taps passed by each threshold.

    ``cum`` holds static cumulative tap delays with ``cum[0] = 0`` and
    ``cum[i]`` the delay up to tap i.  Per-event jitter is a Gaussian random
    walk along the line; only a window of ``W = z.shape[1] - 1`` taps
    starting two taps before the static count is materialized: ``z[:, 0]``
    sets the walk at the window start (variance w0 * sigma^2), ``z[:, 1:]``
    are the per-tap increments.

    Returns ``(count, residue, status)`` where ``residue`` is the jittered
    cumulative delay of tap ``count + residue_offset`` minus the threshold
    (NaN when ``residue_offset < 0``).
    """
    threshold = np.asarray(threshold, dtype=np.float64)
    n_taps = cum.shape[0] - 1
    n = threshold.shape[0]
    w = z.shape[1] - 1
    ks = np.searchsorted(cum[1:], threshold, side="right")
    w0 = np.maximum(ks - 2, 0)
    steps = np.empty((n, w + 1))
    steps[:, 0] = (sigma * np.sqrt(w0.astype(np.float64))) * z[:, 0]
    steps[:, 1:] = sigma * z[:, 1:]
    walk = np.cumsum(steps, axis=1)[:, 1:]
    taps = w0[:, None] + np.arange(1, w + 1)
    inside = taps <= n_taps
    cj = cum[np.minimum(taps, n_taps)] + walk
    passed = (cj <= threshold[:, None]) & inside
    run = np.cumprod(passed, axis=1).sum(axis=1)
    count = w0 + run
    status = np.zeros(n, dtype=np.int8)
    # every tap of the window passed: the count may be incomplete
    status[(run == w) & (taps[:, -1] < n_taps)] = STATUS_WINDOW
    status[count >= n_taps] = STATUS_SATURATED
    residue = np.full(n, np.nan)
    if residue_offset >= 0:
        r = count + residue_offset
        j = r - w0 - 1
        # a residue tap outside the materialized window has no jittered delay
        ok = (r <= n_taps) & (j >= 0) & (j < w)
        residue[ok] = cj[np.flatnonzero(ok), j[ok]] - threshold[ok]
        status[(r > n_taps) & (status == STATUS_OK)] = STATUS_OVERFLOW
        status[(~ok) & (r <= n_taps) & (status == STATUS_OK)] = STATUS_WINDOW
    return count.astype(np.int64), residue, status


def drop_mask(t_hit, t_end, busy_until):
    """One-conversion-at-a-time rule; returns (dropped, busy_until_after)."""
    n = t_hit.shape[0]
    dropped = np.zeros(n, dtype=bool)
    for i in range(n):
        if t_hit[i] < busy_until:
            dropped[i] = True
        else:
            busy_until = t_end[i]
    return dropped, busy_until
