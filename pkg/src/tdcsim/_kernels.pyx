# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-event kernels; see _kernels_py for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN

cnp.import_array()

DEF MAX_WINDOW = 64


def window_count(threshold, double[::1] cum, double[:, ::1] z, double sigma, Py_ssize_t residue_offset):
    cdef double[::1] thr = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef Py_ssize_t n = thr.shape[0]
    cdef Py_ssize_t n_taps = cum.shape[0] - 1
    cdef Py_ssize_t w = z.shape[1] - 1
    if w > MAX_WINDOW:
        raise ValueError("window too large")
    count_arr = np.empty(n, dtype=np.int64)
    residue_arr = np.empty(n, dtype=np.float64)
    status_arr = np.zeros(n, dtype=np.int8)
    cdef long long[::1] count = count_arr
    cdef double[::1] residue = residue_arr
    cdef signed char[::1] status = status_arr
    cdef double cj[MAX_WINDOW]
    cdef Py_ssize_t i, j, lo, hi, mid, ks, w0, tap, run, r, last
    cdef double t, walk
    cdef bint open_run
    with nogil:
        for i in range(n):
            t = thr[i]
            # static count: first index in cum[1:] with value > t
            lo = 0
            hi = n_taps
            while lo < hi:
                mid = (lo + hi) >> 1
                if cum[mid + 1] <= t:
                    lo = mid + 1
                else:
                    hi = mid
            ks = lo
            w0 = ks - 2 if ks > 2 else 0
            walk = (sigma * sqrt(<double>w0)) * z[i, 0]
            run = 0
            open_run = True
            last = 0
            for j in range(w):
                walk = walk + sigma * z[i, j + 1]
                tap = w0 + j + 1
                if tap > n_taps:
                    break
                cj[j] = cum[tap] + walk
                last = tap
                if open_run and cj[j] <= t:
                    run += 1
                else:
                    open_run = False
            count[i] = w0 + run
            if run == w and last < n_taps:
                status[i] = 3
            if count[i] >= n_taps:
                status[i] = 1
            residue[i] = NAN
            if residue_offset >= 0:
                r = count[i] + residue_offset
                j = r - w0 - 1
                if r <= n_taps and 0 <= j < w:
                    residue[i] = cj[j] - t
                elif r > n_taps:
                    if status[i] == 0:
                        status[i] = 2
                elif status[i] == 0:
                    status[i] = 3
    return count_arr, residue_arr, status_arr


def drop_mask(double[::1] t_hit, double[::1] t_end, double busy_until):
    cdef Py_ssize_t n = t_hit.shape[0]
    cdef Py_ssize_t i
    dropped_arr = np.zeros(n, dtype=bool)
    cdef cnp.npy_bool[::1] dropped = dropped_arr
    with nogil:
        for i in range(n):
            if t_hit[i] < busy_until:
                dropped[i] = 1
            else:
                busy_until = t_end[i]
    return dropped_arr, busy_until
