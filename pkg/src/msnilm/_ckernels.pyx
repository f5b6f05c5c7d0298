# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`msnilm._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double


def im2col(real[:, :, ::1] x, Py_ssize_t k, Py_ssize_t d):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t pad = (k - 1) * d // 2
    cdef Py_ssize_t b, c, j, shift, lo, hi
    cdef size_t item = sizeof(real)
    dtype = np.float32 if real is float else np.float64
    out = np.empty((C, k, B, T), dtype=dtype)
    cdef real[:, :, :, ::1] cols = out
    with nogil:
        for c in range(C):
            for j in range(k):
                # output t reads x[t + shift]; valid t range is [lo, hi)
                shift = j * d - pad
                lo = -shift if shift < 0 else 0
                hi = T - shift if shift > 0 else T
                if hi < lo:
                    hi = lo
                for b in range(B):
                    if lo > 0:
                        memset(&cols[c, j, b, 0], 0, lo * item)
                    if hi < T:
                        memset(&cols[c, j, b, hi], 0, (T - hi) * item)
                    if hi > lo:
                        memcpy(&cols[c, j, b, lo], &x[b, c, lo + shift], (hi - lo) * item)
    return out


def col2im(real[:, :, :, ::1] cols, Py_ssize_t d):
    cdef Py_ssize_t C = cols.shape[0], k = cols.shape[1], B = cols.shape[2], T = cols.shape[3]
    cdef Py_ssize_t pad = (k - 1) * d // 2
    cdef Py_ssize_t b, c, j, t, lo, hi, shift
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((B, C, T), dtype=dtype)
    cdef real[:, :, ::1] dx = out
    for b in range(B):
        for c in range(C):
            for j in range(k):
                shift = j * d - pad
                lo = -shift if shift < 0 else 0
                hi = T - shift if shift > 0 else T
                for t in range(lo, hi):
                    dx[b, c, t + shift] += cols[c, j, b, t]
    return out


def activation_runs(const unsigned char[::1] above, double period,
                    double min_on_duration, double min_off_duration):
    cdef Py_ssize_t n = above.shape[0]
    cdef Py_ssize_t i = 0, run_start, run_end, cur_start = -1, cur_end = -1
    starts = []
    ends = []
    while i < n:
        if not above[i]:
            i += 1
            continue
        run_start = i
        while i < n and above[i]:
            i += 1
        run_end = i
        if cur_start < 0:
            cur_start = run_start
            cur_end = run_end
        elif (run_start - cur_end) * period < min_off_duration:
            cur_end = run_end
        else:
            if (cur_end - cur_start) * period >= min_on_duration:
                starts.append(cur_start)
                ends.append(cur_end)
            cur_start = run_start
            cur_end = run_end
    if cur_start >= 0 and (cur_end - cur_start) * period >= min_on_duration:
        starts.append(cur_start)
        ends.append(cur_end)
    return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)
