# cython: language_level=3
"""Compiled hot loops.

Must match ``robusteval.kernels.pure`` — the section tallies bit-for-bit,
the windowed moments to float round-off (same moment formula, different
summation order).
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


@cython.boundscheck(False)
@cython.wraparound(False)
def coverage_tally(double[:, ::1] values, double[::1] low, double[::1] high, int k):
    """Tally section hits and out-of-range flags per neuron.

    Same boundary rule as the pure kernel: k sections of width
    ``(high - low) / k``, last section closed at ``high``, degenerate
    ranges map to the last section.
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t c = values.shape[1]
    hits_arr = np.zeros((c, k), dtype=np.uint8)
    upper_arr = np.zeros(c, dtype=np.uint8)
    lower_arr = np.zeros(c, dtype=np.uint8)
    cdef unsigned char[:, ::1] hits = hits_arr
    cdef unsigned char[::1] upper = upper_arr
    cdef unsigned char[::1] lower = lower_arr
    cdef Py_ssize_t i, j
    cdef long idx
    cdef double v, lo, hi, delta
    for j in range(c):
        lo = low[j]
        hi = high[j]
        delta = (hi - lo) / k
        for i in range(n):
            v = values[i, j]
            if v > hi:
                upper[j] = 1
            elif v < lo:
                lower[j] = 1
            else:
                if delta == 0.0:
                    idx = k - 1
                else:
                    idx = <long>floor((v - lo) / delta)
                    if idx < 0:
                        idx = 0
                    elif idx > k - 1:
                        idx = k - 1
                    while idx > 0 and v < lo + idx * delta:
                        idx -= 1
                    while idx < k - 1 and v >= lo + (idx + 1) * delta:
                        idx += 1
                hits[j, idx] = 1
    return hits_arr, upper_arr, lower_arr


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def window_std(double[:, ::1] img, int radius):
    """Population std over each pixel's clipped square window."""
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, yy, xx, y0, y1, x0, x1
    cdef double s1, s2, v, mean, var
    cdef double cnt
    for y in range(h):
        y0 = y - radius if y - radius > 0 else 0
        y1 = y + radius + 1 if y + radius + 1 < h else h
        for x in range(w):
            x0 = x - radius if x - radius > 0 else 0
            x1 = x + radius + 1 if x + radius + 1 < w else w
            s1 = 0.0
            s2 = 0.0
            for yy in range(y0, y1):
                for xx in range(x0, x1):
                    v = img[yy, xx]
                    s1 += v
                    s2 += v * v
            cnt = <double>((y1 - y0) * (x1 - x0))
            mean = s1 / cnt
            var = s2 / cnt - mean * mean
            out[y, x] = sqrt(var) if var > 0.0 else 0.0
    return out_arr
