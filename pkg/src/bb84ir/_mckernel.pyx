# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-trial tally loop for the Monte Carlo attack simulation."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _search(const double[:] cdf, double u) noexcept nogil:
    # first index i with u < cdf[i]; the last index absorbs round-off
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t last = cdf.shape[0] - 1
    while i < last and u >= cdf[i]:
        i += 1
    return i


def tally(
    const double[:, :] u,
    const double[:] photon_cdf,
    const double[:] success,
    const double[:, :] shift_cdf,
    const double[:] resend_cdf,
    const double[:, :] detect_cdf,
    const double[:, :] split_cdf,
):
    """Accumulate a 4x8 count table from eight rows of uniforms per trial."""
    cdef Py_ssize_t trials = u.shape[1]
    counts_arr = np.zeros((4, 8), dtype=np.int64)
    cdef long long[:, :] counts = counts_arr
    cdef Py_ssize_t t, k, n, d, kt, beta, m, det, x, outcome
    with nogil:
        for t in range(trials):
            k = <Py_ssize_t>(u[0, t] * 4)
            if k > 3:
                k = 3
            beta = 0 if u[4, t] < 0.5 else 1
            outcome = 0
            n = _search(photon_cdf, u[1, t])
            if n > 0 and u[2, t] < success[n]:
                d = _search(shift_cdf[n], u[3, t])
                kt = (k + d) % 4
                m = _search(resend_cdf, u[5, t])
                det = _search(detect_cdf[m], u[6, t])
                if det > 0:
                    if beta == kt % 2:
                        outcome = 1 + kt // 2
                    else:
                        x = _search(split_cdf[det], u[7, t])
                        if x == 0:
                            outcome = 2
                        elif x == det:
                            outcome = 1
                        else:
                            outcome = 3
            counts[k, 4 * beta + outcome] += 1
    return counts_arr
