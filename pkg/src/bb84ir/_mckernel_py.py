"""NumPy fallback for the compiled tally loop; consumes the same uniforms and
tables and yields identical counts."""
from __future__ import annotations

import numpy as np


def _search(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first index i with u < cdf[i]; the last index absorbs round-off
    return np.minimum(np.sum(u[:, None] >= cdf[None, :-1], axis=1), cdf.shape[0] - 1)


def _search_rows(cdf: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    table = cdf[rows]
    return np.minimum(np.sum(u[:, None] >= table[:, :-1], axis=1), cdf.shape[1] - 1)


def tally(u, photon_cdf, success, shift_cdf, resend_cdf, detect_cdf, split_cdf):
    k = np.minimum((u[0] * 4).astype(np.int64), 3)
    beta = (u[4] >= 0.5).astype(np.int64)
    outcome = np.zeros(u.shape[1], dtype=np.int64)

    n = _search(photon_cdf, u[1])
    live = np.flatnonzero((n > 0) & (u[2] < success[n]))
    d = _search_rows(shift_cdf, n[live], u[3, live])
    kt = (k[live] + d) % 4
    m = _search(resend_cdf, u[5, live])
    det = _search_rows(detect_cdf, m, u[6, live])
    x = _search_rows(split_cdf, det, u[7, live])

    matched = beta[live] == kt % 2
    out = np.where(x == 0, 2, np.where(x == det, 1, 3))
    out = np.where(matched, 1 + kt // 2, out)
    outcome[live] = np.where(det > 0, out, 0)

    counts = np.zeros((4, 8), dtype=np.int64)
    np.add.at(counts, (k, 4 * beta + outcome), 1)
    return counts
