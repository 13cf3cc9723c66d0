# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

cdef enum:
    C_SELF = 0
    C_SUP = 1
    C_SUP_MOD = 2

MODE_SELF = C_SELF
MODE_SUP = C_SUP
MODE_SUP_MOD = C_SUP_MOD


def corrupt_batch(x, train, offsets, donors):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] tv = np.ascontiguousarray(train, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ov = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] dv = np.ascontiguousarray(donors, dtype=np.int64)
    cdef Py_ssize_t b = xv.shape[0], w = xv.shape[1], k = ov.shape[1]
    out_arr = np.array(xv, dtype=np.float64, copy=True)
    cols_arr = np.empty((b, k), dtype=np.int64)
    perm_arr = np.empty(w, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef cnp.int64_t[:, ::1] cols = cols_arr
    cdef cnp.int64_t[::1] perm = perm_arr
    cdef Py_ssize_t i, j, idx
    cdef cnp.int64_t held, c
    for i in range(b):
        for j in range(w):
            perm[j] = j
        for j in range(k):
            idx = j + ov[i, j]
            held = perm[j]
            perm[j] = perm[idx]
            perm[idx] = held
            c = perm[j]
            cols[i, j] = c
            out[i, c] = tv[dv[i, j], c]
    return out_arr, cols_arr


cdef extern from *:
    """
    #include <math.h>
    /* One anchor row: fills g[k] with softmax-minus-positive gradient terms
       (unscaled) and returns the per-anchor loss. */
    static double botsscl_row(const double *restrict srow, const double *restrict dmask,
                              const double *restrict pmask, double *restrict g,
                              Py_ssize_t m, double inv_tau, double npos) {
        double top = -1e300, z = 0.0, pos_sum = 0.0, inv_z;
        Py_ssize_t k;
        for (k = 0; k < m; k++) {
            double v = dmask[k] != 0.0 ? srow[k] : -1e300;
            top = v > top ? v : top;
        }
        top *= inv_tau;
        for (k = 0; k < m; k++) {
            double l = srow[k] * inv_tau;
            g[k] = exp(l - top) * dmask[k];
            z += g[k];
            pos_sum += l * pmask[k];
        }
        inv_z = 1.0 / z;
        for (k = 0; k < m; k++)
            g[k] = g[k] * inv_z - pmask[k] / npos;
        return top + log(z) - pos_sum / npos;
    }
    """
    double botsscl_row(const double *srow, const double *dmask, const double *pmask,
                       double *g, Py_ssize_t m, double inv_tau, double npos) nogil


def contrastive_loss_grad(sim, partner, labels, int mode, double tau):
    cdef const double[:, ::1] s = np.ascontiguousarray(sim, dtype=np.float64)
    cdef Py_ssize_t m = s.shape[0]
    cdef const cnp.int64_t[::1] part
    cdef const cnp.int64_t[::1] lab
    if mode == C_SELF:
        part = np.ascontiguousarray(partner, dtype=np.int64)
        lab = np.zeros(m, dtype=np.int64)
    else:
        part = np.zeros(m, dtype=np.int64)
        lab = np.ascontiguousarray(labels, dtype=np.int64)
    grad_arr = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] g = grad_arr
    cdef double[::1] dmask = np.empty(m, dtype=np.float64)
    cdef double[::1] pmask = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i, k
    cdef double npos, total = 0.0, inv_tau = 1.0 / tau, scale = 1.0 / (tau * m)
    cdef bint same
    for i in range(m):
        npos = 0.0
        for k in range(m):
            if mode == C_SELF:
                same = k == part[i]
            else:
                same = lab[k] == lab[i]
            pmask[k] = 1.0 if same and k != i else 0.0
            dmask[k] = 0.0 if k == i or (mode == C_SUP_MOD and same) else 1.0
            npos += pmask[k]
        total += botsscl_row(&s[i, 0], &dmask[0], &pmask[0], &g[i, 0], m, inv_tau, npos)
        for k in range(m):
            g[i, k] *= scale
    return total / m, grad_arr


def grid_candidates(base, cols, values, offsets, radices, Py_ssize_t start, Py_ssize_t count):
    cdef const double[::1] bv = np.ascontiguousarray(base, dtype=np.float64)
    cdef const cnp.int64_t[::1] cv = np.ascontiguousarray(cols, dtype=np.int64)
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef const cnp.int64_t[::1] ofs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const cnp.int64_t[::1] rad = np.ascontiguousarray(radices, dtype=np.int64)
    cdef Py_ssize_t w = bv.shape[0], ng = cv.shape[0]
    out_arr = np.empty((count, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, j, g
    cdef cnp.int64_t idx, digit
    for r in range(count):
        for j in range(w):
            out[r, j] = bv[j]
        idx = start + r
        for g in range(ng - 1, -1, -1):
            digit = idx % rad[g]
            idx = idx // rad[g]
            out[r, cv[g]] = vv[ofs[g] + digit]
    return out_arr
