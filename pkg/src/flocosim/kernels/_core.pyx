# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled MLP kernel: fused forward and backward for the two-layer net.

Same contract as kernels._python; selected at import by flocosim.kernels.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def mlp_forward(double[:, ::1] w1, double[::1] b1,
                double[:, ::1] w2, double[::1] b2,
                double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t h = w1.shape[0], l = w2.shape[0]
    cdef Py_ssize_t i, j, c, k
    cdef double acc, mx, s

    probs_arr = np.empty((n, l), dtype=np.float64)
    hidden_arr = np.empty(h, dtype=np.float64)
    cdef double[:, ::1] probs = probs_arr
    cdef double[::1] hidden = hidden_arr

    for i in range(n):
        for j in range(h):
            acc = b1[j]
            for k in range(d):
                acc += w1[j, k] * x[i, k]
            hidden[j] = acc if acc > 0.0 else 0.0
        mx = -1e300
        for c in range(l):
            acc = b2[c]
            for j in range(h):
                acc += w2[c, j] * hidden[j]
            probs[i, c] = acc
            if acc > mx:
                mx = acc
        s = 0.0
        for c in range(l):
            probs[i, c] = exp(probs[i, c] - mx)
            s += probs[i, c]
        for c in range(l):
            probs[i, c] /= s
    return probs_arr


def mlp_loss_and_grads(double[:, ::1] w1, double[::1] b1,
                       double[:, ::1] w2, double[::1] b2,
                       double[:, ::1] x, cnp.int64_t[::1] y):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t h = w1.shape[0], l = w2.shape[0]
    cdef Py_ssize_t i, j, c, k
    cdef double acc, mx, s, loss = 0.0, dl, dh

    gw1_arr = np.zeros((h, d), dtype=np.float64)
    gb1_arr = np.zeros(h, dtype=np.float64)
    gw2_arr = np.zeros((l, h), dtype=np.float64)
    gb2_arr = np.zeros(l, dtype=np.float64)
    pre_arr = np.empty(h, dtype=np.float64)
    hidden_arr = np.empty(h, dtype=np.float64)
    p_arr = np.empty(l, dtype=np.float64)
    cdef double[:, ::1] gw1 = gw1_arr
    cdef double[::1] gb1 = gb1_arr
    cdef double[:, ::1] gw2 = gw2_arr
    cdef double[::1] gb2 = gb2_arr
    cdef double[::1] pre = pre_arr
    cdef double[::1] hidden = hidden_arr
    cdef double[::1] p = p_arr
    cdef double inv_n = 1.0 / n

    for i in range(n):
        for j in range(h):
            acc = b1[j]
            for k in range(d):
                acc += w1[j, k] * x[i, k]
            pre[j] = acc
            hidden[j] = acc if acc > 0.0 else 0.0
        mx = -1e300
        for c in range(l):
            acc = b2[c]
            for j in range(h):
                acc += w2[c, j] * hidden[j]
            p[c] = acc
            if acc > mx:
                mx = acc
        s = 0.0
        for c in range(l):
            p[c] = exp(p[c] - mx)
            s += p[c]
        loss += (log(s) - log(p[y[i]])) * inv_n
        for c in range(l):
            p[c] /= s

        for c in range(l):
            dl = p[c]
            if c == y[i]:
                dl -= 1.0
            dl *= inv_n
            gb2[c] += dl
            for j in range(h):
                gw2[c, j] += dl * hidden[j]
        for j in range(h):
            if pre[j] <= 0.0:
                continue
            dh = 0.0
            for c in range(l):
                dl = p[c]
                if c == y[i]:
                    dl -= 1.0
                dh += dl * inv_n * w2[c, j]
            gb1[j] += dh
            for k in range(d):
                gw1[j, k] += dh * x[i, k]

    return loss, gw1_arr, gb1_arr, gw2_arr, gb2_arr
