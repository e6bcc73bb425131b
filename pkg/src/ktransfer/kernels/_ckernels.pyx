# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernel: mini-batch Adam over CSR logistic regression.

Mirrors kernels/pyref.py exactly (same batch boundaries, same update order);
see that module for the contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def adam_epoch(
    cnp.float64_t[::1] data,
    cnp.int32_t[::1] indices,
    cnp.int64_t[::1] indptr,
    cnp.float64_t[::1] y,
    cnp.int64_t[::1] order,
    cnp.float64_t[::1] w,
    cnp.float64_t[::1] m,
    cnp.float64_t[::1] v,
    long step,
    double lr,
    double beta1,
    double beta2,
    double eps,
    double lam,
    cnp.float64_t[::1] center,
    long batch_size,
):
    """One shuffled epoch of mini-batch Adam on the logistic loss (in place)."""
    cdef long n = y.shape[0]
    cdef long d = w.shape[0]
    cdef cnp.float64_t[::1] g = np.zeros(d, dtype=np.float64)

    cdef long start, stop, b, r, p, j
    cdef double z, prob, resid, ez, lam_eff, gj, bc1, bc2

    start = 0
    while start < n:
        stop = start + batch_size
        if stop > n:
            stop = n

        for b in range(start, stop):
            r = order[b]
            z = 0.0
            for p in range(indptr[r], indptr[r + 1]):
                z += data[p] * w[indices[p]]
            if z >= 0.0:
                prob = 1.0 / (1.0 + exp(-z))
            else:
                ez = exp(z)
                prob = ez / (1.0 + ez)
            resid = prob - y[r]
            for p in range(indptr[r], indptr[r + 1]):
                g[indices[p]] += resid * data[p]

        lam_eff = lam * ((stop - start) / <double> n)
        step += 1
        bc1 = 1.0 - beta1 ** step
        bc2 = 1.0 - beta2 ** step
        for j in range(d):
            gj = g[j] + lam_eff * (w[j] - center[j])
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj
            w[j] -= lr * (m[j] / bc1) / (sqrt(v[j] / bc2) + eps)
            g[j] = 0.0

        start = stop

    return step
