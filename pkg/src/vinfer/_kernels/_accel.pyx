# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-order dense-layer kernels.

The accumulation order is part of the verification contract: each node sums
its parent contributions in ascending parent index, in IEEE double, with the
bias added last, and the activation result is rounded to float32 once. The
pure Python fallback (`pyfallback`) reproduces these bits exactly; keep the
two in lockstep when editing.
"""

from libc.math cimport exp

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2


cdef inline double _activate(double z, int kind) noexcept nogil:
    if kind == 1:
        return z if z > 0.0 else 0.0
    if kind == 2:
        return 1.0 / (1.0 + exp(-z))
    return z


def forward_layer(const float[::1] prev, const float[:, ::1] weights, bias, int act):
    """One dense layer: float32 parents in, float32 activations out."""
    cdef Py_ssize_t n_in = weights.shape[0]
    cdef Py_ssize_t n_out = weights.shape[1]
    if prev.shape[0] != n_in:
        raise ValueError("parent vector length does not match weight rows")

    out = np.empty(n_out, dtype=np.float32)
    acc_arr = np.zeros(n_out, dtype=np.float64)
    cdef float[::1] out_mv = out
    cdef double[::1] acc = acc_arr
    cdef const float[::1] bias_mv
    cdef Py_ssize_t i, j
    cdef double a

    with nogil:
        for i in range(n_in):
            a = <double> prev[i]
            for j in range(n_out):
                acc[j] = acc[j] + a * (<double> weights[i, j])
    if bias is not None:
        bias_mv = bias
        if bias_mv.shape[0] != n_out:
            raise ValueError("bias length does not match weight columns")
        for j in range(n_out):
            acc[j] = acc[j] + (<double> bias_mv[j])
    for j in range(n_out):
        out_mv[j] = <float> _activate(acc[j], act)
    return out


def recompute_node(const float[::1] parents, const float[::1] wcol, bias, int act):
    """Recompute one node's activation from its parents; returns float32."""
    cdef Py_ssize_t n_in = wcol.shape[0]
    if parents.shape[0] != n_in:
        raise ValueError("parent vector length does not match weight column")
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n_in):
        acc = acc + (<double> parents[i]) * (<double> wcol[i])
    if bias is not None:
        acc = acc + (<double> bias)
    return np.float32(_activate(acc, act))
