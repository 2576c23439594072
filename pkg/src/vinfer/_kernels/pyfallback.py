"""Pure Python kernels, bit-identical to the compiled extension.

Accumulation runs in IEEE double over ascending parent index as a sequence of
multiply-then-add steps (no FMA), bias last, one float32 rounding per node.
Sigmoid goes through ``math.exp`` so both backends call the same libm.
"""

import math

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2


def _check_f32(arr, name):
    if arr.dtype != np.float32:
        raise TypeError(f"{name} must be float32")


def forward_layer(prev, weights, bias, act):
    """One dense layer: float32 parents in, float32 activations out."""
    _check_f32(prev, "prev")
    _check_f32(weights, "weights")
    n_in, n_out = weights.shape
    if prev.shape[0] != n_in:
        raise ValueError("parent vector length does not match weight rows")

    prev64 = prev.astype(np.float64)
    w64 = weights.astype(np.float64)
    acc = np.zeros(n_out, dtype=np.float64)
    for i in range(n_in):
        acc += prev64[i] * w64[i]
    if bias is not None:
        _check_f32(bias, "bias")
        if bias.shape[0] != n_out:
            raise ValueError("bias length does not match weight columns")
        acc += bias.astype(np.float64)

    if act == ACT_RELU:
        out = np.where(acc > 0.0, acc, 0.0)
    elif act == ACT_SIGMOID:
        out = np.array([1.0 / (1.0 + math.exp(-z)) for z in acc.tolist()])
    else:
        out = acc
    return out.astype(np.float32)


def recompute_node(parents, wcol, bias, act):
    """Recompute one node's activation from its parents; returns float32."""
    _check_f32(parents, "parents")
    _check_f32(wcol, "wcol")
    if parents.shape[0] != wcol.shape[0]:
        raise ValueError("parent vector length does not match weight column")
    acc = 0.0
    pv = parents.astype(np.float64).tolist()
    wv = wcol.astype(np.float64).tolist()
    for p, w in zip(pv, wv):
        acc = acc + p * w
    if bias is not None:
        acc = acc + float(bias)
    if act == ACT_RELU:
        acc = acc if acc > 0.0 else 0.0
    elif act == ACT_SIGMOID:
        acc = 1.0 / (1.0 + math.exp(-acc))
    return np.float32(acc)
