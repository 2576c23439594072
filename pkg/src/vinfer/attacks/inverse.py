"""Inverse-transform attack: back-substitute from the desired output through
layer-by-layer matrix inverses, undoing activations where possible.

Sigmoid inverts through a clamped logit; ReLU is non-invertible (the forward
pass destroyed negative pre-activations), so observed values pass through
unchanged and the attack inherits that information loss. The inversion runs
in the paper's column convention: the solved system is W_col a_prev = z with
W_col the (out x in) orientation of the stored weights.
"""

import numpy as np

from ..errors import VinferError
from ..models import ActivationKind, Trace
from ..separation import separation_by_layer
from .linalg import pinv_normal_equations, pinv_regularized, pinv_via_svd
from .types import AttackResult, layer_stats

SIGMOID_CLAMP = 1e-7
REG_LAMBDA = 1e-4

_METHOD_NAMES = {
    "pinv": "inverse-pinv",
    "svd": "inverse-svd",
    "regularized": "inverse-regularized",
}


def _invert_activation(a, kind):
    if kind == ActivationKind.SIGMOID:
        clamped = np.clip(a, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
        return np.log(clamped / (1.0 - clamped))
    # ReLU and identity: pass the observed values through.
    return np.asarray(a, dtype=np.float64)


def _inverse_matrix(w_col, method, layer):
    try:
        if method == "pinv":
            return pinv_normal_equations(w_col)
        if method == "svd":
            return pinv_via_svd(w_col)
        if method == "regularized":
            return pinv_regularized(w_col, REG_LAMBDA)
    except VinferError as e:
        raise VinferError(f"layer {layer}: {e}") from e
    raise VinferError(f"unknown inversion method {method!r}")


def inverse_transform_attack(model, desired_output, method, ref_trace):
    """Reconstruct a full trace that maps to `desired_output`, reporting the
    per-layer separations of the forgery against the reference trace."""
    arch = model.arch
    if method in _METHOD_NAMES:
        method_name = _METHOD_NAMES[method]
    elif method in _METHOD_NAMES.values():
        method_name = method
        method = {v: k for k, v in _METHOD_NAMES.items()}[method]
    else:
        raise VinferError(f"unknown inversion method {method!r}")

    target = np.asarray(desired_output, dtype=np.float64).reshape(-1)
    if target.shape[0] != arch.output_width:
        raise VinferError("desired output does not match the output width")

    layers = [target]
    current = target
    for l in range(arch.num_layers, 0, -1):
        z = _invert_activation(current, arch.activations[l - 1])
        if arch.has_bias:
            z = z - model.biases[l - 1].astype(np.float64)
        w_col = model.weights[l - 1].astype(np.float64).T  # (d_l, d_{l-1})
        inv = _inverse_matrix(w_col, method, l)
        current = inv @ z
        layers.append(current)
    layers.reverse()

    forged = Trace(
        np.concatenate([a.astype(np.float32) for a in layers]), arch.layer_offsets()
    )
    seps = separation_by_layer(model, ref_trace, forged)
    return AttackResult(
        method=method_name,
        input_id=0,
        round_id=0,
        converged=True,
        iterations=1,
        final_loss=0.0,
        per_layer=[layer_stats(s) for s in seps],
        forged_trace=forged,
    )


def run_inverse_attack(model, queries, method):
    """Table-style driver: invert the model's own logits for every query."""
    from ..models import eval_trace

    results = []
    for i, q in enumerate(queries):
        ref = eval_trace(model, q)
        logits = ref.layer(model.arch.num_layers)
        res = inverse_transform_attack(model, logits, method, ref)
        res.input_id = i
        results.append(res)
    return results
