"""Minimal reverse-mode gradients through dense nets, batched in float64.

Only what the attack suite needs: forward with cached pre-activations and the
gradient of MSE(output, target) + l2 * ||injected||^2 with respect to an
injected activation matrix (layer 0 = the query itself). Verified against
central finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from ..models import ActivationKind


def _cast64(model):
    ws = [w.astype(np.float64) for w in model.weights]
    bs = (
        [b.astype(np.float64) for b in model.biases]
        if model.arch.has_bias
        else [None] * model.arch.num_layers
    )
    return ws, bs


def _act(z, kind):
    if kind == ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind == ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_grad(z, a, kind):
    if kind == ActivationKind.RELU:
        return (z > 0.0).astype(np.float64)
    if kind == ActivationKind.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def forward_from(model, values, inject_layer=0):
    """Forward pass starting with `values` as layer `inject_layer` activations.

    values: (batch, d_inject) float64. Returns (activations, preacts) lists
    indexed from inject_layer upward; the final entry is the logits.
    """
    arch = model.arch
    ws, bs = _cast64(model)
    acts = [np.atleast_2d(np.asarray(values, dtype=np.float64))]
    preacts = [None]
    for l in range(inject_layer + 1, arch.num_layers + 1):
        z = acts[-1] @ ws[l - 1]
        if bs[l - 1] is not None:
            z = z + bs[l - 1]
        preacts.append(z)
        acts.append(_act(z, arch.activations[l - 1]))
    return acts, preacts


def loss_and_grad(model, values, targets, inject_layer=0, l2_lambda=0.0, mask=None):
    """Per-sample loss and gradient w.r.t. the injected activations.

    loss_i = mean((logits_i - target_i)^2) + l2_lambda * ||values_i||^2
    """
    arch = model.arch
    ws, _ = _cast64(model)
    V = np.atleast_2d(np.asarray(values, dtype=np.float64))
    T = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    acts, preacts = forward_from(model, V, inject_layer)
    out = acts[-1]
    diff = out - T
    d_out = out.shape[1]
    loss = np.mean(diff * diff, axis=1)
    if l2_lambda:
        loss = loss + l2_lambda * np.sum(V * V, axis=1)

    g = (2.0 / d_out) * diff
    for pos in range(len(acts) - 1, 0, -1):
        layer = inject_layer + pos
        gz = g * _act_grad(preacts[pos], acts[pos], arch.activations[layer - 1])
        g = gz @ ws[layer - 1].T
    if l2_lambda:
        g = g + 2.0 * l2_lambda * V
    if mask is not None:
        g = g * np.asarray(mask, dtype=np.float64)
    return loss, g


@dataclass
class Adam:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self._m = None
        self._v = None
        self._t = 0

    def step(self, values, grad):
        if self._m is None:
            self._m = np.zeros_like(values)
            self._v = np.zeros_like(values)
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad * grad
        mhat = self._m / (1 - self.beta1**self._t)
        vhat = self._v / (1 - self.beta2**self._t)
        return values - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class PlainGd:
    lr: float = 0.005

    def step(self, values, grad):
        return values - self.lr * grad


def make_optimizer(name, lr):
    if name == "adam":
        return Adam(lr=lr)
    if name == "plain-gd":
        return PlainGd(lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
