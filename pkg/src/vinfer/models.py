"""Dense feed-forward models, trace evaluation, and the per-node local check.

Layers are numbered 0 (input) through L (output); every node in layer l >= 1
has all of layer l-1 as parents, plus a virtual bias parent with constant
activation 1 that is never part of path sampling. Committed values are
float32; accumulation happens in float64 with a fixed ascending-parent order
so strict verification can compare bit-for-bit (see vinfer._kernels).
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeMismatch


class ActivationKind(enum.IntEnum):
    IDENTITY = _kernels.ACT_IDENTITY
    RELU = _kernels.ACT_RELU
    SIGMOID = _kernels.ACT_SIGMOID


class OutFn(enum.IntEnum):
    IDENTITY = 0
    SOFTMAX = 1


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModelArchitecture:
    """Widths d_0..d_L, per-layer activation, output transform, bias flag."""

    layer_widths: tuple
    activations: tuple
    out_fn: OutFn = OutFn.IDENTITY
    has_bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(
            self, "activations", tuple(ActivationKind(a) for a in self.activations)
        )
        if len(self.layer_widths) < 2:
            raise ShapeMismatch("need at least an input and an output layer")
        if any(w < 1 for w in self.layer_widths):
            raise ShapeMismatch("layer widths must be positive")
        if len(self.activations) != self.num_layers:
            raise ShapeMismatch(
                f"expected {self.num_layers} activations, got {len(self.activations)}"
            )

    @property
    def num_layers(self):
        """L: number of weighted layers."""
        return len(self.layer_widths) - 1

    @property
    def input_width(self):
        return self.layer_widths[0]

    @property
    def output_width(self):
        return self.layer_widths[-1]

    @property
    def node_count(self):
        return sum(self.layer_widths)

    def layer_offsets(self):
        """Start index of each layer in the flat trace (length L+2; last = total)."""
        offs = [0]
        for w in self.layer_widths:
            offs.append(offs[-1] + w)
        return tuple(offs)

    def node_index(self, layer, idx):
        """Flat trace index of node `idx` within `layer`."""
        if not 0 <= layer <= self.num_layers:
            raise ShapeMismatch(f"layer {layer} out of range", layer=layer)
        if not 0 <= idx < self.layer_widths[layer]:
            raise ShapeMismatch(f"node {idx} out of range in layer {layer}", layer=layer)
        return self.layer_offsets()[layer] + idx

    def node_of_index(self, flat):
        """Inverse of node_index."""
        offs = self.layer_offsets()
        if not 0 <= flat < offs[-1]:
            raise ShapeMismatch(f"flat node index {flat} out of range")
        for layer in range(len(self.layer_widths)):
            if flat < offs[layer + 1]:
                return layer, flat - offs[layer]
        raise AssertionError

    def output_indices(self):
        """Flat indices holding the output slice of a trace."""
        offs = self.layer_offsets()
        return tuple(range(offs[self.num_layers], offs[self.num_layers + 1]))


@dataclass(frozen=True)
class Model:
    """Architecture plus weights: W^l has shape d_{l-1} x d_l, bias row length d_l."""

    arch: ModelArchitecture
    weights: tuple
    biases: tuple = None

    def __post_init__(self):
        arch = self.arch
        if len(self.weights) != arch.num_layers:
            raise ShapeMismatch(
                f"expected {arch.num_layers} weight matrices, got {len(self.weights)}"
            )
        ws = []
        for l, w in enumerate(self.weights, start=1):
            w = _frozen(w, np.float32)
            want = (arch.layer_widths[l - 1], arch.layer_widths[l])
            if w.shape != want:
                raise ShapeMismatch(
                    f"layer {l}: weight shape {w.shape} != {want}", layer=l
                )
            if not np.isfinite(w).all():
                raise ShapeMismatch(f"layer {l}: non-finite weights", layer=l)
            ws.append(w)
        object.__setattr__(self, "weights", tuple(ws))

        if arch.has_bias:
            if self.biases is None or len(self.biases) != arch.num_layers:
                raise ShapeMismatch("architecture has bias but bias rows are missing")
            bs = []
            for l, b in enumerate(self.biases, start=1):
                b = _frozen(b, np.float32)
                if b.shape != (arch.layer_widths[l],):
                    raise ShapeMismatch(
                        f"layer {l}: bias shape {b.shape} != ({arch.layer_widths[l]},)",
                        layer=l,
                    )
                if not np.isfinite(b).all():
                    raise ShapeMismatch(f"layer {l}: non-finite bias", layer=l)
                bs.append(b)
            object.__setattr__(self, "biases", tuple(bs))
        else:
            if self.biases is not None:
                raise ShapeMismatch("architecture has no bias but bias rows are given")

    def bias_row(self, layer):
        """Bias row of weighted layer `layer` (1-based), or None."""
        return self.biases[layer - 1] if self.arch.has_bias else None

    def incoming(self, layer, idx):
        """(weight column, bias) feeding node `idx` of layer `layer` (>= 1)."""
        if layer < 1:
            raise ShapeMismatch("input nodes have no incoming weights", layer=layer)
        wcol = np.ascontiguousarray(self.weights[layer - 1][:, idx])
        b = self.biases[layer - 1][idx] if self.arch.has_bias else None
        return wcol, b


@dataclass(frozen=True)
class Trace:
    """Flat activation vector (input layer included) with layer offsets."""

    values: np.ndarray
    layer_offsets: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float32))
        object.__setattr__(self, "layer_offsets", tuple(int(o) for o in self.layer_offsets))
        offs = self.layer_offsets
        if len(offs) < 3 or offs[0] != 0 or offs[-1] != len(self.values):
            raise ShapeMismatch("layer offsets do not cover the value vector")
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise ShapeMismatch("layer offsets must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ShapeMismatch("trace contains non-finite values")

    @property
    def num_layers(self):
        return len(self.layer_offsets) - 2

    def layer(self, l):
        """Activations of layer l as a read-only float32 slice."""
        return self.values[self.layer_offsets[l] : self.layer_offsets[l + 1]]

    def matches(self, arch):
        return self.layer_offsets == arch.layer_offsets()


def as_query(vec, arch):
    """Validate and convert a query to float32 of length d_0."""
    q = np.asarray(vec, dtype=np.float32).reshape(-1)
    if q.shape[0] != arch.input_width:
        raise ShapeMismatch(
            f"query length {q.shape[0]} != input width {arch.input_width}", layer=0
        )
    if not np.isfinite(q).all():
        raise ShapeMismatch("query contains non-finite values", layer=0)
    return q


def eval_trace(model, qry):
    """Forward pass producing the full trace; deterministic and bit-reproducible."""
    arch = model.arch
    q = as_query(qry, arch)
    parts = [q]
    acts = q
    for l in range(1, arch.num_layers + 1):
        acts = _kernels.forward_layer(
            acts, model.weights[l - 1], model.bias_row(l), int(arch.activations[l - 1])
        )
        parts.append(acts)
    return Trace(np.concatenate(parts), arch.layer_offsets())


def softmax(logits):
    """Numerically shifted softmax in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def out_of(trace, arch):
    """Output vector of a trace: last-layer slice through the output transform."""
    if not trace.matches(arch):
        raise ShapeMismatch("trace does not fit the architecture")
    logits = trace.layer(arch.num_layers)
    if arch.out_fn == OutFn.SOFTMAX:
        return softmax(logits)
    return logits.astype(np.float64)


@dataclass(frozen=True)
class LocalCheckResult:
    passed: bool
    residual: float
    recomputed: np.float32 = field(default=None, compare=False)


def node_residual(parent_values, wcol, bias, act, claimed):
    """|claimed - recomputed| for one node, recomputed with the fixed-order kernel."""
    recomputed = _kernels.recompute_node(
        np.ascontiguousarray(parent_values, dtype=np.float32),
        np.ascontiguousarray(wcol, dtype=np.float32),
        bias,
        int(act),
    )
    residual = abs(float(np.float32(claimed)) - float(recomputed))
    return residual, recomputed


def local_check(model, parent_values, claimed, node, tol=1e-4):
    """Check node = (layer, idx) against its parents' claimed activations.

    tol = 0 is strict mode: the comparison is bit-exact, which is sound
    because eval_trace fixes the summation order.
    """
    layer, idx = node
    if layer < 1:
        raise ShapeMismatch("input-layer nodes are anchored to the query, not checked", layer=0)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    wcol, b = model.incoming(layer, idx)
    if len(parent_values) != wcol.shape[0]:
        raise ShapeMismatch(
            f"layer {layer}: got {len(parent_values)} parent values, expected {wcol.shape[0]}",
            layer=layer,
        )
    act = model.arch.activations[layer - 1]
    residual, recomputed = node_residual(parent_values, wcol, b, act, claimed)
    return LocalCheckResult(residual <= tol, residual, recomputed)


def gen_random_model(seed, arch):
    """Seeded model: entries uniform in [-1, 1] scaled by 1/sqrt(d_{l-1})."""
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for l in range(1, arch.num_layers + 1):
        d_prev, d = arch.layer_widths[l - 1], arch.layer_widths[l]
        scale = 1.0 / np.sqrt(d_prev)
        weights.append((rng.uniform(-1.0, 1.0, (d_prev, d)) * scale).astype(np.float32))
        if arch.has_bias:
            biases.append((rng.uniform(-1.0, 1.0, d) * scale).astype(np.float32))
    return Model(arch, tuple(weights), tuple(biases) if arch.has_bias else None)
