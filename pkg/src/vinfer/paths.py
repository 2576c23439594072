"""Idealized testers: challenge-to-path derivation, the output-to-input path
test, and the single-node strawman it replaces.

Paths are derived deterministically from a 32-byte challenge via a counter
hash stream with rejection sampling (no modulo bias), so prover and verifier
reconstruct the same paths. When several paths are requested their starting
output nodes are stratified: a single uniform base index is drawn and path p
starts at output node (base + p) mod width, so num_paths == width covers
every output node while a single path stays uniform.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, VinferError
from .models import node_residual

CHALLENGE_BYTES = 32
DEFAULT_TOL = 1e-4


@dataclass(frozen=True)
class Challenge:
    rho: bytes

    def __post_init__(self):
        if len(self.rho) != CHALLENGE_BYTES:
            raise VinferError(f"challenge must be {CHALLENGE_BYTES} bytes")


def as_rho(rho):
    rho = rho.rho if isinstance(rho, Challenge) else bytes(rho)
    if len(rho) != CHALLENGE_BYTES:
        raise VinferError(f"challenge must be {CHALLENGE_BYTES} bytes")
    return rho


@dataclass(frozen=True)
class Path:
    """One node index per layer, ordered output -> input."""

    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))

    @property
    def output_node(self):
        return self.nodes[0]

    def node_in_layer(self, layer, num_layers):
        """Index of the path's node within `layer` (0 = input layer)."""
        return self.nodes[num_layers - layer]


class ChallengeStream:
    """Uniform byte source: SHA-256(rho || counter || block), both LE u64."""

    def __init__(self, rho, counter):
        self._prefix = as_rho(rho) + struct.pack("<Q", counter)
        self._block = 0
        self._buf = b""

    def _refill(self):
        self._buf += hashlib.sha256(self._prefix + struct.pack("<Q", self._block)).digest()
        self._block += 1

    def take(self, n):
        while len(self._buf) < n:
            self._refill()
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randint_below(self, n):
        """Uniform integer in [0, n) by rejection sampling on u32 draws."""
        if n < 1:
            raise VinferError("empty range")
        if n == 1:
            return 0
        limit = (1 << 32) - ((1 << 32) % n)
        while True:
            (x,) = struct.unpack("<I", self.take(4))
            if x < limit:
                return x % n


# Stream counters: 0 draws the shared output-node base; path p uses 1 + p.
_BASE_COUNTER = 0


def derive_paths(arch, rho, num_paths):
    """Derive `num_paths` output-to-input paths from the challenge."""
    if num_paths < 1:
        raise VinferError("num_paths must be >= 1")
    rho = as_rho(rho)
    width_out = arch.output_width
    base = ChallengeStream(rho, _BASE_COUNTER).randint_below(width_out)
    paths = []
    for p in range(num_paths):
        stream = ChallengeStream(rho, 1 + p)
        nodes = [(base + p) % width_out]
        for layer in range(arch.num_layers - 1, -1, -1):
            nodes.append(stream.randint_below(arch.layer_widths[layer]))
        paths.append(Path(tuple(nodes)))
    return paths


@dataclass
class TestReport:
    accepted: bool
    residuals: list = field(default_factory=list)  # (layer, idx, residual)
    failing_node: tuple = None
    paths_checked: int = 0
    reason: str = None


class ModelOracle:
    """Point access to the committed model's weights."""

    def __init__(self, model):
        self._model = model
        self.arch = model.arch

    def incoming(self, layer, idx):
        return self._model.incoming(layer, idx)

    def activation_kind(self, layer):
        return self._model.arch.activations[layer - 1]


class TraceOracle:
    """Point access to the claimed trace's activations."""

    def __init__(self, trace, arch):
        if not trace.matches(arch):
            raise ShapeMismatch("trace does not fit the architecture")
        self._trace = trace

    def activation(self, layer, idx):
        return self._trace.layer(layer)[idx]

    def layer_values(self, layer):
        return self._trace.layer(layer)


def _check_path(model_oracle, trace_oracle, qry, path, tol, report):
    arch = model_oracle.arch
    L = arch.num_layers
    for layer in range(L, 0, -1):
        idx = path.node_in_layer(layer, L)
        try:
            claimed = trace_oracle.activation(layer, idx)
            parents = trace_oracle.layer_values(layer - 1)
        except LookupError:
            report.accepted = False
            report.reason = "missing-value"
            report.failing_node = (layer, idx)
            return False
        wcol, bias = model_oracle.incoming(layer, idx)
        residual, _ = node_residual(
            parents, wcol, bias, model_oracle.activation_kind(layer), claimed
        )
        report.residuals.append((layer, idx, residual))
        if residual > tol:
            report.accepted = False
            report.reason = "path-inconsistent"
            report.failing_node = (layer, idx)
            return False
    # Layer 0 is an immutable anchor: the sampled input node must match qry.
    idx = path.node_in_layer(0, L)
    try:
        claimed = trace_oracle.activation(0, idx)
    except LookupError:
        report.accepted = False
        report.reason = "missing-value"
        report.failing_node = (0, idx)
        return False
    residual = abs(float(np.float32(claimed)) - float(np.float32(qry[idx])))
    report.residuals.append((0, idx, residual))
    if residual > tol:
        report.accepted = False
        report.reason = "input-mismatch"
        report.failing_node = (0, idx)
        return False
    return True


def rand_path_test(model_oracle, trace_oracle, qry, rho, num_paths=1, tol=DEFAULT_TOL):
    """Sample output-to-input paths from rho and locally check every node."""
    arch = model_oracle.arch
    if len(qry) != arch.input_width:
        raise ShapeMismatch("query length does not match the architecture", layer=0)
    report = TestReport(accepted=True)
    for path in derive_paths(arch, rho, num_paths):
        report.paths_checked += 1
        if not _check_path(model_oracle, trace_oracle, qry, path, tol, report):
            return report
    return report


def strawman_test(model_oracle, trace_oracle, rho, tol=DEFAULT_TOL):
    """Single uniformly random non-input node, locally checked."""
    arch = model_oracle.arch
    stream = ChallengeStream(rho, _BASE_COUNTER)
    non_input = arch.node_count - arch.input_width
    flat = stream.randint_below(non_input) + arch.input_width
    layer, idx = arch.node_of_index(flat)
    report = TestReport(accepted=True, paths_checked=1)
    try:
        claimed = trace_oracle.activation(layer, idx)
        parents = trace_oracle.layer_values(layer - 1)
    except LookupError:
        return TestReport(False, [], (layer, idx), 1, "missing-value")
    wcol, bias = model_oracle.incoming(layer, idx)
    residual, _ = node_residual(
        parents, wcol, bias, model_oracle.activation_kind(layer), claimed
    )
    report.residuals.append((layer, idx, residual))
    if residual > tol:
        report.accepted = False
        report.reason = "path-inconsistent"
        report.failing_node = (layer, idx)
    return report
