"""Merkle vector commitments over byte-string leaves.

Leaf hash is H(0x00 || index as LE u64 || payload), internal nodes
H(0x01 || left || right); the domain-separation byte and the index bound
into the leaf give position binding. Vectors are padded to a power of two
with indexed empty-payload leaves, which avoids duplicate-last-leaf
malleability. Also provides the model commitment (one leaf per node's
incoming-weight vector, plus a bias-row leaf per layer) and the row-wise
hybrid commitment used for large tensor streams.
"""

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, VinferError

OPENING_MAGIC = b"VINF-OPN"


@dataclass(frozen=True)
class VcParams:
    max_len: int = 1 << 32
    hash_id: str = "sha256"

    def __post_init__(self):
        if self.max_len < 1:
            raise VinferError("max_len must be >= 1")
        if self.hash_id != "sha256":
            raise VinferError("only sha256 is supported")


@dataclass(frozen=True)
class Commitment:
    root: bytes
    length: int

    def __post_init__(self):
        if len(self.root) != 32:
            raise VinferError("root must be 32 bytes")


@dataclass(frozen=True)
class OpeningProof:
    index: int
    value: bytes
    siblings: tuple

    def __post_init__(self):
        object.__setattr__(self, "siblings", tuple(self.siblings))


def _leaf_hash(index, payload):
    return hashlib.sha256(b"\x00" + struct.pack("<Q", index) + payload).digest()


def _node_hash(left, right):
    return hashlib.sha256(b"\x01" + left + right).digest()


def _padded_len(n):
    p = 1
    while p < n:
        p <<= 1
    return p


def tree_depth(length):
    """Sibling count of any opening for a committed vector of this length."""
    return _padded_len(length).bit_length() - 1


class MerkleTree:
    """Built once by the committer; serves the root and openings.

    Leaf hashing may be spread over threads (order-independent); assembly is
    sequential and deterministic.
    """

    def __init__(self, leaves, threads=1):
        if not leaves:
            raise VinferError("cannot commit to an empty vector")
        self.length = len(leaves)
        padded = _padded_len(self.length)

        if threads > 1 and self.length > 64:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunk = max(64, self.length // (threads * 8))
                parts = pool.map(
                    lambda se: [_leaf_hash(i, leaves[i]) for i in range(*se)],
                    [(s, min(s + chunk, self.length)) for s in range(0, self.length, chunk)],
                )
                hashes = [h for part in parts for h in part]
        else:
            hashes = [_leaf_hash(i, leaves[i]) for i in range(self.length)]
        hashes.extend(_leaf_hash(i, b"") for i in range(self.length, padded))

        levels = [hashes]
        while len(levels[-1]) > 1:
            lower = levels[-1]
            levels.append(
                [_node_hash(lower[i], lower[i + 1]) for i in range(0, len(lower), 2)]
            )
        self._levels = levels

    @property
    def root(self):
        return self._levels[-1][0]

    def commitment(self):
        return Commitment(self.root, self.length)

    def open(self, index, value):
        if not 0 <= index < self.length:
            raise VinferError(f"index {index} out of range for length {self.length}")
        siblings = []
        pos = index
        for level in self._levels[:-1]:
            siblings.append(level[pos ^ 1])
            pos >>= 1
        return OpeningProof(index, bytes(value), tuple(siblings))


def commit_vec(params, values, threads=1):
    """Commit to a vector of byte-encoded leaves."""
    if len(values) > params.max_len:
        raise VinferError(f"vector length {len(values)} exceeds max_len {params.max_len}")
    return MerkleTree(values, threads=threads).commitment()


def open_at(params, values, index):
    """One-shot opening (rebuilds the tree; provers should keep a MerkleTree)."""
    if len(values) > params.max_len:
        raise VinferError(f"vector length {len(values)} exceeds max_len {params.max_len}")
    return MerkleTree(values).open(index, values[index])


def verify_opening(params, commitment, index, value, proof):
    """Check that `value` sits at `index` under `commitment`."""
    if not 0 <= index < commitment.length:
        return False
    if proof.index != index or proof.value != value:
        return False
    if len(proof.siblings) != tree_depth(commitment.length):
        return False
    node = _leaf_hash(index, value)
    pos = index
    for sib in proof.siblings:
        if len(sib) != 32:
            return False
        node = _node_hash(sib, node) if pos & 1 else _node_hash(node, sib)
        pos >>= 1
    return node == commitment.root


# -- wire format ------------------------------------------------------------


def serialize_opening(proof):
    head = struct.pack("<QI", proof.index, len(proof.value))
    tail = struct.pack("<H", len(proof.siblings))
    return OPENING_MAGIC + head + proof.value + tail + b"".join(proof.siblings)


def deserialize_opening(data):
    if data[:8] != OPENING_MAGIC:
        raise ParseError("not an opening proof (bad magic)", offset=0)
    if len(data) < 20:
        raise ParseError("truncated opening header", offset=len(data))
    index, vlen = struct.unpack("<QI", data[8:20])
    end = 20 + vlen
    if len(data) < end + 2:
        raise ParseError("truncated opening value", offset=min(end, len(data)))
    value = data[20:end]
    (n_sib,) = struct.unpack("<H", data[end : end + 2])
    sib_bytes = data[end + 2 :]
    if len(sib_bytes) != 32 * n_sib:
        raise ParseError("bad sibling section length", offset=end + 2)
    siblings = tuple(sib_bytes[i * 32 : (i + 1) * 32] for i in range(n_sib))
    return OpeningProof(index, value, siblings)


# -- model commitment -------------------------------------------------------


def f32_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def model_leaves(model):
    """Leaf payloads: per layer, one incoming-weight row per node, then the
    bias row; canonical layer-major order."""
    leaves = []
    arch = model.arch
    for l in range(1, arch.num_layers + 1):
        w = model.weights[l - 1]
        for j in range(arch.layer_widths[l]):
            leaves.append(f32_bytes(w[:, j]))
        if arch.has_bias:
            leaves.append(f32_bytes(model.biases[l - 1]))
    return leaves


def model_leaf_count(arch):
    per_layer_extra = 1 if arch.has_bias else 0
    return sum(arch.layer_widths[l] + per_layer_extra for l in range(1, arch.num_layers + 1))


def model_leaf_index(arch, layer, row):
    """Leaf index of (layer, row); row == width(layer) addresses the bias row."""
    if not 1 <= layer <= arch.num_layers:
        raise VinferError(f"layer {layer} out of range")
    width = arch.layer_widths[layer]
    max_row = width if arch.has_bias else width - 1
    if not 0 <= row <= max_row:
        raise VinferError(f"row {row} out of range for layer {layer}")
    base = 0
    extra = 1 if arch.has_bias else 0
    for l in range(1, layer):
        base += arch.layer_widths[l] + extra
    return base + row


def commit_to_model(params, model, threads=1):
    return commit_vec(params, model_leaves(model), threads=threads)


# -- trace commitments ------------------------------------------------------


def trace_leaves(trace):
    """Flat node-per-leaf layout: one 4-byte float32 payload per node."""
    return [f32_bytes(trace.values[i : i + 1]) for i in range(len(trace.values))]


def hybrid_leaves(tensors, kinds):
    """Row leaves for the hybrid commitment: (leaf payloads, row index map)."""
    if len(tensors) == 0:
        raise VinferError("tensor list must be nonempty")
    if len(kinds) != len(tensors):
        raise VinferError("need one kind per tensor")
    leaves = []
    index_map = []
    for layer, (tensor, kind) in enumerate(zip(tensors, kinds)):
        t = np.asarray(tensor, dtype=np.float32)
        if t.size == 0:
            raise VinferError(f"layer {layer}: empty tensor")
        if t.ndim == 1:
            t = t.reshape(1, -1)
        if kind not in ("matmul", "elementwise"):
            raise VinferError(f"layer {layer}: unknown kind {kind!r}")
        for r in range(t.shape[0]):
            leaves.append(f32_bytes(t[r]))
            index_map.append((layer, kind, r))
    return leaves, index_map


def commit_trace_hybrid(tensors, kinds, params=None, threads=1):
    """Row-wise hybrid commitment over a stream of per-layer matrices.

    Each entry of `tensors` is the matrix the policy selects for that layer
    (the input activation matrix for matmul layers, the output tensor for
    element-wise layers); `kinds` records which. Every row becomes one leaf,
    layer-major then row-major. Returns (Commitment, row index map) where the
    map lists (layer, kind, row) per leaf.
    """
    if params is None:
        params = VcParams()
    leaves, index_map = hybrid_leaves(tensors, kinds)
    return commit_vec(params, leaves, threads=threads), index_map
