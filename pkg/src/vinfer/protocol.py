"""The compiled 3-round protocol: commit to the model, send output + trace
commitment, receive a challenge, open everything the path test reads, verify.

The verifier never touches model weights or trace values directly; every
value it consumes comes out of a verified opening against cm_M or the trace
commitment from the first message. The challenge is a verifier-sampled
32-byte string; there is deliberately no Fiat-Shamir mode.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeMismatch, VinferError
from .merkle import (
    Commitment,
    MerkleTree,
    OpeningProof,
    VcParams,
    deserialize_opening,
    model_leaf_index,
    model_leaves,
    serialize_opening,
    trace_leaves,
    verify_opening,
)
from .models import OutFn, as_query, eval_trace, node_residual, out_of, softmax
from .paths import CHALLENGE_BYTES, DEFAULT_TOL, as_rho, derive_paths

TRANSCRIPT_MAGIC = b"VINF-TXN"
PARTIAL_MAGIC = b"VINF-TXP"

REASON_BAD_OPENING = "bad-opening"
REASON_MISSING_OPENING = "missing-opening"
REASON_PATH = "path-inconsistent"
REASON_OUTPUT = "output-mismatch"
REASON_INPUT = "input-mismatch"


@dataclass(frozen=True)
class PublicParams:
    vc: VcParams
    num_paths: int = 1
    tol: float = DEFAULT_TOL
    challenge_bytes: int = CHALLENGE_BYTES

    def __post_init__(self):
        if self.num_paths < 1:
            raise VinferError("num_paths must be >= 1")
        if self.tol < 0:
            raise VinferError("tol must be non-negative")
        if self.challenge_bytes != CHALLENGE_BYTES:
            raise VinferError("challenge length is fixed at 32 bytes")

    def pp_hash(self):
        enc = struct.pack(
            "<QId32s", self.vc.max_len, self.num_paths, self.tol, self.vc.hash_id.encode()
        )
        return hashlib.sha256(enc).digest()


def gen_params(num_paths=1, tol=DEFAULT_TOL, strict=False, max_len=1 << 32):
    """Deterministic public parameters; strict mode pins tol to 0."""
    return PublicParams(VcParams(max_len=max_len), num_paths, 0.0 if strict else float(tol))


@dataclass(frozen=True)
class Proof1:
    claimed_output: np.ndarray
    trace_commitment: Commitment


@dataclass
class ProverState:
    pp: PublicParams
    model: "Model"
    qry: np.ndarray
    trace: "Trace"
    trace_tree: MerkleTree
    model_tree: MerkleTree


@dataclass(frozen=True)
class Proof2:
    """Openings for exactly the positions the derived paths demand, plus the
    output slice. Weight openings are keyed (layer, row) with row == width
    addressing the bias row; activation openings are keyed by flat node index."""

    weight_openings: dict
    activation_openings: dict


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str = None
    detail: str = None

    def __bool__(self):
        return self.accepted


def prove1(pp, model, qry, threads=1):
    q = as_query(qry, model.arch)
    trace = eval_trace(model, q)
    return _state_from(pp, model, q, trace, threads)


def forge_state(pp, model, qry, trace, threads=1):
    """Prover state for an adversary who knows the committed model (and so
    can open its weights honestly) but commits to an arbitrary trace."""
    q = as_query(qry, model.arch)
    if not trace.matches(model.arch):
        raise ShapeMismatch("forged trace does not fit the architecture")
    return _state_from(pp, model, q, trace, threads)


def _state_from(pp, model, q, trace, threads):
    trace_tree = MerkleTree(trace_leaves(trace), threads=threads)
    model_tree = MerkleTree(model_leaves(model), threads=threads)
    proof1 = Proof1(out_of(trace, model.arch), trace_tree.commitment())
    return proof1, ProverState(pp, model, q, trace, trace_tree, model_tree)


def demanded_positions(arch, rho, num_paths):
    """(weight keys, flat activation indices) the path test will read."""
    paths = derive_paths(arch, rho, num_paths)
    weight_keys = set()
    act_idx = set(arch.output_indices())
    offsets = arch.layer_offsets()
    L = arch.num_layers
    for path in paths:
        for layer in range(L, 0, -1):
            j = path.node_in_layer(layer, L)
            weight_keys.add((layer, j))
            if arch.has_bias:
                weight_keys.add((layer, arch.layer_widths[layer]))
            act_idx.add(arch.node_index(layer, j))
            act_idx.update(range(offsets[layer - 1], offsets[layer]))
    return weight_keys, act_idx


def prove2(state, rho):
    rho = as_rho(rho)
    arch = state.model.arch
    weight_keys, act_idx = demanded_positions(arch, rho, state.pp.num_paths)
    leaves = model_leaves(state.model)
    weight_openings = {}
    for layer, row in sorted(weight_keys):
        leaf = model_leaf_index(arch, layer, row)
        weight_openings[(layer, row)] = state.model_tree.open(leaf, leaves[leaf])
    activation_openings = {}
    for flat in sorted(act_idx):
        payload = state.trace.values[flat : flat + 1].tobytes()
        activation_openings[flat] = state.trace_tree.open(flat, payload)
    return Proof2(weight_openings, activation_openings)


def _f32(payload, what):
    if len(payload) % 4:
        raise ParseError(f"{what}: payload not float32-aligned")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32)


def verify(pp, arch, cm_M, qry, y, proof1, rho, proof2):
    """Replay the prover's path derivation against verified openings only."""
    try:
        q = as_query(qry, arch)
    except ShapeMismatch as e:
        return VerifyResult(False, REASON_INPUT, str(e))
    rho = as_rho(rho)

    if proof1.trace_commitment.length != arch.node_count:
        return VerifyResult(
            False, REASON_BAD_OPENING, "trace commitment length does not match architecture"
        )

    # 1. every opening must verify against its commitment
    for (layer, row), proof in proof2.weight_openings.items():
        try:
            leaf = model_leaf_index(arch, layer, row)
        except VinferError as e:
            return VerifyResult(False, REASON_BAD_OPENING, str(e))
        if not verify_opening(pp.vc, cm_M, leaf, proof.value, proof):
            return VerifyResult(False, REASON_BAD_OPENING, f"weight opening ({layer},{row})")
    for flat, proof in proof2.activation_openings.items():
        if not verify_opening(pp.vc, proof1.trace_commitment, flat, proof.value, proof):
            return VerifyResult(False, REASON_BAD_OPENING, f"activation opening {flat}")

    def activation(flat):
        proof = proof2.activation_openings.get(flat)
        if proof is None:
            raise KeyError(flat)
        return float(_f32(proof.value, f"activation {flat}")[0])

    # 2. reconstruct paths from rho and run the local checks on opened values
    weight_keys, act_idx = demanded_positions(arch, rho, pp.num_paths)
    offsets = arch.layer_offsets()
    L = arch.num_layers
    try:
        for path in derive_paths(arch, rho, pp.num_paths):
            for layer in range(L, 0, -1):
                j = path.node_in_layer(layer, L)
                wproof = proof2.weight_openings.get((layer, j))
                if wproof is None:
                    return VerifyResult(
                        False, REASON_MISSING_OPENING, f"weights ({layer},{j})"
                    )
                wcol = _f32(wproof.value, f"weights ({layer},{j})")
                if wcol.shape[0] != arch.layer_widths[layer - 1]:
                    return VerifyResult(
                        False, REASON_BAD_OPENING, f"weight row ({layer},{j}) has wrong width"
                    )
                bias = None
                if arch.has_bias:
                    bkey = (layer, arch.layer_widths[layer])
                    bproof = proof2.weight_openings.get(bkey)
                    if bproof is None:
                        return VerifyResult(
                            False, REASON_MISSING_OPENING, f"bias row {bkey}"
                        )
                    brow = _f32(bproof.value, f"bias row {bkey}")
                    if brow.shape[0] != arch.layer_widths[layer]:
                        return VerifyResult(
                            False, REASON_BAD_OPENING, f"bias row {bkey} has wrong width"
                        )
                    bias = brow[j]
                parents = np.array(
                    [activation(f) for f in range(offsets[layer - 1], offsets[layer])],
                    dtype=np.float32,
                )
                claimed = activation(arch.node_index(layer, j))
                residual, _ = node_residual(
                    parents, wcol, bias, arch.activations[layer - 1], claimed
                )
                if residual > pp.tol:
                    return VerifyResult(
                        False, REASON_PATH, f"node ({layer},{j}) residual {residual:.3e}"
                    )
            # 3. input anchor
            idx = path.node_in_layer(0, L)
            claimed = activation(arch.node_index(0, idx))
            if abs(float(np.float32(claimed)) - float(np.float32(q[idx]))) > pp.tol:
                return VerifyResult(False, REASON_INPUT, f"input node {idx}")
    except KeyError as e:
        return VerifyResult(False, REASON_MISSING_OPENING, f"activation {e.args[0]}")
    except ParseError as e:
        return VerifyResult(False, REASON_BAD_OPENING, str(e))

    # 4. the claimed output must match the opened output slice through out_fn
    try:
        logits = np.array(
            [activation(f) for f in arch.output_indices()], dtype=np.float32
        )
    except KeyError as e:
        return VerifyResult(False, REASON_MISSING_OPENING, f"activation {e.args[0]}")
    expected = softmax(logits) if arch.out_fn == OutFn.SOFTMAX else logits.astype(np.float64)
    claimed_y = np.asarray(y, dtype=np.float64).reshape(-1)
    if claimed_y.shape != expected.shape or np.any(np.abs(claimed_y - expected) > pp.tol):
        return VerifyResult(False, REASON_OUTPUT, "claimed output differs from trace output")

    return VerifyResult(True)


# -- transcript -------------------------------------------------------------


@dataclass(frozen=True)
class Transcript:
    pp_hash: bytes
    cm_model: Commitment
    qry: np.ndarray
    proof1: Proof1
    rho: bytes
    proof2: Proof2


def _sec(payload):
    return struct.pack("<Q", len(payload)) + payload


def _encode_commitment(cm):
    return cm.root + struct.pack("<Q", cm.length)


def _decode_commitment(payload, what):
    if len(payload) != 40:
        raise ParseError(f"{what}: bad commitment section length")
    return Commitment(payload[:32], struct.unpack("<Q", payload[32:])[0])


def _encode_proof2(proof2):
    parts = [struct.pack("<I", len(proof2.weight_openings))]
    for (layer, row), proof in sorted(proof2.weight_openings.items()):
        parts.append(struct.pack("<II", layer, row))
        parts.append(_sec(serialize_opening(proof)))
    parts.append(struct.pack("<I", len(proof2.activation_openings)))
    for flat, proof in sorted(proof2.activation_openings.items()):
        parts.append(struct.pack("<Q", flat))
        parts.append(_sec(serialize_opening(proof)))
    return b"".join(parts)


class _SecReader:
    def __init__(self, data, pos):
        self.data = data
        self.pos = pos

    def fixed(self, n, what):
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated while reading {what}", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def section(self, what):
        (n,) = struct.unpack("<Q", self.fixed(8, f"{what} length"))
        return self.fixed(n, what)


def _decode_proof2(payload):
    r = _SecReader(payload, 0)
    (n_w,) = struct.unpack("<I", r.fixed(4, "weight opening count"))
    weight_openings = {}
    for _ in range(n_w):
        layer, row = struct.unpack("<II", r.fixed(8, "weight key"))
        weight_openings[(layer, row)] = deserialize_opening(r.section("weight opening"))
    (n_a,) = struct.unpack("<I", r.fixed(4, "activation opening count"))
    activation_openings = {}
    for _ in range(n_a):
        (flat,) = struct.unpack("<Q", r.fixed(8, "activation key"))
        activation_openings[flat] = deserialize_opening(r.section("activation opening"))
    if r.pos != len(payload):
        raise ParseError("trailing bytes in proof2", offset=r.pos)
    return Proof2(weight_openings, activation_openings)


def _encode_body(t, partial):
    body = [
        _sec(t.pp_hash),
        _sec(_encode_commitment(t.cm_model)),
        _sec(np.ascontiguousarray(t.qry, dtype="<f4").tobytes()),
        _sec(
            np.ascontiguousarray(t.proof1.claimed_output, dtype="<f8").tobytes()
            + _encode_commitment(t.proof1.trace_commitment)
        ),
    ]
    if not partial:
        body.append(_sec(t.rho))
        body.append(_sec(_encode_proof2(t.proof2)))
    return b"".join(body)


def serialize_transcript(t, partial=False):
    return (PARTIAL_MAGIC if partial else TRANSCRIPT_MAGIC) + _encode_body(t, partial)


def deserialize_transcript(data):
    magic = data[:8]
    if magic not in (TRANSCRIPT_MAGIC, PARTIAL_MAGIC):
        raise ParseError("not a transcript file (bad magic)", offset=0)
    partial = magic == PARTIAL_MAGIC
    r = _SecReader(data, 8)
    pp_hash = r.section("pp hash")
    if len(pp_hash) != 32:
        raise ParseError("pp hash must be 32 bytes", offset=8)
    cm_model = _decode_commitment(r.section("model commitment"), "model commitment")
    qry = np.frombuffer(r.section("query"), dtype="<f4").astype(np.float32)
    p1 = r.section("proof1")
    if len(p1) < 40 or (len(p1) - 40) % 8:
        raise ParseError("bad proof1 section")
    claimed = np.frombuffer(p1[:-40], dtype="<f8").astype(np.float64)
    proof1 = Proof1(claimed, _decode_commitment(p1[-40:], "trace commitment"))
    rho, proof2 = None, None
    if not partial:
        rho = r.section("challenge")
        if len(rho) != CHALLENGE_BYTES:
            raise ParseError("challenge must be 32 bytes")
        proof2 = _decode_proof2(r.section("proof2"))
    if r.pos != len(data):
        raise ParseError("trailing bytes after transcript", offset=r.pos)
    return Transcript(pp_hash, cm_model, qry, proof1, rho, proof2)


def verify_transcript(pp, arch, transcript):
    """Deterministic replay: Verify(deserialize(serialize(t))) == Verify(t)."""
    if transcript.pp_hash != pp.pp_hash():
        return VerifyResult(False, REASON_BAD_OPENING, "transcript pp hash mismatch")
    if transcript.rho is None or transcript.proof2 is None:
        return VerifyResult(False, REASON_MISSING_OPENING, "partial transcript")
    return verify(
        pp,
        arch,
        transcript.cm_model,
        transcript.qry,
        transcript.proof1.claimed_output,
        transcript.proof1,
        transcript.rho,
        transcript.proof2,
    )
