"""Two-prover refereed bisection over chained-hash trace commitments.

Both parties commit to entries (a_k, h_k) where h_k chains over all prior
activations; agreement at an index then pins the whole value prefix, so the
referee can bisect to the first divergent node in log rounds and adjudicate
that single node against the committed model. Entries live at indices
0..n_pad (inclusive), n_pad = next power of two above the node count, so the
bisection interval is exactly a power of two and the round count is fixed.
Padding entries carry value 0.0 with the chain continued.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError, VinferError
from .merkle import MerkleTree, VcParams, model_leaf_index, model_leaves, verify_opening
from .models import eval_trace, node_residual, out_of

EMPTY_HASH = hashlib.sha256(b"").digest()


@dataclass(frozen=True)
class HashedTraceEntry:
    value: float
    prefix_hash: bytes


def encode_value(v):
    return struct.pack("<f", float(np.float32(v)))


def encode_entry(entry):
    return encode_value(entry.value) + entry.prefix_hash


def chain_next(prefix_hash, value):
    return hashlib.sha256(prefix_hash + encode_value(value)).digest()


def padded_node_count(n_real):
    p = 1
    while p < n_real:
        p <<= 1
    return p


def build_hashed_trace(trace, params=None, threads=1):
    """Chained entries for a trace plus their vector commitment.

    Returns (entries, commitment, tree); entries[k].prefix_hash covers all
    values before k, computed incrementally (equivalent binding to hashing
    the full prefix, O(n) total).
    """
    if params is None:
        params = VcParams()
    values = trace.values
    n_pad = padded_node_count(len(values))
    entries = []
    ph = EMPTY_HASH
    for k in range(n_pad + 1):
        v = float(values[k]) if k < len(values) else 0.0
        entries.append(HashedTraceEntry(v, ph))
        ph = chain_next(ph, v)
    tree = MerkleTree([encode_entry(e) for e in entries], threads=threads)
    return entries, tree.commitment(), tree


@dataclass(frozen=True)
class FinalOpening:
    """A party's answer at the adjudicated node: incoming weights against
    cm_M and parent activations against its own trace commitment."""

    weight_proof: "OpeningProof"
    bias_proof: "OpeningProof"
    parent_entries: dict  # flat index -> (HashedTraceEntry, OpeningProof)


class Party:
    """Committed participant. Honest parties pass trace=None; adversarial
    strategies supply a forged trace or override the open methods."""

    def __init__(self, model, qry, trace=None, params=None, model_tree=None):
        self.model = model
        self.arch = model.arch
        self.qry = np.asarray(qry, dtype=np.float32)
        self.trace = trace if trace is not None else eval_trace(model, self.qry)
        if not self.trace.matches(self.arch):
            raise VinferError("trace does not fit the architecture")
        self.entries, self._commitment, self._tree = build_hashed_trace(self.trace, params)
        self._model_leaves = model_leaves(model)
        self._model_tree = model_tree or MerkleTree(self._model_leaves)

    def commitment(self):
        return self._commitment

    def claimed_output(self):
        return out_of(self.trace, self.arch)

    def open_entry(self, k):
        entry = self.entries[k]
        return entry, self._tree.open(k, encode_entry(entry))

    def final_open(self, flat_node):
        layer, idx = self.arch.node_of_index(flat_node)
        leaf = model_leaf_index(self.arch, layer, idx)
        weight_proof = self._model_tree.open(leaf, self._model_leaves[leaf])
        bias_proof = None
        if self.arch.has_bias:
            bleaf = model_leaf_index(self.arch, layer, self.arch.layer_widths[layer])
            bias_proof = self._model_tree.open(bleaf, self._model_leaves[bleaf])
        offs = self.arch.layer_offsets()
        parent_entries = {
            f: self.open_entry(f) for f in range(offs[layer - 1], offs[layer])
        }
        return FinalOpening(weight_proof, bias_proof, parent_entries)


@dataclass
class Verdict:
    winner: str  # "P1" | "P2" | "both-rejected"
    failing_index: int
    rounds: int
    log: list = field(default_factory=list)


def referee_verify_step(arch, cm_model, params, flat_node, own_entry, opening, tol):
    """Recompute phi(sum w a + b) at the adjudicated node from a party's own
    opened parents and the committed weights; True iff it matches the party's
    committed activation within tol."""
    layer, idx = arch.node_of_index(flat_node)
    leaf = model_leaf_index(arch, layer, idx)
    if not verify_opening(params, cm_model, leaf, opening.weight_proof.value, opening.weight_proof):
        return False
    wcol = np.frombuffer(opening.weight_proof.value, dtype="<f4").astype(np.float32)
    if wcol.shape[0] != arch.layer_widths[layer - 1]:
        return False
    bias = None
    if arch.has_bias:
        if opening.bias_proof is None:
            return False
        bleaf = model_leaf_index(arch, layer, arch.layer_widths[layer])
        if not verify_opening(params, cm_model, bleaf, opening.bias_proof.value, opening.bias_proof):
            return False
        brow = np.frombuffer(opening.bias_proof.value, dtype="<f4").astype(np.float32)
        if brow.shape[0] != arch.layer_widths[layer]:
            return False
        bias = brow[idx]
    offs = arch.layer_offsets()
    parent_flats = range(offs[layer - 1], offs[layer])
    if set(opening.parent_entries) != set(parent_flats):
        return False
    parents = np.array(
        [opening.parent_entries[f][0].value for f in parent_flats], dtype=np.float32
    )
    residual, _ = node_residual(
        parents, wcol, bias, arch.activations[layer - 1], own_entry.value
    )
    return residual <= tol


class _Referee:
    def __init__(self, arch, cm_model, qry, params, tol):
        self.arch = arch
        self.cm_model = cm_model
        self.qry = np.asarray(qry, dtype=np.float32)
        self.params = params
        self.tol = tol
        self.n_real = arch.node_count
        self.n_pad = padded_node_count(self.n_real)
        self.k_in = arch.input_width - 1
        # Expected input-region entries are fully determined by qry.
        self._exp_ph = [EMPTY_HASH]
        for k in range(self.k_in + 1):
            self._exp_ph.append(chain_next(self._exp_ph[-1], float(self.qry[k])))

    def anchor_ok(self, k, entry):
        """Entries at input indices must match qry, value and chain."""
        exp_value = np.float32(self.qry[k])
        return (
            np.float32(entry.value) == exp_value
            and entry.prefix_hash == self._exp_ph[k]
        )


def run_bisection(party1, party2, arch, cm_model, qry, params=None, tol=0.0):
    """Referee loop: bisect committed hashed traces to the first divergence
    and adjudicate it. Returns a Verdict; the honest party always survives."""
    if params is None:
        params = VcParams()
    ref = _Referee(arch, cm_model, qry, params, tol)
    parties = {"P1": party1, "P2": party2}
    cms = {}
    for name, p in parties.items():
        cms[name] = p.commitment()
        if cms[name].length != ref.n_pad + 1:
            raise ProtocolError(f"{name} committed a mis-sized hashed trace")

    log = []

    def lose(loser, index, rounds, why):
        log.append({"event": "adjudicated", "loser": loser, "index": index, "why": why})
        winner = "P2" if loser == "P1" else "P1"
        return Verdict(winner, index, rounds, log)

    def open_checked(k):
        """Both parties open index k; None marks a failed/refused opening."""
        out = {}
        for name, p in parties.items():
            try:
                entry, proof = p.open_entry(k)
            except Exception:
                out[name] = None
                continue
            if entry is None or not verify_opening(
                params, cms[name], k, encode_entry(entry), proof
            ):
                out[name] = None
            else:
                out[name] = entry
        return out

    # Dispute gate: the output comparison happens at the last real node.
    gate = open_checked(ref.n_real - 1)
    for name, e in gate.items():
        if e is None:
            return lose(name, ref.n_real - 1, 0, "failed opening at dispute gate")
    if encode_entry(gate["P1"]) == encode_entry(gate["P2"]):
        raise ProtocolError("no dispute: committed traces agree at the output")

    k, l = 0, ref.n_pad
    rounds = 0
    while l > k + 1:
        u = (k + l) // 2
        rounds += 1
        opened = {}
        for idx in (k, l, u):
            opened[idx] = open_checked(idx)
            for name, e in opened[idx].items():
                if e is None:
                    return lose(name, idx, rounds, "failed or refused opening")
        if k <= ref.k_in:
            for name in ("P1", "P2"):
                if not ref.anchor_ok(k, opened[k][name]):
                    other_ok = ref.anchor_ok(k, opened[k][_other(name)])
                    if not other_ok:
                        log.append({"event": "adjudicated", "loser": "both", "index": k})
                        return Verdict("both-rejected", k, rounds, log)
                    return lose(name, k, rounds, "input anchor mismatch")
        e1, e2 = opened[u]["P1"], opened[u]["P2"]
        differ = encode_entry(e1) != encode_entry(e2)
        log.append(
            {
                "round": rounds,
                "u": u,
                "a1": e1.value,
                "h1": e1.prefix_hash.hex(),
                "a2": e2.value,
                "h2": e2.prefix_hash.hex(),
                "decision": "left" if differ else "right",
            }
        )
        if differ:
            l = u
        else:
            k = u
    expected_rounds = ref.n_pad.bit_length() - 1
    if rounds != expected_rounds:
        raise ProtocolError(f"bisection used {rounds} rounds, expected {expected_rounds}")

    # Adjudicate node l: parties agree at k = l-1 and differ at l.
    final = open_checked(l)
    prev = open_checked(k)
    ok = {}
    for name in ("P1", "P2"):
        entry, kentry = final[name], prev[name]
        if entry is None or kentry is None:
            ok[name] = False
            continue
        # Chain link: the committed hash at l must extend the agreed entry at k.
        if entry.prefix_hash != chain_next(kentry.prefix_hash, kentry.value):
            ok[name] = False
            continue
        if l <= ref.k_in:
            ok[name] = ref.anchor_ok(l, entry)
        elif l >= ref.n_real:
            ok[name] = np.float32(entry.value) == np.float32(0.0)
        else:
            try:
                opening = parties[name].final_open(l)
            except Exception:
                ok[name] = False
                continue
            if opening is None:
                ok[name] = False
                continue
            # Parent activations must come from the party's own commitment.
            valid = all(
                verify_opening(params, cms[name], f, encode_entry(e), pr)
                for f, (e, pr) in opening.parent_entries.items()
            )
            ok[name] = valid and referee_verify_step(
                arch, cm_model, params, l, entry, opening, tol
            )

    if ok["P1"] and ok["P2"]:
        raise ProtocolError("both parties satisfied the final check; cannot adjudicate")
    if not ok["P1"] and not ok["P2"]:
        log.append({"event": "adjudicated", "loser": "both", "index": l})
        return Verdict("both-rejected", l, rounds, log)
    loser = "P1" if not ok["P1"] else "P2"
    return lose(loser, l, rounds, "failed the one-step check")


def _other(name):
    return "P2" if name == "P1" else "P1"
