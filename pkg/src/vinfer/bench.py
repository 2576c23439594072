"""Benchmarks: the synthetic-tensor hybrid commitment (timing and proof
sizes) and a kernel-backend comparison (compiled vs pure Python)."""

import time

import numpy as np

from . import _kernels
from .merkle import MerkleTree, hybrid_leaves, serialize_opening, verify_opening
from .merkle import VcParams, commit_to_model
from .models import ActivationKind, ModelArchitecture, OutFn, eval_trace, gen_random_model
from .protocol import gen_params, prove1, prove2, verify_transcript
from .protocol import Transcript, deserialize_transcript, serialize_transcript

LLAMA_TENSORS = 192
LLAMA_ROWS = 64
LLAMA_COLS = 4096
LLAMA_BLOCKS = 32


def synthetic_llama_stream(seed=0):
    """192 intermediate tensors of shape 64 x 4096 (6 per block over 32
    blocks, alternating matmul-input and element-wise-output commitments)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = [
        rng.standard_normal((LLAMA_ROWS, LLAMA_COLS), dtype=np.float32)
        for _ in range(LLAMA_TENSORS)
    ]
    kinds = [("matmul" if i % 2 == 0 else "elementwise") for i in range(LLAMA_TENSORS)]
    return tensors, kinds


def llama_synthetic_bench(threads=8, seed=0):
    tensors, kinds = synthetic_llama_stream(seed)
    leaves, index_map = hybrid_leaves(tensors, kinds)
    payload_bytes = sum(len(l) for l in leaves)

    t0 = time.perf_counter()
    tree_single = MerkleTree(leaves, threads=1)
    commit_single = time.perf_counter() - t0

    t0 = time.perf_counter()
    tree_threaded = MerkleTree(leaves, threads=threads)
    commit_threaded = time.perf_counter() - t0
    assert tree_threaded.root == tree_single.root

    params = VcParams()
    cm = tree_single.commitment()

    # One row opening per tensor: the per-layer path proof.
    open_indices = [t * LLAMA_ROWS for t in range(LLAMA_TENSORS)]
    t0 = time.perf_counter()
    proofs = [tree_single.open(i, leaves[i]) for i in open_indices]
    open_seconds = time.perf_counter() - t0
    proof_blobs = [serialize_opening(p) for p in proofs]
    total_bytes = sum(len(b) for b in proof_blobs)
    row_bytes = sum(len(p.value) for p in proofs)

    t0 = time.perf_counter()
    for i, p in zip(open_indices, proofs):
        assert verify_opening(params, cm, i, p.value, p)
    verify_seconds = time.perf_counter() - t0

    return {
        "shape": "llama-synthetic",
        "tensors": LLAMA_TENSORS,
        "rows_per_tensor": LLAMA_ROWS,
        "row_width": LLAMA_COLS,
        "blocks": LLAMA_BLOCKS,
        "leaves": len(leaves),
        "payload_bytes": payload_bytes,
        "threads": threads,
        "commit_seconds_single": commit_single,
        "commit_seconds_threaded": commit_threaded,
        "single_opening_bytes": len(proof_blobs[0]),
        "single_row_payload_bytes": len(proofs[0].value),
        "siblings_per_opening": len(proofs[0].siblings),
        "path_openings": len(proofs),
        "path_proof_total_bytes": total_bytes,
        "path_row_payload_bytes": row_bytes,
        "path_merkle_overhead_bytes": total_bytes - row_bytes,
        "open_all_seconds": open_seconds,
        "verify_all_openings_ms": 1000.0 * verify_seconds,
        "verify_one_opening_ms": 1000.0 * verify_seconds / len(proofs),
        "kernel_backend": _kernels.backend_name(),
    }


def transcript_bench(reps=50, seed=7):
    """End-to-end dense-net transcript verify timing."""
    arch = ModelArchitecture(
        (16, 32, 32, 8), (ActivationKind.SIGMOID,) * 3, OutFn.IDENTITY, True
    )
    model = gen_random_model(seed, arch)
    rng = np.random.Generator(np.random.PCG64(seed))
    qry = rng.uniform(-1, 1, arch.input_width).astype(np.float32)
    pp = gen_params(strict=True)
    cm = commit_to_model(pp.vc, model)
    proof1, state = prove1(pp, model, qry)
    rho = rng.bytes(32)
    proof2 = prove2(state, rho)
    blob = serialize_transcript(
        Transcript(pp.pp_hash(), cm, qry, proof1, rho, proof2)
    )
    t = deserialize_transcript(blob)
    t0 = time.perf_counter()
    for _ in range(reps):
        res = verify_transcript(pp, arch, t)
        assert res.accepted
    elapsed = time.perf_counter() - t0
    return {
        "transcript_bytes": len(blob),
        "transcript_verify_ms": 1000.0 * elapsed / reps,
        "reps": reps,
    }


def kernel_bench(reps=200, seed=3):
    """Compare trace evaluation across kernel backends on a mid-size net."""
    arch = ModelArchitecture(
        (64, 256, 256, 64), (ActivationKind.SIGMOID,) * 3, OutFn.IDENTITY, True
    )
    model = gen_random_model(seed, arch)
    rng = np.random.Generator(np.random.PCG64(seed))
    qry = rng.uniform(-1, 1, arch.input_width).astype(np.float32)

    backends = ["python"]
    try:
        _kernels.get_backend("cython")
        backends.append("cython")
    except ImportError:
        pass

    results = {}
    reference = None
    active = _kernels._impl
    try:
        for name in backends:
            impl = _kernels.get_backend(name)
            _kernels._impl = impl
            _kernels.forward_layer = impl.forward_layer
            _kernels.recompute_node = impl.recompute_node
            trace = eval_trace(model, qry)
            if reference is None:
                reference = trace.values
            else:
                assert np.array_equal(trace.values, reference), "backends disagree"
            t0 = time.perf_counter()
            for _ in range(reps):
                eval_trace(model, qry)
            results[name] = (time.perf_counter() - t0) / reps
    finally:
        _kernels._impl = active
        _kernels.forward_layer = active.forward_layer
        _kernels.recompute_node = active.recompute_node

    out = {
        "net": "64-256-256-64 sigmoid",
        "reps": reps,
        "seconds_per_eval": results,
        "bit_identical": True,
    }
    if "cython" in results:
        out["speedup"] = results["python"] / results["cython"]
    return out
