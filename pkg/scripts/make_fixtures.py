#!/usr/bin/env python3
"""Regenerate the checked-in fixture files and pinned values.

Run from the repo root: python scripts/make_fixtures.py
Everything here is deterministic; reruns must be no-ops (git diff clean).
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from vinfer import fileio
from vinfer.merkle import MerkleTree, VcParams, commit_to_model, model_leaves, trace_leaves
from vinfer.models import ActivationKind, ModelArchitecture, OutFn, eval_trace, gen_random_model
from vinfer.paths import derive_paths
from vinfer.protocol import Transcript, gen_params, prove1, prove2, serialize_transcript
from vinfer.refereed import build_hashed_trace

ROOT = pathlib.Path(__file__).resolve().parents[1]
FIX = ROOT / "fixtures"

ARCH_222 = ModelArchitecture(
    (2, 2, 2), (ActivationKind.SIGMOID, ActivationKind.SIGMOID), OutFn.IDENTITY, True
)
F1_SEED, F2_SEED = 4, 13
FIXTURE_QUERY = [1.0, -1.0]
ZERO_RHO = bytes(32)


def main():
    FIX.mkdir(exist_ok=True)
    f1 = gen_random_model(F1_SEED, ARCH_222)
    f2 = gen_random_model(F2_SEED, ARCH_222)
    fileio.save_model(f1, FIX / "f1_model.json")
    fileio.save_model(f2, FIX / "f2_model.json")

    pins = {}
    params = VcParams()

    trace = eval_trace(f1, FIXTURE_QUERY)
    pins["f1_trace_on_fixture_query"] = [float(v) for v in trace.values]
    pins["f1_model_commitment"] = commit_to_model(params, f1).root.hex()
    pins["f2_model_commitment"] = commit_to_model(params, f2).root.hex()

    seed0 = gen_random_model(0, ARCH_222)
    pins["seed0_model_commitment"] = commit_to_model(params, seed0).root.hex()

    path = derive_paths(ARCH_222, ZERO_RHO, 1)[0]
    pins["zero_rho_path_222"] = list(path.nodes)

    pp = gen_params(strict=True)
    proof1, state = prove1(pp, f1, FIXTURE_QUERY)
    pins["f1_trace_commitment"] = proof1.trace_commitment.root.hex()
    proof2 = prove2(state, ZERO_RHO)
    cm = commit_to_model(pp.vc, f1)
    blob = serialize_transcript(
        Transcript(pp.pp_hash(), cm, state.qry, proof1, ZERO_RHO, proof2)
    )
    (FIX / "golden_transcript.bin").write_bytes(blob)
    pins["golden_transcript_bytes"] = len(blob)
    pins["f1_proof2_bytes"] = len(blob)

    entries, hcm, _ = build_hashed_trace(trace, params)
    pins["f1_hashed_trace_commitment"] = hcm.root.hex()

    (FIX / "pins.json").write_text(json.dumps(pins, indent=1) + "\n")
    print("wrote", FIX)


if __name__ == "__main__":
    main()
