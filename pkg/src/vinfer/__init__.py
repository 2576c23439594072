"""Lightweight verifiable inference toolkit.

A prover commits to the full activation trace of a dense-net inference with
Merkle vector commitments; a verifier samples output-to-input paths from a
random challenge and checks each node's local consistency against the
committed model. Includes the two-prover refereed bisection variant, the
separation-threshold estimation pipeline, and an adversarial attack suite.
"""

from ._kernels import backend_name
from .models import (
    ActivationKind,
    Model,
    ModelArchitecture,
    OutFn,
    Trace,
    eval_trace,
    gen_random_model,
    local_check,
    out_of,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "Model",
    "ModelArchitecture",
    "OutFn",
    "Trace",
    "backend_name",
    "eval_trace",
    "gen_random_model",
    "local_check",
    "out_of",
]
