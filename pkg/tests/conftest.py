import json
import pathlib

import numpy as np
import pytest

from vinfer import fileio
from vinfer.models import ActivationKind, ModelArchitecture, OutFn, gen_random_model

ROOT = pathlib.Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

ARCH_222 = ModelArchitecture(
    (2, 2, 2), (ActivationKind.SIGMOID, ActivationKind.SIGMOID), OutFn.IDENTITY, True
)
F1_SEED, F2_SEED = 4, 13
FIXTURE_QUERY = np.array([1.0, -1.0], dtype=np.float32)
ZERO_RHO = bytes(32)


@pytest.fixture(scope="session")
def pins():
    return json.loads((FIXTURES / "pins.json").read_text())


@pytest.fixture(scope="session")
def f1():
    model = fileio.load_model(FIXTURES / "f1_model.json")
    # the checked-in file is the seeded model
    regen = gen_random_model(F1_SEED, ARCH_222)
    for a, b in zip(model.weights, regen.weights):
        assert np.array_equal(a, b)
    return model


@pytest.fixture(scope="session")
def f2():
    return fileio.load_model(FIXTURES / "f2_model.json")


@pytest.fixture(scope="session")
def arch222():
    return ARCH_222


def random_arch(rng, max_depth=4, max_width=8, activations=None, bias=None):
    """Small random architecture for property tests."""
    depth = int(rng.integers(1, max_depth + 1))
    widths = tuple(int(rng.integers(1, max_width + 1)) for _ in range(depth + 1))
    kinds = list(ActivationKind) if activations is None else list(activations)
    acts = tuple(kinds[int(rng.integers(len(kinds)))] for _ in range(depth))
    has_bias = bool(rng.integers(2)) if bias is None else bias
    out_fn = OutFn.IDENTITY if rng.integers(2) else OutFn.SOFTMAX
    return ModelArchitecture(widths, acts, out_fn, has_bias)
