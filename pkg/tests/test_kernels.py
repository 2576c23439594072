"""Backend lockstep: the compiled kernels and the pure Python fallback must
produce bit-identical float32 results."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vinfer._kernels import get_backend, pyfallback

try:
    accel = get_backend("cython")
    HAVE_ACCEL = True
except ImportError:
    accel = None
    HAVE_ACCEL = False

needs_accel = pytest.mark.skipif(not HAVE_ACCEL, reason="compiled extension not built")


def _random_layer(rng, n_in, n_out, with_bias):
    prev = rng.uniform(-4, 4, n_in).astype(np.float32)
    w = rng.uniform(-2, 2, (n_in, n_out)).astype(np.float32)
    b = rng.uniform(-1, 1, n_out).astype(np.float32) if with_bias else None
    return prev, w, b


@needs_accel
@pytest.mark.parametrize("act", [0, 1, 2])
@pytest.mark.parametrize("with_bias", [False, True])
def test_forward_layer_bit_identical(act, with_bias):
    rng = np.random.default_rng(100 * act + with_bias)
    for n_in, n_out in [(1, 1), (1, 7), (5, 3), (17, 64), (64, 17)]:
        prev, w, b = _random_layer(rng, n_in, n_out, with_bias)
        a = accel.forward_layer(prev, w, b, act)
        p = pyfallback.forward_layer(prev, w, b, act)
        assert a.dtype == p.dtype == np.float32
        assert np.array_equal(a, p)


@needs_accel
def test_recompute_matches_forward_per_node():
    rng = np.random.default_rng(7)
    prev, w, b = _random_layer(rng, 9, 6, True)
    for act in (0, 1, 2):
        full = accel.forward_layer(prev, w, b, act)
        for j in range(6):
            col = np.ascontiguousarray(w[:, j])
            assert accel.recompute_node(prev, col, b[j], act) == full[j]
            assert pyfallback.recompute_node(prev, col, b[j], act) == full[j]


@needs_accel
@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 12),
    st.integers(1, 12),
    st.integers(0, 2),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_backends_agree_property(n_in, n_out, act, with_bias, seed):
    rng = np.random.default_rng(seed)
    prev, w, b = _random_layer(rng, n_in, n_out, with_bias)
    assert np.array_equal(
        accel.forward_layer(prev, w, b, act), pyfallback.forward_layer(prev, w, b, act)
    )


def test_relu_clamps_negative_zero():
    prev = np.array([1.0], dtype=np.float32)
    w = np.array([[-0.0]], dtype=np.float32)
    out = pyfallback.forward_layer(prev, w, None, 1)
    assert out[0] == 0.0 and not np.signbit(out[0])


def test_shape_errors():
    prev = np.zeros(3, dtype=np.float32)
    w = np.zeros((4, 2), dtype=np.float32)
    with pytest.raises(ValueError):
        pyfallback.forward_layer(prev, w, None, 0)
    if HAVE_ACCEL:
        with pytest.raises(ValueError):
            accel.forward_layer(prev, w, None, 0)


def test_readonly_inputs_accepted():
    prev = np.arange(4, dtype=np.float32)
    w = np.ones((4, 2), dtype=np.float32)
    prev.flags.writeable = False
    w.flags.writeable = False
    assert pyfallback.forward_layer(prev, w, None, 0)[0] == 6.0
    if HAVE_ACCEL:
        assert accel.forward_layer(prev, w, None, 0)[0] == 6.0
