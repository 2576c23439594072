"""Canonical model / trace / query file formats.

Model: a JSON text form (self-describing, decimal floats; float32 values
round-trip exactly through their shortest decimal repr) and a binary form,
magic ``VINF-MDL``, matrices row-major little-endian float32. Trace: binary
only, magic ``VINF-TRC``. Binary parse errors carry the byte offset.
"""

import json
import struct

import numpy as np

from .errors import ParseError
from .models import ActivationKind, Model, ModelArchitecture, OutFn, Trace

MODEL_MAGIC = b"VINF-MDL"
TRACE_MAGIC = b"VINF-TRC"

_ACT_NAMES = {k: k.name.lower() for k in ActivationKind}
_ACT_BY_NAME = {v: k for k, v in _ACT_NAMES.items()}
_OUT_NAMES = {k: k.name.lower() for k in OutFn}
_OUT_BY_NAME = {v: k for k, v in _OUT_NAMES.items()}


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated while reading {what}", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what):
        return self.take(1, what)[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]

    def f32_array(self, count, what):
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)


# -- model, JSON text form --------------------------------------------------


def serialize_model_json(model):
    arch = model.arch
    doc = {
        "version": 1,
        "layer_widths": list(arch.layer_widths),
        "activation": [_ACT_NAMES[a] for a in arch.activations],
        "out_fn": _OUT_NAMES[arch.out_fn],
        "has_bias": arch.has_bias,
        "layers": [],
    }
    for l in range(1, arch.num_layers + 1):
        entry = {"weights": [[float(v) for v in row] for row in model.weights[l - 1]]}
        if arch.has_bias:
            entry["bias"] = [float(v) for v in model.biases[l - 1]]
        doc["layers"].append(entry)
    return json.dumps(doc, indent=1)


def deserialize_model_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad model JSON: {e.msg}", offset=e.pos) from e
    try:
        arch = ModelArchitecture(
            layer_widths=tuple(doc["layer_widths"]),
            activations=tuple(_ACT_BY_NAME[a] for a in doc["activation"]),
            out_fn=_OUT_BY_NAME[doc["out_fn"]],
            has_bias=bool(doc["has_bias"]),
        )
        weights = [np.array(layer["weights"], dtype=np.float32) for layer in doc["layers"]]
        biases = (
            tuple(np.array(layer["bias"], dtype=np.float32) for layer in doc["layers"])
            if arch.has_bias
            else None
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad model JSON structure: {e}") from e
    return Model(arch, tuple(weights), biases)


# -- model, binary form -----------------------------------------------------


def serialize_model(model):
    arch = model.arch
    out = [MODEL_MAGIC, struct.pack("<II", 1, arch.num_layers)]
    out.append(struct.pack(f"<{len(arch.layer_widths)}Q", *arch.layer_widths))
    out.append(bytes(int(a) for a in arch.activations))
    out.append(struct.pack("<BB", int(arch.out_fn), int(arch.has_bias)))
    for l in range(1, arch.num_layers + 1):
        out.append(np.ascontiguousarray(model.weights[l - 1], dtype="<f4").tobytes())
        if arch.has_bias:
            out.append(np.ascontiguousarray(model.biases[l - 1], dtype="<f4").tobytes())
    return b"".join(out)


def deserialize_model(data):
    r = _Reader(data)
    if r.take(8, "magic") != MODEL_MAGIC:
        raise ParseError("not a model file (bad magic)", offset=0)
    version = r.u32("version")
    if version != 1:
        raise ParseError(f"unsupported model version {version}", offset=8)
    num_layers = r.u32("layer count")
    widths = tuple(r.u64("layer width") for _ in range(num_layers + 1))
    acts = tuple(r.u8("activation") for _ in range(num_layers))
    out_fn = r.u8("out_fn")
    has_bias = bool(r.u8("has_bias"))
    try:
        arch = ModelArchitecture(widths, acts, OutFn(out_fn), has_bias)
    except ValueError as e:
        raise ParseError(f"bad architecture field: {e}", offset=r.pos) from e
    weights, biases = [], []
    for l in range(1, num_layers + 1):
        d_prev, d = widths[l - 1], widths[l]
        weights.append(r.f32_array(d_prev * d, f"layer {l} weights").reshape(d_prev, d))
        if has_bias:
            biases.append(r.f32_array(d, f"layer {l} bias"))
    if r.pos != len(data):
        raise ParseError("trailing bytes after model payload", offset=r.pos)
    return Model(arch, tuple(weights), tuple(biases) if has_bias else None)


# -- trace ------------------------------------------------------------------


def serialize_trace(trace):
    offs = trace.layer_offsets
    out = [
        TRACE_MAGIC,
        struct.pack("<Q", len(offs)),
        struct.pack(f"<{len(offs)}Q", *offs),
        struct.pack("<Q", len(trace.values)),
        np.ascontiguousarray(trace.values, dtype="<f4").tobytes(),
    ]
    return b"".join(out)


def deserialize_trace(data):
    r = _Reader(data)
    if r.take(8, "magic") != TRACE_MAGIC:
        raise ParseError("not a trace file (bad magic)", offset=0)
    n_offs = r.u64("offset count")
    offs = tuple(r.u64("layer offset") for _ in range(n_offs))
    n_vals = r.u64("value count")
    values = r.f32_array(n_vals, "trace values")
    if r.pos != len(data):
        raise ParseError("trailing bytes after trace payload", offset=r.pos)
    return Trace(values, offs)


# -- path helpers -----------------------------------------------------------


def load_model(path):
    """Load a model file, auto-detecting binary vs JSON text form."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == MODEL_MAGIC:
        return deserialize_model(data)
    return deserialize_model_json(data.decode("utf-8"))


def save_model(model, path, *, binary=False):
    mode = "wb" if binary else "w"
    payload = serialize_model(model) if binary else serialize_model_json(model)
    with open(path, mode) as fh:
        fh.write(payload)


def load_trace(path):
    with open(path, "rb") as fh:
        return deserialize_trace(fh.read())


def save_trace(trace, path):
    with open(path, "wb") as fh:
        fh.write(serialize_trace(trace))


def load_queries(path):
    """Query file: JSON, either one vector or {"queries": [[...], ...]}."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"bad query JSON: {e.msg}", offset=e.pos) from e
    if isinstance(doc, dict):
        rows = doc.get("queries")
        if rows is None:
            raise ParseError('query file object must contain "queries"')
    elif doc and isinstance(doc[0], list):
        rows = doc
    else:
        rows = [doc]
    return [np.asarray(row, dtype=np.float32) for row in rows]
