"""Compact binary serialization and size accounting.

Two container formats, both little-endian with a trailing zlib CRC32:

SCTE v1 (distilled model)
    "SCTE" | u16 version | u8 task | u32 d_in | u32 p | u32 n_layers |
    u32 layer_dims[n_layers] | f32 means[d_in] | f32 stds[d_in] |
    per layer: f32 weights (row-major), f32 biases | f32 c[p] | u32 crc

SCTF v1 (minimal forest: the five prediction-critical arrays per tree)
    "SCTF" | u16 version | u8 kind (0 = mean of trees, 1 = base + scale*sum) |
    f32 scale | f32 base | u32 n_trees |
    per tree: u32 n_nodes, i32 feature[], f32 threshold[], i32 left[],
    i32 right[], f32 value[] | u32 crc

Parameters are stored in 32-bit floats; deserialization widens back to
float64, so a round-tripped model predicts bitwise-identically to the
f32-quantized original.
"""

import struct
import zlib

import numpy as np

from .data import BINARY_CLASSIFICATION, REGRESSION, ScalingStats
from .distill import DistilledModel
from .ensemble import Forest, GbmModel
from .errors import BadMagic, CrcMismatch, Truncated, UnsupportedVersion
from .mlp import Mlp

MODEL_MAGIC = b"SCTE"
FOREST_MAGIC = b"SCTF"
_TASK_CODE = {REGRESSION: 0, BINARY_CLASSIFICATION: 1}
_TASK_NAME = {v: k for k, v in _TASK_CODE.items()}


def _f32(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _i32(arr):
    return np.ascontiguousarray(arr, dtype="<i4").tobytes()


def serialize(model):
    """DistilledModel -> SCTE v1 bytes."""
    dims = model.mlp.layer_dims
    parts = [MODEL_MAGIC,
             struct.pack("<HBIII", 1, _TASK_CODE[model.task],
                         dims[0], model.p, len(dims)),
             struct.pack(f"<{len(dims)}I", *dims),
             _f32(model.scaling.mean), _f32(model.scaling.std)]
    for W, b in zip(model.mlp.weights, model.mlp.biases):
        parts.append(_f32(W))
        parts.append(_f32(b))
    parts.append(_f32(model.coefficients))
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise Truncated(f"needed {n} bytes at offset {self.pos}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count):
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64)

    def i32(self, count):
        return np.frombuffer(self.take(4 * count), dtype="<i4").astype(np.int64)


def _check_crc(raw, magic):
    if len(raw) < 4 or raw[:4] != magic:
        raise BadMagic(f"expected {magic!r}")
    if len(raw) < 8:
        raise Truncated("no room for checksum")
    body, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc:
        raise CrcMismatch("checksum mismatch")
    return body


def deserialize(raw):
    """SCTE v1 bytes -> DistilledModel (parameters widened to float64)."""
    body = _check_crc(raw, MODEL_MAGIC)
    r = _Reader(body)
    r.take(4)
    version, task_code, d_in, p, n_layers = r.unpack("<HBIII")
    if version != 1:
        raise UnsupportedVersion(f"version {version}")
    if task_code not in _TASK_NAME:
        raise Truncated(f"unknown task code {task_code}")
    dims = list(r.unpack(f"<{n_layers}I"))
    if len(dims) < 2 or dims[0] != d_in or dims[-1] != p:
        raise Truncated("inconsistent layer dims")
    mean = r.f32(d_in)
    std = r.f32(d_in)
    weights, biases = [], []
    for di, do in zip(dims[:-1], dims[1:]):
        weights.append(r.f32(di * do).reshape(di, do))
        biases.append(r.f32(do))
    c = r.f32(p)
    if r.pos != len(body):
        raise Truncated(f"{len(body) - r.pos} trailing bytes")
    return DistilledModel(Mlp(dims, weights, biases), c,
                          ScalingStats(mean, std), _TASK_NAME[task_code], p,
                          {"deserialized": True})


def quantized(model):
    """The model with every parameter passed through float32 — the exact
    arithmetic content of its serialized form."""
    def q(a):
        return np.asarray(a, dtype=np.float32).astype(np.float64)
    mlp = Mlp(list(model.mlp.layer_dims),
              [q(W) for W in model.mlp.weights],
              [q(b) for b in model.mlp.biases])
    return DistilledModel(mlp, q(model.coefficients),
                          ScalingStats(q(model.scaling.mean), q(model.scaling.std)),
                          model.task, model.p, dict(model.provenance))


def serialize_forest(model):
    """Forest or GbmModel -> SCTF v1 bytes (minimal inference arrays)."""
    if isinstance(model, Forest):
        kind, scale, base, trees = 0, 1.0, 0.0, model.trees
    elif isinstance(model, GbmModel):
        kind, scale, base, trees = 1, model.learning_rate, model.base_score, model.trees
    else:
        raise TypeError(f"cannot serialize {type(model).__name__} as a forest")
    parts = [FOREST_MAGIC,
             struct.pack("<HBffI", 1, kind, scale, base, len(trees))]
    for t in trees:
        parts.append(struct.pack("<I", t.n_nodes))
        parts.append(_i32(t.feature))
        parts.append(_f32(t.threshold))
        parts.append(_i32(t.left))
        parts.append(_i32(t.right))
        parts.append(_f32(np.nan_to_num(t.value, nan=0.0)))
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


class MinimalForest:
    """Deserialized SCTF payload: just enough to run inference."""

    def __init__(self, kind, scale, base, trees):
        self.kind = kind
        self.scale = scale
        self.base = base
        self.trees = trees  # per tree: (feature, threshold, left, right, value)


def deserialize_forest(raw):
    body = _check_crc(raw, FOREST_MAGIC)
    r = _Reader(body)
    r.take(4)
    version, kind, scale, base, n_trees = r.unpack("<HBffI")
    if version != 1:
        raise UnsupportedVersion(f"version {version}")
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = r.unpack("<I")
        feature = r.i32(n_nodes)
        threshold = r.f32(n_nodes)
        left = r.i32(n_nodes)
        right = r.i32(n_nodes)
        value = r.f32(n_nodes)
        trees.append((feature, threshold, left, right, value))
    if r.pos != len(body):
        raise Truncated(f"{len(body) - r.pos} trailing bytes")
    return MinimalForest(kind, float(scale), float(base), trees)


def predict_minimal(mf, X):
    """Standalone inference over a MinimalForest (f32-quantized params)."""
    X = np.asarray(X, dtype=np.float64)
    acc = np.zeros(X.shape[0])
    for feature, threshold, left, right, value in mf.trees:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = feature[node] >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            f = feature[node[rows]]
            goes_left = X[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(goes_left, left[node[rows]], right[node[rows]])
        acc += value[node] if mf.kind == 0 else mf.scale * value[node]
    if mf.kind == 0:
        return acc / max(len(mf.trees), 1)
    return mf.base + acc


def measure_size(obj):
    """Serialized byte size of a model (or byte string)."""
    if isinstance(obj, (bytes, bytearray)):
        return len(obj)
    if isinstance(obj, (Forest, GbmModel)):
        return len(serialize_forest(obj))
    if isinstance(obj, DistilledModel):
        return len(serialize(obj))
    raise TypeError(f"cannot measure {type(obj).__name__}")


def model_size_bytes(d_in, width, depth, p):
    """Exact SCTE v1 size from the architecture alone (for size prefilters)."""
    dims = [d_in] + [width] * depth + [p]
    n_params = sum(di * do + do for di, do in zip(dims[:-1], dims[1:]))
    return 4 + 15 + 4 * len(dims) + 8 * d_in + 4 * n_params + 4 * p + 4


def write_model(path, model):
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def read_model(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
