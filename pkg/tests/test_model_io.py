"""Serialization formats: exact frozen sizes, byte-level round trips,
corruption detection, and the f32 quantization prediction identity."""

import struct
import zlib

import numpy as np
import pytest

from scate.cart import TreeParams
from scate.data import REGRESSION, ScalingStats, gen_friedman1
from scate.distill import DistilledModel, predict_distilled
from scate.ensemble import (ForestParams, GbmParams, fit_gbm, fit_rf,
                            predict_gbm, predict_rf)
from scate.errors import BadMagic, CrcMismatch, Truncated, UnsupportedVersion
from scate.mlp import init_mlp
from scate.model_io import (deserialize, deserialize_forest, measure_size,
                            model_size_bytes, predict_minimal, quantized,
                            read_model, serialize, serialize_forest,
                            write_model)
from scate.rng import SplitMix64


def _model(dims, seed=0):
    d, p = dims[0], dims[-1]
    mlp = init_mlp(list(dims), seed)
    rng = SplitMix64(seed + 1000)
    return DistilledModel(
        mlp=mlp,
        coefficients=rng.normal(p),
        scaling=ScalingStats(mean=rng.normal(d), std=np.abs(rng.normal(d)) + 0.5),
        task=REGRESSION,
        p=p,
        provenance={"base": "rf"},
    )


def _xy(n, seed=0):
    ds = gen_friedman1(n, 5, 0.5, seed)
    return ds.features, ds.target


# -- frozen size constants -----------------------------------------------------

def test_reference_arch_serializes_to_5511_bytes():
    raw = serialize(_model((10, 16, 16, 50)))
    assert len(raw) == 5511
    assert model_size_bytes(10, 16, 2, 50) == 5511


def test_model_size_bytes_matches_serializer():
    cases = [((3, 4, 2), (3, 4, 1, 2)),
             ((7, 32, 32, 32, 10), (7, 32, 3, 10)),
             ((5, 2), (5, 99, 0, 2))]  # depth 0: width argument is unused
    for dims, args in cases:
        assert model_size_bytes(*args) == len(serialize(_model(dims)))


def test_empty_forest_is_23_bytes():
    X, y = _xy(30)
    forest = fit_rf((X, y), ForestParams(1, TreeParams(max_depth=2), 0))
    forest.trees = []
    assert len(serialize_forest(forest)) == 23


def test_single_node_tree_adds_24_bytes():
    X = np.zeros((6, 1))  # constant feature: no split candidates anywhere
    y = np.arange(6.0)
    forest = fit_rf((X, y), ForestParams(1, TreeParams(max_depth=3,
                                                       bootstrap=False), 0))
    assert forest.trees[0].n_nodes == 1
    assert len(serialize_forest(forest)) == 47  # 23 + 4 (n_nodes) + 5 * 4


def test_deeper_and_wider_cost_more():
    assert model_size_bytes(10, 16, 3, 50) > model_size_bytes(10, 16, 2, 50)
    assert model_size_bytes(10, 32, 2, 50) > model_size_bytes(10, 16, 2, 50)
    assert model_size_bytes(10, 16, 2, 80) > model_size_bytes(10, 16, 2, 50)


# -- SCTE round trip -----------------------------------------------------------

def test_scte_round_trip_byte_identity():
    model = _model((10, 16, 16, 50), seed=3)
    raw = serialize(model)
    back = deserialize(raw)
    assert serialize(back) == raw
    assert back.task == model.task and back.p == model.p
    assert [int(v) for v in back.mlp.layer_dims] == list(model.mlp.layer_dims)
    assert back.provenance.get("deserialized") is True


def test_f32_round_trip_prediction_identity():
    # deserialized predictions must be bitwise equal to the quantized
    # original: storage is exactly one f32 pass over the parameters
    rng = SplitMix64(4)
    for trial in range(100):
        width = int(rng.below(30)) + 1
        depth = int(rng.below(3))
        d = int(rng.below(6)) + 2
        p = int(rng.below(8)) + 1
        dims = tuple([d] + [width] * depth + [p])
        model = _model(dims, seed=trial)
        q = quantized(model)
        back = deserialize(serialize(model))
        X = rng.normal(5 * d).reshape(5, d)
        assert np.array_equal(predict_distilled(back, X),
                              predict_distilled(q, X)), f"dims={dims}"


def test_quantized_is_idempotent():
    q1 = quantized(_model((6, 8, 4), seed=9))
    q2 = quantized(q1)
    for a, b in zip(q1.mlp.weights, q2.mlp.weights):
        assert np.array_equal(a, b)
    assert np.array_equal(q1.coefficients, q2.coefficients)


def test_scte_corruption_detected():
    raw = bytearray(serialize(_model((5, 8, 3), seed=1)))
    raw[60] ^= 0xFF
    with pytest.raises(CrcMismatch):
        deserialize(bytes(raw))


def test_scte_truncation_detected():
    raw = serialize(_model((5, 8, 3), seed=2))
    with pytest.raises(BadMagic):
        deserialize(raw[:3])  # not even a full magic
    with pytest.raises(Truncated):
        deserialize(raw[:6])  # magic intact, no room for checksum
    for cut in (10, len(raw) - 5, len(raw) - 1):
        with pytest.raises(CrcMismatch):
            deserialize(raw[:cut])


def test_scte_bad_magic_and_version():
    raw = serialize(_model((4, 4, 2), seed=5))
    with pytest.raises(BadMagic):
        deserialize(b"XXXX" + raw[4:])
    # patch the version and re-CRC so only the version check can fire
    body = bytearray(raw[:-4])
    body[4:6] = struct.pack("<H", 2)
    patched = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
    with pytest.raises(UnsupportedVersion):
        deserialize(patched)


def test_scte_trailing_garbage_rejected():
    raw = serialize(_model((4, 4, 2), seed=6))
    body = bytearray(raw[:-4]) + b"\x00\x00\x00\x00"
    patched = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
    with pytest.raises(Truncated):
        deserialize(patched)


def test_write_read_model_file(tmp_path):
    model = _model((6, 8, 4), seed=7)
    path = str(tmp_path / "m.scte")
    write_model(path, model)
    assert serialize(read_model(path)) == serialize(model)


# -- SCTF round trip -----------------------------------------------------------

def test_sctf_rf_round_trip_predictions():
    X, y = _xy(120, seed=1)
    forest = fit_rf((X, y), ForestParams(8, TreeParams(max_depth=5), 1))
    mf = deserialize_forest(serialize_forest(forest))
    assert mf.kind == 0 and mf.scale == 1.0 and mf.base == 0.0
    assert len(mf.trees) == 8
    got = predict_minimal(mf, X)
    want = predict_rf(forest, X)
    # leaf values went through f32; agreement to f32 resolution
    assert np.abs(got - want).max() <= 1e-5 * max(1.0, np.abs(want).max())


def test_sctf_gbm_round_trip_predictions():
    X, y = _xy(100, seed=2)
    model = fit_gbm((X, y), GbmParams(15, 0.1, TreeParams(max_depth=3,
                                                          bootstrap=False), 2))
    mf = deserialize_forest(serialize_forest(model))
    assert mf.kind == 1
    assert mf.scale == pytest.approx(0.1, rel=1e-7)
    assert mf.base == pytest.approx(model.base_score, rel=1e-7)
    got = predict_minimal(mf, X)
    want = predict_gbm(model, X)
    assert np.abs(got - want).max() <= 1e-4 * max(1.0, np.abs(want).max())


def test_sctf_corruption_and_magic():
    X, y = _xy(40)
    forest = fit_rf((X, y), ForestParams(2, TreeParams(max_depth=3), 0))
    raw = bytearray(serialize_forest(forest))
    raw[30] ^= 0x01
    with pytest.raises(CrcMismatch):
        deserialize_forest(bytes(raw))
    with pytest.raises(BadMagic):
        deserialize_forest(b"SCTE" + bytes(raw[4:]))


def test_sctf_wrong_version():
    X, y = _xy(30)
    raw = serialize_forest(fit_rf((X, y), ForestParams(1, TreeParams(max_depth=2), 0)))
    body = bytearray(raw[:-4])
    body[4:6] = struct.pack("<H", 9)
    patched = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
    with pytest.raises(UnsupportedVersion):
        deserialize_forest(patched)


def test_sctf_internal_nan_values_stored_as_zero():
    X, y = _xy(50)
    forest = fit_rf((X, y), ForestParams(1, TreeParams(max_depth=2), 3))
    mf = deserialize_forest(serialize_forest(forest))
    feature, _, _, _, value = mf.trees[0]
    internal = feature >= 0
    assert internal.any()
    assert np.array_equal(value[internal], np.zeros(int(internal.sum())))
    assert np.isfinite(value).all()


# -- measure_size ----------------------------------------------------------------

def test_measure_size_dispatch():
    X, y = _xy(60)
    forest = fit_rf((X, y), ForestParams(3, TreeParams(max_depth=4), 0))
    gbm = fit_gbm((X, y), GbmParams(3, 0.5, TreeParams(max_depth=2,
                                                       bootstrap=False), 0))
    model = _model((5, 8, 4))
    assert measure_size(forest) == len(serialize_forest(forest))
    assert measure_size(gbm) == len(serialize_forest(gbm))
    assert measure_size(model) == len(serialize(model))
    assert measure_size(b"12345") == 5
    with pytest.raises(TypeError):
        measure_size(42)
