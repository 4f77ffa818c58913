"""Data layer: CSV ingestion edge cases, splits, Friedman generator,
standardization."""

import numpy as np
import pytest

from scate.data import (BINARY_CLASSIFICATION, CATEGORICAL, NUMERIC,
                        REGRESSION, ScalingStats, friedman1_formula,
                        gen_friedman1, load_csv, split, standardize, to_csv)
from scate.errors import (ColumnMismatch, DimensionTooSmall,
                          EmptyAfterCleaning, InvalidRatios, MissingColumn,
                          NonBinaryLabels, ParseError, TooFewRows)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- load_csv ---------------------------------------------------------------

def test_load_numeric_csv(tmp_path):
    path = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    ds = load_csv(path, "y", REGRESSION)
    assert ds.n == 3 and ds.d == 2
    assert ds.feature_names == ["a", "b"]
    assert ds.column_kinds == [NUMERIC, NUMERIC]
    assert np.array_equal(ds.target, [3.0, 6.0, 9.0])
    assert np.array_equal(ds.features, [[1, 2], [4, 5], [7, 8]])


def test_target_column_position_is_irrelevant(tmp_path):
    path = _write(tmp_path, "y,a\n1,10\n2,20\n")
    ds = load_csv(path, "y", REGRESSION)
    assert np.array_equal(ds.target, [1.0, 2.0])
    assert np.array_equal(ds.features[:, 0], [10.0, 20.0])


def test_rows_with_missing_cells_dropped(tmp_path):
    path = _write(tmp_path, "a,y\n1,2\n,3\n4,\n5,6\n")
    ds = load_csv(path, "y", REGRESSION)
    assert ds.n == 2
    assert np.array_equal(ds.target, [2.0, 6.0])


def test_categorical_one_hot_lexicographic(tmp_path):
    path = _write(tmp_path, "c,y\nred,1\nblue,2\ngreen,3\nred,4\n")
    ds = load_csv(path, "y", REGRESSION)
    assert ds.feature_names == ["c=blue", "c=green", "c=red"]
    assert ds.column_kinds == [CATEGORICAL]
    assert np.array_equal(ds.features[0], [0.0, 0.0, 1.0])
    assert np.array_equal(ds.features[1], [1.0, 0.0, 0.0])


def test_binary_labels_map_lexicographically(tmp_path):
    path = _write(tmp_path, "a,y\n1,yes\n2,no\n3,yes\n")
    ds = load_csv(path, "y", BINARY_CLASSIFICATION)
    # "no" < "yes" so no -> 0, yes -> 1
    assert np.array_equal(ds.target, [1.0, 0.0, 1.0])


def test_nonbinary_labels_rejected(tmp_path):
    path = _write(tmp_path, "a,y\n1,x\n2,y\n3,z\n")
    with pytest.raises(NonBinaryLabels):
        load_csv(path, "y", BINARY_CLASSIFICATION)


def test_missing_target_column(tmp_path):
    path = _write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(MissingColumn):
        load_csv(path, "zzz", REGRESSION)


def test_unparseable_regression_target(tmp_path):
    path = _write(tmp_path, "a,y\n1,2\n3,oops\n")
    with pytest.raises(ParseError):
        load_csv(path, "y", REGRESSION)


def test_empty_after_cleaning(tmp_path):
    path = _write(tmp_path, "a,y\n,1\n2,\n")
    with pytest.raises(EmptyAfterCleaning):
        load_csv(path, "y", REGRESSION)


def test_round_trip_through_to_csv(tmp_path):
    ds = gen_friedman1(50, 6, 0.5, seed=3)
    path = str(tmp_path / "rt.csv")
    to_csv(ds, path)
    back = load_csv(path, "y", REGRESSION)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.target, ds.target)


# -- split -------------------------------------------------------------------

def test_split_sizes_and_coverage():
    spl = split(1000, (0.7, 0.15, 0.15), seed=0)
    assert spl.validation.shape[0] == 150 and spl.test.shape[0] == 150
    assert spl.train.shape[0] == 700
    together = np.concatenate([spl.train, spl.validation, spl.test])
    assert np.array_equal(np.sort(together), np.arange(1000))


def test_split_deterministic_and_seed_sensitive():
    a = split(100, (0.7, 0.15, 0.15), seed=5)
    b = split(100, (0.7, 0.15, 0.15), seed=5)
    c = split(100, (0.7, 0.15, 0.15), seed=6)
    assert np.array_equal(a.train, b.train)
    assert not np.array_equal(a.train, c.train)


def test_split_floor_allocation_remainder_to_train():
    spl = split(10, (0.34, 0.33, 0.33), seed=0)
    # floor(3.3) = 3 to each of val/test, remainder 4 to train
    assert spl.validation.shape[0] == 3
    assert spl.test.shape[0] == 3
    assert spl.train.shape[0] == 4


def test_split_invalid_ratios():
    with pytest.raises(InvalidRatios):
        split(100, (0.5, 0.5, 0.5), seed=0)
    with pytest.raises(InvalidRatios):
        split(100, (1.0, 0.0, 0.0), seed=0)
    with pytest.raises(TooFewRows):
        split(2, (0.7, 0.15, 0.15), seed=0)


# -- friedman1 ----------------------------------------------------------------

def test_friedman1_matches_formula_noise_free():
    ds = gen_friedman1(100, 7, 0.0, seed=1)
    x = ds.features
    want = (10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
            + 20.0 * (x[:, 2] - 0.5) ** 2 + 10.0 * x[:, 3] + 5.0 * x[:, 4])
    assert np.allclose(ds.target, want, rtol=0, atol=0)
    assert np.array_equal(ds.target, friedman1_formula(x))


def test_friedman1_noise_has_requested_scale():
    clean = gen_friedman1(4000, 5, 0.0, seed=2).target
    noisy = gen_friedman1(4000, 5, 2.0, seed=2).target
    resid = noisy - clean
    assert abs(resid.std() - 2.0) < 0.1
    assert abs(resid.mean()) < 0.1


def test_friedman1_extra_columns_are_inert():
    a = gen_friedman1(50, 5, 0.0, seed=4).features
    assert ((a >= 0) & (a < 1)).all()
    with pytest.raises(DimensionTooSmall):
        gen_friedman1(50, 4, 0.0, seed=4)
    with pytest.raises(TooFewRows):
        gen_friedman1(1, 5, 0.0, seed=4)


def test_friedman1_deterministic():
    a = gen_friedman1(30, 6, 1.0, seed=9)
    b = gen_friedman1(30, 6, 1.0, seed=9)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.target, b.target)


# -- standardize ---------------------------------------------------------------

def test_standardize_centers_and_scales():
    X = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]])
    Xs, stats = standardize(X)
    assert np.allclose(Xs.mean(axis=0), 0.0, atol=1e-15)
    assert np.allclose(Xs.std(axis=0), 1.0, atol=1e-15)
    assert np.allclose(stats.mean, [3.0, 30.0])


def test_standardize_reuses_stats():
    X = np.array([[1.0], [3.0]])
    _, stats = standardize(X)
    Xq, _ = standardize(np.array([[5.0]]), stats)
    assert np.allclose(Xq, [[(5.0 - 2.0) / 1.0]])


def test_standardize_constant_column_passthrough():
    X = np.array([[7.0, 1.0], [7.0, 2.0], [7.0, 3.0]])
    Xs, stats = standardize(X)
    assert np.array_equal(Xs[:, 0], X[:, 0])
    assert stats.std[0] == 0.0


def test_standardize_column_mismatch():
    _, stats = standardize(np.ones((3, 2)))
    with pytest.raises(ColumnMismatch):
        standardize(np.ones((3, 5)), stats)


def test_scaling_stats_shape():
    stats = ScalingStats(mean=np.zeros(3), std=np.ones(3))
    Xs, _ = standardize(np.ones((2, 3)), stats)
    assert Xs.shape == (2, 3)
