"""Dataset ingestion, encoding, splitting, and synthetic generation.

CSV ingestion is deliberately rigid: RFC-4180 with a header row, rows with
any missing cell dropped, categorical columns one-hot encoded, binary
labels mapped lexicographically to {0,1}.  Everything downstream consumes
the numeric-encoded ``Dataset``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ColumnMismatch,
    DimensionTooSmall,
    EmptyAfterCleaning,
    InvalidRatios,
    MissingColumn,
    NonBinaryLabels,
    ParseError,
    TooFewRows,
)
from .rng import SplitMix64

REGRESSION = "regression"
BINARY_CLASSIFICATION = "binary_classification"
TASKS = (REGRESSION, BINARY_CLASSIFICATION)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass
class Dataset:
    """Numeric-encoded learning problem.

    features : (N, d) float64 matrix, post one-hot encoding
    target   : (N,) float64 vector; {0,1} for binary classification
    task     : REGRESSION or BINARY_CLASSIFICATION
    feature_names : post-encoding column names
    column_kinds  : pre-encoding schema, NUMERIC/CATEGORICAL per raw column
    """

    features: np.ndarray
    target: np.ndarray
    task: str
    feature_names: list = field(default_factory=list)
    column_kinds: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.target = np.ascontiguousarray(self.target, dtype=np.float64)
        n, d = self.features.shape
        if n < 2 or d < 1:
            raise EmptyAfterCleaning(f"need N >= 2 and d >= 1, got {n}x{d}")
        if not (np.isfinite(self.features).all() and np.isfinite(self.target).all()):
            raise ValueError("non-finite values in dataset")
        if self.task == BINARY_CLASSIFICATION:
            bad = ~np.isin(self.target, (0.0, 1.0))
            if bad.any():
                raise NonBinaryLabels("classification targets must be 0.0 or 1.0")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


@dataclass
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


@dataclass
class ScalingStats:
    """Per-column train-split mean/std persisted into distilled models."""

    mean: np.ndarray
    std: np.ndarray


def load_csv(path, target_column, task):
    """Load an RFC-4180 CSV with header into a Dataset.

    Rows containing any empty cell are dropped.  Feature columns where every
    retained cell parses as a float are numeric; all others are categorical
    and get one-hot encoded (columns named "col=value", values in
    lexicographic order).  Binary labels map lexicographically to {0,1}.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterCleaning("empty file") from None
        raw_rows = [row for row in reader if row]
    if target_column not in header:
        raise MissingColumn(target_column)
    t_idx = header.index(target_column)

    rows = [r for r in raw_rows if len(r) == len(header) and all(c != "" for c in r)]
    if len(rows) < 2:
        raise EmptyAfterCleaning(f"{len(rows)} complete rows")

    feat_cols = [j for j in range(len(header)) if j != t_idx]

    # Target parsing / label mapping.
    if task == REGRESSION:
        target = np.empty(len(rows))
        for i, r in enumerate(rows):
            try:
                target[i] = float(r[t_idx])
            except ValueError:
                raise ParseError(i, target_column) from None
    else:
        labels = sorted({r[t_idx] for r in rows})
        if len(labels) != 2:
            raise NonBinaryLabels(f"found {len(labels)} distinct labels")
        target = np.array([float(labels.index(r[t_idx])) for r in rows])

    # Column kind inference, then encoding.
    column_kinds = []
    encoded = []
    feature_names = []
    for j in feat_cols:
        cells = [r[j] for r in rows]
        try:
            col = np.array([float(c) for c in cells])
            kind = NUMERIC
        except ValueError:
            col = None
            kind = CATEGORICAL
        column_kinds.append(kind)
        if kind == NUMERIC:
            encoded.append(col)
            feature_names.append(header[j])
        else:
            for value in sorted(set(cells)):
                encoded.append(np.array([1.0 if c == value else 0.0 for c in cells]))
                feature_names.append(f"{header[j]}={value}")

    features = np.column_stack(encoded)
    return Dataset(features, target, task, feature_names, column_kinds)


def split(n, ratios, seed):
    """Deterministic train/validation/test partition of range(n).

    Sizes are floor-allocated from the validation and test ratios with the
    remainder assigned to train; the permutation is a Fisher-Yates shuffle
    of 0..n-1 driven by SplitMix64(seed).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(str(ratios))
    if n < 3:
        raise TooFewRows(f"n={n}")
    n_val = int(ratios[1] * n)
    n_test = int(ratios[2] * n)
    n_train = n - n_val - n_test
    perm = SplitMix64(seed).permutation(n)
    return SplitIndices(
        train=np.sort(perm[:n_train]),
        validation=np.sort(perm[n_train:n_train + n_val]),
        test=np.sort(perm[n_train + n_val:]),
        seed=seed,
    )


def gen_friedman1(n, d, noise_sd, seed):
    """Friedman #1 synthetic regression dataset.

    x ~ U[0,1]^d (row-major draw order), and
    y = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5 + eps,
    eps ~ N(0, noise_sd^2).  Requires d >= 5; extra columns are noise.
    """
    if d < 5:
        raise DimensionTooSmall(f"d={d} < 5")
    if n < 2:
        raise TooFewRows(f"n={n}")
    rng = SplitMix64(seed)
    X = rng.uniform(n * d).reshape(n, d)
    y = friedman1_formula(X)
    if noise_sd > 0:
        y = y + noise_sd * rng.normal(n)
    names = [f"x{j + 1}" for j in range(d)]
    return Dataset(X, y, REGRESSION, names, [NUMERIC] * d)


def friedman1_formula(X):
    """Noise-free Friedman #1 response, exposed for oracle checks."""
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def standardize(features, stats=None):
    """Per-column (x - mean)/std with population std.

    With stats=None, statistics are computed from `features` (call this on
    the train split) and returned for reuse; zero-variance columns are
    recorded with std 0 and passed through unshifted and unscaled.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if stats is None:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        stats = ScalingStats(mean=mean, std=std)
    elif stats.mean.shape[0] != X.shape[1]:
        raise ColumnMismatch(f"{stats.mean.shape[0]} stats columns vs {X.shape[1]} data columns")
    keep = stats.std == 0.0
    shift = np.where(keep, 0.0, stats.mean)
    scale = np.where(keep, 1.0, stats.std)
    return (X - shift) / scale, stats


def to_csv(dataset, path, target_name="y"):
    """Write a Dataset back out in the shape load_csv accepts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [target_name])
        for x, t in zip(dataset.features, dataset.target):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(t))])
