"""Greedy axis-aligned regression trees with honesty and balance controls.

Split search minimizes the summed child squared error (equivalent argmin to
weighted child MSE) over midpoint thresholds of consecutive distinct values,
with deterministic tie-breaking: lowest feature index, then lowest threshold.
The hot loops live in the compiled `_treecore` extension with a bit-identical
numpy fallback; the backend is picked once at import.  Set SCATE_PURE_PYTHON=1
to force the fallback.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyLabelFold, TooFewSamples

if os.environ.get("SCATE_PURE_PYTHON"):
    from . import _treecore_py as _core
else:
    try:
        from . import _treecore as _core
    except ImportError:  # extension not built; fall back to numpy
        from . import _treecore_py as _core


def backend_name():
    """'compiled' when the Cython core is active, else 'fallback'."""
    return _core.BACKEND_NAME


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None       # features sampled per split; None = all
    balance_gamma: float = 0.0    # minimum child fraction; 0 disables
    honest: bool = False          # structure/label folds (ensemble level)
    subsample_fraction: float = 1.0
    bootstrap: bool = True


@dataclass
class Tree:
    """Array-encoded binary regression tree; node 0 is the root.

    feature[i] == -1 marks a leaf; value is NaN at internal nodes; routing
    goes left iff x[feature] <= threshold.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    d: int

    @property
    def leaf_count(self):
        return int((self.feature < 0).sum())

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def to_json(self):
        """Debug dump; not a stability-guaranteed format."""
        return json.dumps({
            "d": self.d,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node_samples": self.n_node_samples.tolist(),
        })


def fit_tree(X, y, params, rng):
    """Fit one CART regression tree on (X, y).

    Sampling of rows (bootstrap/subsample/honesty) belongs to the ensemble
    layer; this fits on exactly the rows given.  `rng` supplies the stream
    for per-node feature subsampling (one u64 is always consumed, so caller
    streams stay aligned whether or not mtry < d).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 2 * params.min_samples_leaf or n < 2:
        raise TooFewSamples(f"n={n}, min_samples_leaf={params.min_samples_leaf}")
    if y.shape[0] != n:
        raise DimensionMismatch(f"{n} rows vs {y.shape[0]} targets")
    mtry = d if params.mtry is None else int(params.mtry)
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry={mtry} outside 1..{d}")
    if not 0.0 <= params.balance_gamma <= 0.5:
        raise ValueError(f"balance_gamma={params.balance_gamma} outside [0, 0.5]")
    node_seed = rng.next_u64()
    max_depth = 2**31 if params.max_depth is None else int(params.max_depth)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    raw = _core.grow(X, y, order, max_depth, int(params.min_samples_leaf),
                     mtry, float(params.balance_gamma), node_seed)
    return Tree(*raw, d=d)


def leaf_ids(tree, X):
    """Leaf node id for every row of the matrix X."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[1] != tree.d:
        raise DimensionMismatch(f"x has {X.shape[1]} features, tree expects {tree.d}")
    return np.asarray(_core.route(tree.feature, tree.threshold, tree.left, tree.right, X))


def leaf_id(tree, x):
    """Leaf node id for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("leaf_id expects a single vector")
    return int(leaf_ids(tree, x[None, :])[0])


def predict_tree(tree, x):
    """Leaf value at x; accepts a vector (scalar out) or matrix (vector out)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(tree.value[leaf_id(tree, x)])
    return tree.value[leaf_ids(tree, x)]


def tree_parents(tree):
    """parent[i] of every node; -1 at the root."""
    parent = np.full(tree.n_nodes, -1, dtype=np.int64)
    internal = np.flatnonzero(tree.feature >= 0)
    parent[tree.left[internal]] = internal
    parent[tree.right[internal]] = internal
    return parent


def subtree_label_stats(tree, label_leaves, y_label):
    """Per-node count and sum of label rows routed through each node."""
    cap = tree.n_nodes
    cnt = np.bincount(label_leaves, minlength=cap).astype(np.int64)
    sm = np.bincount(label_leaves, weights=y_label, minlength=cap)
    # children always carry higher ids than their parent, so one reverse
    # sweep aggregates subtree totals
    for node in range(cap - 1, -1, -1):
        if tree.feature[node] >= 0:
            l, r = tree.left[node], tree.right[node]
            cnt[node] += cnt[l] + cnt[r]
            sm[node] += sm[l] + sm[r]
    return cnt, sm


def honest_relabel(tree, X_label, y_label):
    """Replace leaf values by label-fold means, structure unchanged.

    A leaf receiving zero label rows inherits the mean of the nearest
    ancestor whose subtree contains at least one label row (ultimately the
    global label mean).
    """
    X_label = np.ascontiguousarray(X_label, dtype=np.float64)
    y_label = np.asarray(y_label, dtype=np.float64)
    if y_label.shape[0] == 0:
        raise EmptyLabelFold("label fold is empty")
    label_leaves = leaf_ids(tree, X_label)
    cnt, sm = subtree_label_stats(tree, label_leaves, y_label)
    parent = tree_parents(tree)
    value = tree.value.copy()
    for node in np.flatnonzero(tree.feature < 0):
        p = node
        while cnt[p] == 0:
            p = parent[p]
        value[node] = sm[p] / cnt[p]
    return Tree(tree.feature, tree.threshold, tree.left, tree.right,
                value, tree.n_node_samples, tree.d)
