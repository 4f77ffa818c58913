"""Random forests and gradient-boosted trees over the CART core.

Row sampling happens here, not in the tree fitter, so the per-tree RNG
consumption is explicit: tree b of a forest draws from the substream
derive(seed, "tree", b), boosting round b from derive(seed, "round", b).
"""

from dataclasses import dataclass, field

import numpy as np

from .cart import Tree, TreeParams, fit_tree, honest_relabel, leaf_ids
from .data import Dataset
from .errors import DimensionMismatch, TooFewSamples
from .rng import SplitMix64, derive


@dataclass
class ForestParams:
    n_trees: int = 250
    tree: TreeParams = field(default_factory=lambda: TreeParams(max_depth=15))
    seed: int = 0


@dataclass
class GbmParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    tree: TreeParams = field(default_factory=lambda: TreeParams(max_depth=6, bootstrap=False))
    seed: int = 0


@dataclass
class Forest:
    trees: list
    tree_rows: list            # per tree: sorted row indices the kernel averages over
    params: ForestParams
    d: int
    honest: bool
    relabeled_on_full_train: bool

    @property
    def ref(self):
        tp = self.params.tree
        tag = "-honest" if self.honest else ""
        return f"rf-{self.params.seed}-{len(self.trees)}x{tp.max_depth}{tag}"


@dataclass
class GbmModel:
    trees: list
    learning_rate: float
    base_score: float
    params: GbmParams
    d: int


def _as_xy(train):
    if isinstance(train, Dataset):
        return train.features, train.target
    X, y = train
    return np.ascontiguousarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def _draw_rows(rng, n, tp):
    """Row multiset for one tree: bootstrap, else subsample, else all rows."""
    if tp.bootstrap:
        return np.sort(rng.integers(n, n))
    if tp.subsample_fraction < 1.0:
        m = max(2, int(round(tp.subsample_fraction * n)))
        return np.sort(rng.choice_without_replacement(n, m))
    return np.arange(n, dtype=np.int64)


def fit_rf(train, params=None):
    """Fit a regression forest; predictions average per-tree leaf values.

    Default mode refits every leaf value as the mean of the *full* training
    rows it captures, so the forest is exactly the linear smoother given by
    its leaf-membership kernel.  Honest mode instead splits each tree's rows
    into a structure fold (grows the tree) and a label fold (sets the
    values), and the kernel averages over the deduplicated label fold.
    """
    params = params or ForestParams()
    X, y = _as_xy(train)
    n = X.shape[0]
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    tp = params.tree
    trees, tree_rows = [], []
    for b in range(params.n_trees):
        rng = SplitMix64(derive(params.seed, "tree", b))
        rows = _draw_rows(rng, n, tp)
        if tp.honest:
            perm = rng.permutation(rows.shape[0])
            half = rows.shape[0] // 2
            struct = rows[perm[:rows.shape[0] - half]]
            label = rows[perm[rows.shape[0] - half:]]
            if label.shape[0] == 0:
                raise TooFewSamples("honest mode needs at least 2 rows per tree")
            tree = fit_tree(X[struct], y[struct], tp, rng)
            label_unique = np.unique(label)
            tree = honest_relabel(tree, X[label_unique], y[label_unique])
            trees.append(tree)
            tree_rows.append(label_unique)
        else:
            tree = fit_tree(X[rows], y[rows], tp, rng)
            tree = honest_relabel(tree, X, y)  # full-train leaf means
            trees.append(tree)
            tree_rows.append(np.arange(n, dtype=np.int64))
    return Forest(trees, tree_rows, params, X.shape[1], tp.honest, not tp.honest)


def predict_rf(forest, x):
    """Mean of per-tree leaf values; vector in, scalar out (or matrix in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != forest.d:
        raise DimensionMismatch(f"x has {X.shape[1]} features, forest expects {forest.d}")
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += tree.value[leaf_ids(tree, X)]
    acc /= len(forest.trees)
    return float(acc[0]) if single else acc


def fit_gbm(train, params=None):
    """Least-squares gradient boosting: f_b = f_{b-1} + eta * tree(residuals).

    Every round fits on the full training rows (no row sampling) so the
    boosting operator is well-defined on exactly the training set.
    """
    params = params or GbmParams()
    X, y = _as_xy(train)
    n = X.shape[0]
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0.0 < params.learning_rate <= 1.0:
        raise ValueError(f"learning_rate={params.learning_rate} outside (0, 1]")
    eta = params.learning_rate
    f = np.zeros(n)
    trees = []
    for b in range(params.n_trees):
        rng = SplitMix64(derive(params.seed, "round", b))
        tree = fit_tree(X, y - f, params.tree, rng)
        trees.append(tree)
        f = f + eta * tree.value[leaf_ids(tree, X)]
    return GbmModel(trees, eta, 0.0, params, X.shape[1])


def predict_gbm(model, x):
    """base_score + eta * sum of per-round leaf values, accumulated in
    training round order (bitwise identical to the fit-time trajectory)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.d:
        raise DimensionMismatch(f"x has {X.shape[1]} features, model expects {model.d}")
    acc = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        acc = acc + model.learning_rate * tree.value[leaf_ids(tree, X)]
    return float(acc[0]) if single else acc
