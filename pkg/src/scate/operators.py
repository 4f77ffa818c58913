"""Smoothing operators induced by fitted ensembles.

A default-mode forest is exactly the linear smoother K with
K_ij = (1/B) sum_b 1{i, j share a leaf} / |leaf_b(i)|, leaf populations
counted over the training rows; K is symmetric, doubly stochastic and PSD.
Honest forests normalize over each tree's deduplicated label fold (with
ancestor fallback for label-empty leaves) and keep only row-stochasticity.

A GBM is the linear smoother S_B from the recursion
S_b = S_{b-1} + eta * (T_b - P_b R_b), where T_b is the tree-b averaging
operator, P_b the leaf one-hot matrix and R_b the per-leaf row means of
S_{b-1}; the per-round (leaves, counts, R_b) are retained so the same
recursion extends to out-of-sample rows.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .cart import _core, leaf_ids, subtree_label_stats, tree_parents
from .errors import (KernelInvariantViolated, MatrixFormatError,
                     ModelDataMismatch, NotFitted)
from .rng import SplitMix64, derive

MATRIX_MAGIC = b"SCTEMAT0"


@dataclass
class KernelMatrix:
    values: np.ndarray
    n: int
    forest_ref: str
    honest: bool


@dataclass
class RoundState:
    leaves: np.ndarray      # train-row leaf ids in this round's tree
    leaf_index: np.ndarray  # sorted unique leaf ids
    counts: np.ndarray      # training rows per leaf
    row_means: np.ndarray   # R_b: per-leaf mean of the previous S rows


@dataclass
class SmootherState:
    matrix: np.ndarray
    rounds: list
    learning_rate: float
    base_score: float


class _HonestGroups:
    """Per-tree map from any leaf to (label-row set, 1/count).

    label_positions are positions into the kernel's row set.  A leaf with no
    label rows resolves to the nearest ancestor whose subtree holds some,
    and its group is that subtree's label rows.
    """

    def __init__(self, tree, label_positions, label_leaves):
        self.tree = tree
        self.positions = label_positions
        self.label_leaves = label_leaves
        self.counts, _ = subtree_label_stats(
            tree, label_leaves, np.zeros(label_positions.shape[0]))
        self.parent = tree_parents(tree)
        self._cache = {}

    def effective(self, leaf):
        node = leaf
        while self.counts[node] == 0:
            node = self.parent[node]
            if node < 0:
                raise ModelDataMismatch("tree has an empty label fold")
        if node not in self._cache:
            if self.tree.feature[node] < 0:
                rows = self.positions[self.label_leaves == node]
            else:
                # label rows whose leaf lies in node's subtree; walk each
                # distinct leaf upward (subtree ids are not contiguous)
                keep = np.zeros(self.label_leaves.shape[0], dtype=bool)
                for lf in np.unique(self.label_leaves):
                    q = lf
                    while q >= 0 and q != node:
                        q = self.parent[q]
                    if q == node:
                        keep |= self.label_leaves == lf
                rows = self.positions[keep]
            self._cache[node] = (rows, 1.0 / rows.shape[0])
        return self._cache[node]


def _honest_tree_groups(tree, global_label_rows, train_leaves, row_indices):
    """Restrict a tree's label fold to the kernel's row set and build groups."""
    pos_of = {int(g): p for p, g in enumerate(row_indices)}
    positions = np.array(sorted(pos_of[int(g)] for g in global_label_rows
                                if int(g) in pos_of), dtype=np.int64)
    if positions.shape[0] == 0:
        raise ModelDataMismatch("tree label fold has no rows in the kernel row set")
    return _HonestGroups(tree, positions, train_leaves[positions])


def rf_kernel_matrix(forest, X_train, row_indices=None, validate=True):
    """The forest's smoothing kernel over the given training rows.

    X_train must be the matrix the forest was fitted on or, for operator
    subsampling, a row-subset of it — the kernel is then the smoother of
    the forest restricted to those rows.  `row_indices` maps the rows of
    X_train back to the fit-time row numbering (needed only by honest
    forests, whose normalization sets are the per-tree label folds).
    """
    X_train = np.ascontiguousarray(X_train, dtype=np.float64)
    n = X_train.shape[0]
    B = len(forest.trees)
    K = np.zeros((n, n))
    if not forest.honest:
        leaf_mat = np.ascontiguousarray(
            np.stack([leaf_ids(t, X_train) for t in forest.trees]))
        _core.accumulate_kernel(K, leaf_mat)
    else:
        if row_indices is None:
            row_indices = np.arange(n, dtype=np.int64)
        for tree, rows in zip(forest.trees, forest.tree_rows):
            train_leaves = leaf_ids(tree, X_train)
            groups = _honest_tree_groups(tree, rows, train_leaves, row_indices)
            for leaf in np.unique(train_leaves):
                qrows = np.flatnonzero(train_leaves == leaf)
                grows, w = groups.effective(leaf)
                K[np.ix_(qrows, grows)] += w / B
    kernel = KernelMatrix(K, n, forest.ref, forest.honest)
    if validate:
        validate_kernel(kernel)
    return kernel


def validate_kernel(kernel, eig_tol=1e-8):
    """Assert the structural invariants; honest kernels are only checked
    for the row-stochastic subset."""
    K, n = kernel.values, kernel.n
    if K.min() < 0.0 or K.max() > 1.0 + 1e-12:
        raise KernelInvariantViolated("entries outside [0, 1]")
    rows = K.sum(axis=1)
    if np.abs(rows - 1.0).max() > 1e-10:
        raise KernelInvariantViolated(
            f"row sums off by {np.abs(rows - 1.0).max():.3e}")
    if kernel.honest:
        return
    asym = np.abs(K - K.T).max()
    if asym > 1e-12:
        raise KernelInvariantViolated(f"asymmetry {asym:.3e}")
    cols = K.sum(axis=0)
    if np.abs(cols - 1.0).max() > 1e-10:
        raise KernelInvariantViolated(
            f"column sums off by {np.abs(cols - 1.0).max():.3e}")
    w = np.linalg.eigvalsh((K + K.T) / 2.0)
    if w[0] < -eig_tol:
        raise KernelInvariantViolated(f"negative eigenvalue {w[0]:.3e}")
    if w[-1] > 1.0 + eig_tol:
        raise KernelInvariantViolated(f"top eigenvalue {w[-1]:.6f} > 1")


def rf_kernel_cross(forest, X_train, X_query, row_indices=None):
    """Query-by-train kernel block: row q gives the weights the forest
    averages training targets with to predict X_query[q]."""
    X_train = np.ascontiguousarray(X_train, dtype=np.float64)
    X_query = np.ascontiguousarray(X_query, dtype=np.float64)
    nq, n = X_query.shape[0], X_train.shape[0]
    B = len(forest.trees)
    Kc = np.zeros((nq, n))
    if not forest.honest:
        train_mat = np.ascontiguousarray(
            np.stack([leaf_ids(t, X_train) for t in forest.trees]))
        query_mat = np.ascontiguousarray(
            np.stack([leaf_ids(t, X_query) for t in forest.trees]))
        _core.accumulate_cross(Kc, train_mat, query_mat)
    else:
        if row_indices is None:
            row_indices = np.arange(n, dtype=np.int64)
        for tree, rows in zip(forest.trees, forest.tree_rows):
            train_leaves = leaf_ids(tree, X_train)
            query_leaves = leaf_ids(tree, X_query)
            groups = _honest_tree_groups(tree, rows, train_leaves, row_indices)
            for leaf in np.unique(query_leaves):
                qrows = np.flatnonzero(query_leaves == leaf)
                grows, w = groups.effective(leaf)
                Kc[np.ix_(qrows, grows)] += w / B
    row_sums = Kc.sum(axis=1)
    if Kc.min() < 0.0 or np.abs(row_sums - 1.0).max() > 1e-10:
        raise KernelInvariantViolated("cross-kernel rows are not unit mass")
    return Kc


def _leaf_onehot(tree, X):
    leaves = leaf_ids(tree, X)
    uniq, idx = np.unique(leaves, return_inverse=True)
    P = np.zeros((X.shape[0], uniq.shape[0]))
    P[np.arange(X.shape[0]), idx] = 1.0
    return leaves, uniq, idx, P


def gbm_smoother_matrix(model, X_train):
    """Build S_B over the model's training rows, retaining per-round state.

    Raises ModelDataMismatch when some leaf of some round receives no row of
    X_train — the telltale of being handed the wrong matrix.
    """
    X_train = np.ascontiguousarray(X_train, dtype=np.float64)
    n = X_train.shape[0]
    if not model.trees:
        raise NotFitted("model has no trees")
    eta = model.learning_rate
    S = np.zeros((n, n))
    rounds = []
    for tree in model.trees:
        leaves, uniq, idx, P = _leaf_onehot(tree, X_train)
        n_leaves = int((tree.feature < 0).sum())
        if uniq.shape[0] != n_leaves:
            raise ModelDataMismatch(
                f"{n_leaves - uniq.shape[0]} leaves received no training row")
        counts = P.sum(axis=0)
        Pn = P / counts
        R = Pn.T @ S                      # per-leaf means of previous rows
        T = P @ Pn.T                      # this round's tree smoother
        S = S + eta * (T - P @ R)
        rounds.append(RoundState(leaves, uniq, counts, R))
    return SmootherState(S, rounds, eta, model.base_score)


def gbm_smoother_rows(state, model, X_query):
    """Extend the training-time recursion to out-of-sample rows: each round
    contributes eta * (tree row at x - retained R_b row of x's leaf)."""
    X_query = np.ascontiguousarray(X_query, dtype=np.float64)
    nq = X_query.shape[0]
    n = state.matrix.shape[0]
    Sq = np.zeros((nq, n))
    for tree, rnd in zip(model.trees, state.rounds):
        leaves_q = leaf_ids(tree, X_query)
        pos = np.searchsorted(rnd.leaf_index, leaves_q)
        if (pos >= rnd.leaf_index.shape[0]).any() or \
                (rnd.leaf_index[np.minimum(pos, rnd.leaf_index.shape[0] - 1)] != leaves_q).any():
            raise ModelDataMismatch("query landed in a leaf unseen at fit time")
        T_rows = np.zeros((nq, n))
        for i in range(nq):
            members = rnd.leaves == leaves_q[i]
            T_rows[i, members] = 1.0 / rnd.counts[pos[i]]
        Sq = Sq + state.learning_rate * (T_rows - rnd.row_means[pos])
    return Sq


def gbm_smoother_row(state, model, x):
    """Single-row convenience wrapper around gbm_smoother_rows."""
    x = np.asarray(x, dtype=np.float64)
    return gbm_smoother_rows(state, model, x[None, :])[0]


def subsample_operator(rows, cap, seed):
    """Deterministic without-replacement subsample of a row-index list."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape[0] <= cap:
        return rows
    rng = SplitMix64(derive(seed, "op-subsample"))
    pick = rng.choice_without_replacement(rows.shape[0], cap)
    return np.sort(rows[pick])


def write_matrix(path, M):
    """Dump a dense float64 matrix: 8-byte magic, u64 rows, u64 cols,
    row-major little-endian payload."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", M.shape[0], M.shape[1]))
        fh.write(M.astype("<f8").tobytes())


def read_matrix(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 24 or raw[:8] != MATRIX_MAGIC:
        raise MatrixFormatError("bad magic")
    rows, cols = struct.unpack_from("<QQ", raw, 8)
    expect = 24 + rows * cols * 8
    if len(raw) != expect:
        raise MatrixFormatError(f"expected {expect} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=24).reshape(rows, cols).copy()
