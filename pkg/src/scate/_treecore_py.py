"""Pure-numpy fallback for the hot tree kernels.

This module and the compiled `_treecore` expose the same four functions and
must produce bit-identical results: prefix sums are sequential (np.cumsum
accumulates left to right), split scores use the same expression shapes,
the per-node feature draws walk the same SplitMix64 stream, and kernel
entries accumulate in the same (tree, leaf) order.  tests/test_backends.py
enforces the equivalence.
"""

import numpy as np

from .rng import GOLDEN, MASK64, bounded, mix64

BACKEND_NAME = "fallback"


def grow(X, y, order, max_depth, min_samples_leaf, mtry, balance_gamma, seed):
    """Grow one regression tree.

    Parameters
    ----------
    X : (n, d) float64, C-contiguous — the tree's sample rows.
    y : (n,) float64 targets.
    order : (d, n) int64 — row `f` holds 0..n-1 stably sorted by X[:, f].
        Mutated during growth (callers pass a fresh copy).
    max_depth, min_samples_leaf, mtry : ints (max_depth already resolved).
    balance_gamma : minimum child fraction; 0 disables.
    seed : u64 stream seed for per-node feature subsampling.

    Returns (feature, threshold, left, right, value, n_node) arrays.
    """
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.full(cap, np.nan)
    n_node = np.zeros(cap, dtype=np.int64)
    mark = np.zeros(n, dtype=bool)
    state = seed & MASK64

    n_nodes = 1
    stack = [(0, 0, n, 0)]
    while stack:
        node, start, end, depth = stack.pop()
        m = end - start
        seg0 = order[0, start:end]
        ys = y[seg0]
        cs0 = np.cumsum(ys)
        cs20 = np.cumsum(ys * ys)
        node_sum = cs0[-1]
        node_sum2 = cs20[-1]
        n_node[node] = m
        value[node] = node_sum / m
        if depth >= max_depth or m < 2 * min_samples_leaf or ys.min() == ys.max():
            continue

        if mtry >= d:
            feats = np.arange(d)
        else:
            arr = np.arange(d)
            for i in range(mtry):
                state = (state + GOLDEN) & MASK64
                j = i + bounded(mix64(state), d - i)
                arr[i], arr[j] = arr[j], arr[i]
            feats = np.sort(arr[:mtry])

        gamma_need = balance_gamma * m - 1e-9
        best_score = np.inf
        best_f = -1
        best_p = -1
        best_thr = 0.0
        nl = np.arange(1, m, dtype=np.float64)
        nr = np.float64(m) - nl
        counts = np.arange(1, m)
        for f in feats:
            seg = order[f, start:end]
            v = X[seg, f]
            if v[0] == v[-1]:
                continue
            if f == 0:
                cs, cs2 = cs0, cs20
            else:
                yf = y[seg]
                cs = np.cumsum(yf)
                cs2 = np.cumsum(yf * yf)
            s = cs[:-1]
            s2 = cs2[:-1]
            score = (s2 - s * s / nl) + ((node_sum2 - s2) - (node_sum - s) * (node_sum - s) / nr)
            ok = v[1:] > v[:-1]
            ok &= (counts >= min_samples_leaf) & (m - counts >= min_samples_leaf)
            if balance_gamma > 0.0:
                ok &= (nl >= gamma_need) & (nr >= gamma_need)
            if not ok.any():
                continue
            masked = np.where(ok, score, np.inf)
            p = int(np.argmin(masked))
            if masked[p] < best_score:
                a = v[p]
                b = v[p + 1]
                thr = a + (b - a) / 2
                if thr >= b:  # midpoint rounded up to b would break <= routing
                    thr = a
                best_score = masked[p]
                best_f = f
                best_p = p
                best_thr = thr

        if best_f < 0:
            continue  # no legal split anywhere: leaf

        nl_count = best_p + 1
        lrows = order[best_f, start:start + nl_count]
        mark[lrows] = True
        for f in range(d):
            seg = order[f, start:end]
            msk = mark[seg]
            order[f, start:end] = np.concatenate([seg[msk], seg[~msk]])
        mark[order[best_f, start:start + nl_count]] = False

        feature[node] = best_f
        threshold[node] = best_thr
        value[node] = np.nan
        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack.append((rid, start + nl_count, end, depth + 1))
        stack.append((lid, start, start + nl_count, depth + 1))

    sl = slice(0, n_nodes)
    return (feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
            right[sl].copy(), value[sl].copy(), n_node[sl].copy())


def route(feature, threshold, left, right, X):
    """Leaf node id for every row of X (vectorized level walk)."""
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        f = feature[nd]
        go_left = X[active, f] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def accumulate_kernel(K, leaf_mat):
    """Add each tree's leaf-normalized co-membership block to K in place.

    K[i, j] += 1/(B*m) for every same-leaf pair per tree, trees in order.
    """
    B = leaf_mat.shape[0]
    for b in range(B):
        leaves = leaf_mat[b]
        order = np.argsort(leaves, kind="stable")
        bounds = np.flatnonzero(np.diff(leaves[order])) + 1
        for rows in np.split(order, bounds):
            K[np.ix_(rows, rows)] += 1.0 / (B * rows.size)


def accumulate_cross(Kc, train_leaf, query_leaf):
    """Add per-tree cross-kernel weights: Kc[q, j] += 1/(B*m_leaf(q))."""
    B = train_leaf.shape[0]
    for b in range(B):
        tl, ql = train_leaf[b], query_leaf[b]
        order = np.argsort(tl, kind="stable")
        sorted_leaves = tl[order]
        starts = np.r_[0, np.flatnonzero(np.diff(sorted_leaves)) + 1]
        groups = {int(sorted_leaves[s]): rows
                  for s, rows in zip(starts, np.split(order, starts[1:]))}
        for leaf in np.unique(ql):
            rows = groups.get(int(leaf))
            if rows is None:
                raise AssertionError("query landed in a leaf with no training rows")
            qrows = np.flatnonzero(ql == leaf)
            Kc[np.ix_(qrows, rows)] += 1.0 / (B * rows.size)
