# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot kernels: tree growth, leaf routing, kernel accumulation.

Arithmetic must remain bit-identical to scate._treecore_py (the fallback):
sequential prefix sums, identical split-score expression shapes, the same
SplitMix64 draws per node, the same (tree, leaf) accumulation order.  The
extension is compiled with -ffp-contract=off so no FMA contraction can
perturb the shared expressions.
"""

import numpy as np

BACKEND_NAME = "compiled"

cdef extern from *:
    """
    #include <stdint.h>
    static const uint64_t SCATE_GOLDEN = 0x9E3779B97F4A7C15ULL;
    static inline uint64_t scate_mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    static inline uint64_t scate_bounded(uint64_t x, uint64_t b) {
        uint64_t xh = x >> 32, xl = x & 0xFFFFFFFFULL;
        return (xh * b + ((xl * b) >> 32)) >> 32;
    }
    """
    ctypedef unsigned long long uint64_t
    uint64_t SCATE_GOLDEN
    uint64_t scate_mix64(uint64_t z)
    uint64_t scate_bounded(uint64_t x, uint64_t b)

ctypedef long long i64


def grow(double[:, ::1] X, double[::1] y, long long[:, ::1] order,
         long long max_depth, long long min_samples_leaf, long long mtry,
         double balance_gamma, object seed):
    """Grow one regression tree; see _treecore_py.grow for the contract."""
    cdef i64 n = X.shape[0]
    cdef i64 d = X.shape[1]
    cdef i64 cap = 2 * n + 1
    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.full(cap, np.nan)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.full(cap, np.nan)
    n_node_a = np.zeros(cap, dtype=np.int64)
    cdef i64[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef i64[::1] left = left_a
    cdef i64[::1] right = right_a
    cdef double[::1] value = value_a
    cdef i64[::1] n_node = n_node_a

    stack_a = np.zeros((n + 2, 4), dtype=np.int64)
    cdef i64[:, ::1] stack = stack_a
    tmpl_a = np.zeros(n, dtype=np.int64)
    tmpr_a = np.zeros(n, dtype=np.int64)
    cdef i64[::1] tmpl = tmpl_a
    cdef i64[::1] tmpr = tmpr_a
    mark_a = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] mark = mark_a
    perm_a = np.zeros(d, dtype=np.int64)
    cdef i64[::1] perm = perm_a

    cdef uint64_t state = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef i64 n_nodes = 1, top = 1
    cdef i64 node, start, end, depth, m, ii, i, j, f, fi, p, row, nfeats
    cdef i64 nl, nr, best_f, best_p, nl_count, li, ri, lid, rid, key
    cdef double yv, node_sum, node_sum2, ymin, ymax, gamma_need
    cdef double s, s2, a, bnext, sl, sr, score, best_score, best_thr, thr

    stack[0, 0] = 0; stack[0, 1] = 0; stack[0, 2] = n; stack[0, 3] = 0
    while top > 0:
        top -= 1
        node = stack[top, 0]; start = stack[top, 1]
        end = stack[top, 2]; depth = stack[top, 3]
        m = end - start

        node_sum = 0.0
        node_sum2 = 0.0
        ymin = y[order[0, start]]
        ymax = ymin
        for ii in range(start, end):
            yv = y[order[0, ii]]
            node_sum = node_sum + yv
            node_sum2 = node_sum2 + yv * yv
            if yv < ymin:
                ymin = yv
            if yv > ymax:
                ymax = yv
        n_node[node] = m
        value[node] = node_sum / m
        if depth >= max_depth or m < 2 * min_samples_leaf or ymin == ymax:
            continue

        if mtry >= d:
            nfeats = d
            for i in range(d):
                perm[i] = i
        else:
            nfeats = mtry
            for i in range(d):
                perm[i] = i
            for i in range(mtry):
                state = state + SCATE_GOLDEN
                j = i + <i64> scate_bounded(scate_mix64(state), <uint64_t> (d - i))
                key = perm[i]; perm[i] = perm[j]; perm[j] = key
            # insertion sort the chosen mtry features ascending
            for i in range(1, mtry):
                key = perm[i]
                j = i - 1
                while j >= 0 and perm[j] > key:
                    perm[j + 1] = perm[j]
                    j -= 1
                perm[j + 1] = key

        gamma_need = balance_gamma * m - 1e-9
        best_score = np.inf
        best_f = -1
        best_p = -1
        best_thr = 0.0
        for fi in range(nfeats):
            f = perm[fi]
            if X[order[f, start], f] == X[order[f, end - 1], f]:
                continue
            s = 0.0
            s2 = 0.0
            for p in range(m - 1):
                row = order[f, start + p]
                yv = y[row]
                s = s + yv
                s2 = s2 + yv * yv
                a = X[row, f]
                bnext = X[order[f, start + p + 1], f]
                if not (a < bnext):
                    continue
                nl = p + 1
                nr = m - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                if balance_gamma > 0.0:
                    if (<double> nl) < gamma_need or (<double> nr) < gamma_need:
                        continue
                sl = s2 - s * s / (<double> nl)
                sr = (node_sum2 - s2) - (node_sum - s) * (node_sum - s) / (<double> nr)
                score = sl + sr
                if score < best_score:
                    thr = a + (bnext - a) / 2
                    if thr >= bnext:
                        thr = a
                    best_score = score
                    best_f = f
                    best_p = p
                    best_thr = thr

        if best_f < 0:
            continue

        nl_count = best_p + 1
        for ii in range(start, start + nl_count):
            mark[order[best_f, ii]] = 1
        for f in range(d):
            li = 0
            ri = 0
            for ii in range(start, end):
                row = order[f, ii]
                if mark[row]:
                    tmpl[li] = row
                    li += 1
                else:
                    tmpr[ri] = row
                    ri += 1
            for ii in range(li):
                order[f, start + ii] = tmpl[ii]
            for ii in range(ri):
                order[f, start + nl_count + ii] = tmpr[ii]
        for ii in range(start, start + nl_count):
            mark[order[best_f, ii]] = 0

        feature[node] = best_f
        threshold[node] = best_thr
        value[node] = np.nan
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack[top, 0] = rid; stack[top, 1] = start + nl_count
        stack[top, 2] = end; stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid; stack[top, 1] = start
        stack[top, 2] = start + nl_count; stack[top, 3] = depth + 1
        top += 1

    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(),
            left_a[:n_nodes].copy(), right_a[:n_nodes].copy(),
            value_a[:n_nodes].copy(), n_node_a[:n_nodes].copy())


def route(long long[::1] feature, double[::1] threshold, long long[::1] left,
          long long[::1] right, double[:, ::1] X):
    """Leaf node id for every row of X."""
    cdef i64 q, node, nq = X.shape[0]
    out_a = np.zeros(nq, dtype=np.int64)
    cdef i64[::1] out = out_a
    for q in range(nq):
        node = 0
        while feature[node] >= 0:
            if X[q, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[q] = node
    return out_a


def accumulate_kernel(double[:, ::1] K, long long[:, ::1] leaf_mat):
    """K[i, j] += 1/(B*m) for same-leaf pairs, per tree in order."""
    cdef i64 B = leaf_mat.shape[0]
    cdef i64 N = leaf_mat.shape[1]
    cdef i64 b, i, j, leaf, maxid, g, lo, hi, gi, gj
    cdef double w
    cdef i64 idcap = <i64> np.max(leaf_mat) + 2
    counts_a = np.zeros(idcap, dtype=np.int64)
    offs_a = np.zeros(idcap + 1, dtype=np.int64)
    grouped_a = np.zeros(N, dtype=np.int64)
    cdef i64[::1] counts = counts_a
    cdef i64[::1] offs = offs_a
    cdef i64[::1] grouped = grouped_a
    for b in range(B):
        maxid = 0
        for i in range(N):
            leaf = leaf_mat[b, i]
            counts[leaf] += 1
            if leaf > maxid:
                maxid = leaf
        offs[0] = 0
        for g in range(maxid + 1):
            offs[g + 1] = offs[g] + counts[g]
        for i in range(N):
            leaf = leaf_mat[b, i]
            grouped[offs[leaf]] = i
            offs[leaf] += 1
        # offs[g] now marks the END of group g
        lo = 0
        for g in range(maxid + 1):
            hi = offs[g]
            if hi > lo:
                w = 1.0 / (B * (hi - lo))
                for i in range(lo, hi):
                    gi = grouped[i]
                    for j in range(lo, hi):
                        K[gi, grouped[j]] += w
                lo = hi
        for g in range(maxid + 1):
            counts[g] = 0


def accumulate_cross(double[:, ::1] Kc, long long[:, ::1] train_leaf,
                     long long[:, ::1] query_leaf):
    """Kc[q, j] += 1/(B*m_leaf(q)) over the query leaf's training rows."""
    cdef i64 B = train_leaf.shape[0]
    cdef i64 N = train_leaf.shape[1]
    cdef i64 Q = query_leaf.shape[1]
    cdef i64 b, i, q, leaf, maxid, g, lo, hi
    cdef double w
    cdef i64 idcap = <i64> max(np.max(train_leaf), np.max(query_leaf)) + 2
    counts_a = np.zeros(idcap, dtype=np.int64)
    starts_a = np.zeros(idcap + 1, dtype=np.int64)
    offs_a = np.zeros(idcap + 1, dtype=np.int64)
    grouped_a = np.zeros(N, dtype=np.int64)
    cdef i64[::1] counts = counts_a
    cdef i64[::1] starts = starts_a
    cdef i64[::1] offs = offs_a
    cdef i64[::1] grouped = grouped_a
    for b in range(B):
        maxid = 0
        for i in range(N):
            leaf = train_leaf[b, i]
            counts[leaf] += 1
            if leaf > maxid:
                maxid = leaf
        starts[0] = 0
        for g in range(maxid + 1):
            starts[g + 1] = starts[g] + counts[g]
            offs[g] = starts[g]
        for i in range(N):
            leaf = train_leaf[b, i]
            grouped[offs[leaf]] = i
            offs[leaf] += 1
        for q in range(Q):
            leaf = query_leaf[b, q]
            if leaf > maxid or counts[leaf] == 0:
                raise AssertionError("query landed in a leaf with no training rows")
            lo = starts[leaf]
            hi = starts[leaf + 1]
            w = 1.0 / (B * (hi - lo))
            for i in range(lo, hi):
                Kc[q, grouped[i]] += w
        for g in range(maxid + 1):
            counts[g] = 0
