"""numba-compiled kernels: CART growth, tree traversal, KNN distance statistic.

Must stay float-exact with backend_numpy: same operation order everywhere a
float is produced (gini terms accumulate over classes in index order, neighbor
distances sum over dimensions in index order, k-nearest sums ascend).
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
_PHI = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)


@njit(cache=True)
def _sm64(seed, counter):
    z = seed + _PHI * (counter + U64(1))
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True)
def build_tree(X, y, base_order, n_classes, seed, max_features,
               min_samples_leaf, min_samples_split, bootstrap):
    """Grow one CART tree on a bootstrap draw of (X, y).

    Returns flat arrays (feature, threshold, left, right, counts); feature -1
    marks a leaf.  All randomness comes from the sm64 stream `seed`: draws
    0..n-1 pick the bootstrap rows, later draws pick feature subsets per node
    in DFS (left-first) order, which fixes the tree bit-for-bit.

    base_order[f] is the full dataset's row order sorted by feature f,
    computed once per forest.  The bootstrap sample's sorted orders follow by
    multiplicity expansion (no per-tree sort), and every tree node stays a
    contiguous ascending segment of all d orders via stable partitioning, so
    split scans are O(m) per node.  Duplicate bootstrap rows share values and
    therefore never separate at a split.
    """
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    counts = np.zeros((cap, n_classes), np.int64)

    cnt = np.zeros(n, np.int64)
    ctr = U64(0)
    if bootstrap:
        for i in range(n):
            r = np.int64(_sm64(seed, ctr) % U64(n))
            ctr += U64(1)
            cnt[r] += 1
    else:
        for i in range(n):
            cnt[i] = 1

    # S[f]: base rows (with multiplicity) ordered by feature f; V[f]: values
    S = np.empty((d, n), np.int64)
    V = np.empty((d, n), np.float64)
    for f in range(d):
        pos = 0
        for bi in range(n):
            row = base_order[f, bi]
            c = cnt[row]
            for _ in range(c):
                S[f, pos] = row
                V[f, pos] = X[row, f]
                pos += 1

    mtry = max_features if max_features < d else d

    stack = np.empty((n + 64, 3), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    top = 1
    n_nodes = 1

    pool = np.empty(d, np.int64)
    feats = np.empty(mtry, np.int64)
    cnt_tot = np.empty(n_classes, np.int64)
    cnt_l = np.empty(n_classes, np.int64)
    go_left = np.zeros(n, np.bool_)
    sbuf = np.empty(n, np.int64)
    vbuf = np.empty(n, np.float64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        s = stack[top, 1]
        e = stack[top, 2]
        m = e - s

        for c in range(n_classes):
            cnt_tot[c] = 0
        for i in range(s, e):
            cnt_tot[y[S[0, i]]] += 1
        for c in range(n_classes):
            counts[node, c] = cnt_tot[c]

        n_present = 0
        for c in range(n_classes):
            if cnt_tot[c] > 0:
                n_present += 1
        if n_present <= 1 or m < min_samples_split:
            continue

        # mtry distinct features by partial Fisher-Yates, then ascending so the
        # scan's strict-< update realizes the (feature, threshold) tie rule
        for j in range(d):
            pool[j] = j
        for j in range(mtry):
            r = j + np.int64(_sm64(seed, ctr) % U64(d - j))
            ctr += U64(1)
            tmp = pool[j]
            pool[j] = pool[r]
            pool[r] = tmp
            feats[j] = pool[j]
        for a in range(1, mtry):
            v = feats[a]
            b = a - 1
            while b >= 0 and feats[b] > v:
                feats[b + 1] = feats[b]
                b -= 1
            feats[b + 1] = v

        best_score = np.inf
        best_f = -1
        best_t = 0.0
        best_nl = 0
        for fj in range(mtry):
            f = feats[fj]
            for c in range(n_classes):
                cnt_l[c] = 0
            for i in range(s + 1, e):
                cnt_l[y[S[f, i - 1]]] += 1
                if V[f, i] != V[f, i - 1]:
                    nl = i - s
                    nr = e - i
                    if nl >= min_samples_leaf and nr >= min_samples_leaf:
                        gl = 1.0
                        gr = 1.0
                        for c in range(n_classes):
                            pl = cnt_l[c] / nl
                            gl -= pl * pl
                            pr = (cnt_tot[c] - cnt_l[c]) / nr
                            gr -= pr * pr
                        score = nl * gl + nr * gr
                        if score < best_score:
                            best_score = score
                            best_f = f
                            best_nl = nl
                            t = 0.5 * (V[f, i - 1] + V[f, i])
                            if t <= V[f, i - 1]:
                                t = V[f, i]
                            best_t = t

        if best_f < 0:
            continue

        # first best_nl rows of the split feature's order are the left child
        for i in range(s, s + best_nl):
            go_left[S[best_f, i]] = True
        for f in range(d):
            pl_ = 0
            pr_ = best_nl
            for i in range(s, e):
                row = S[f, i]
                if go_left[row]:
                    sbuf[pl_] = row
                    vbuf[pl_] = V[f, i]
                    pl_ += 1
                else:
                    sbuf[pr_] = row
                    vbuf[pr_] = V[f, i]
                    pr_ += 1
            for i in range(m):
                S[f, s + i] = sbuf[i]
                V[f, s + i] = vbuf[i]
        for i in range(s, s + best_nl):
            go_left[S[best_f, i]] = False
        mid = s + best_nl

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lid
        right[node] = rid
        stack[top, 0] = rid
        stack[top, 1] = mid
        stack[top, 2] = e
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = s
        stack[top, 2] = mid
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            counts[:n_nodes].copy())


@njit(cache=True)
def tree_apply(feature, threshold, left, right, X):
    """Leaf index reached by each row of X."""
    m = X.shape[0]
    out = np.empty(m, np.int64)
    for i in range(m):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def knn_mean_dist(X, k):
    """Mean Euclidean distance from each row to its k nearest other rows.

    Ties on distance prefer the lower row index.  Requires n - 1 >= k; the
    caller validates.  The k selected distances are summed in ascending
    (distance, index) order to match the numpy backend bit-for-bit.
    """
    n, d = X.shape
    out = np.empty(n, np.float64)
    bd = np.empty(k, np.float64)
    bi = np.empty(k, np.int64)
    for i in range(n):
        nb = 0
        for j in range(n):
            if j == i:
                continue
            acc = 0.0
            for t in range(d):
                diff = X[i, t] - X[j, t]
                acc += diff * diff
            dist = np.sqrt(acc)
            if nb < k:
                p = nb
                while p > 0 and (bd[p - 1] > dist or (bd[p - 1] == dist and bi[p - 1] > j)):
                    bd[p] = bd[p - 1]
                    bi[p] = bi[p - 1]
                    p -= 1
                bd[p] = dist
                bi[p] = j
                nb += 1
            elif dist < bd[k - 1] or (dist == bd[k - 1] and j < bi[k - 1]):
                p = k - 1
                while p > 0 and (bd[p - 1] > dist or (bd[p - 1] == dist and bi[p - 1] > j)):
                    bd[p] = bd[p - 1]
                    bi[p] = bi[p - 1]
                    p -= 1
                bd[p] = dist
                bi[p] = j
        acc = 0.0
        for t in range(k):
            acc += bd[t]
        out[i] = acc / k
    return out
