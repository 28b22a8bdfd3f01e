"""Pure-numpy kernels, bit-exact with backend_numba.

Same node-processing order (DFS, left first), same sm64 draw positions, and
the same floating-point operation order: gini terms accumulate class by class,
neighbor distances accumulate dimension by dimension, k-nearest sums ascend.
Vectorization happens only across independent elements, never across an
accumulation the numba backend performs sequentially.
"""

from __future__ import annotations

import numpy as np

from .rng import sm64, sm64_array


def build_tree(X, y, base_order, n_classes, seed, max_features,
               min_samples_leaf, min_samples_split, bootstrap):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    counts = np.zeros((cap, n_classes), np.int64)

    seed = int(seed)
    if bootstrap:
        draws = sm64_array(seed, np.arange(n, dtype=np.uint64))
        rows = (draws % np.uint64(n)).astype(np.int64)
        cnt = np.bincount(rows, minlength=n)
        ctr = n
    else:
        cnt = np.ones(n, np.int64)
        ctr = 0

    # S[f]: base rows (with multiplicity) ordered by feature f; V[f]: values.
    # np.repeat reproduces the numba backend's expansion order exactly:
    # base order, duplicates adjacent.
    S = np.empty((d, n), np.int64)
    V = np.empty((d, n), np.float64)
    for f in range(d):
        S[f] = np.repeat(base_order[f], cnt[base_order[f]])
        V[f] = X[S[f], f]

    mtry = min(max_features, d)
    stack = [(0, 0, n)]
    n_nodes = 1
    go_left = np.zeros(n, np.bool_)

    while stack:
        node, s, e = stack.pop()
        m = e - s

        cnt_tot = np.bincount(y[S[0, s:e]], minlength=n_classes)
        counts[node] = cnt_tot
        if int((cnt_tot > 0).sum()) <= 1 or m < min_samples_split:
            continue

        pool = list(range(d))
        feats = []
        for j in range(mtry):
            r = j + sm64(seed, ctr) % (d - j)
            ctr += 1
            pool[j], pool[r] = pool[r], pool[j]
            feats.append(pool[j])
        feats.sort()

        best_score = np.inf
        best_f = -1
        best_t = 0.0
        best_nl = 0
        for f in feats:
            sv = V[f, s:e]
            sy = y[S[f, s:e]]
            bnd = np.nonzero(sv[1:] != sv[:-1])[0]
            if bnd.size == 0:
                continue
            nl = bnd + 1
            nr = m - nl
            ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
            if not ok.any():
                continue
            bnd = bnd[ok]
            nl = nl[ok]
            nr = nr[ok]
            gl = np.ones(bnd.size)
            gr = np.ones(bnd.size)
            for c in range(n_classes):
                cum_c = np.cumsum(sy == c)
                cl = cum_c[bnd]
                pl = cl / nl
                gl -= pl * pl
                pr = (cnt_tot[c] - cl) / nr
                gr -= pr * pr
            score = nl * gl + nr * gr
            j = int(np.argmin(score))
            sc = float(score[j])
            if sc < best_score:
                best_score = sc
                best_f = f
                best_nl = int(nl[j])
                a = float(sv[bnd[j]])
                b = float(sv[bnd[j] + 1])
                t = 0.5 * (a + b)
                if t <= a:
                    t = b
                best_t = t

        if best_f < 0:
            continue

        # first best_nl rows of the split feature's order are the left child
        go_left[S[best_f, s:s + best_nl]] = True
        for f in range(d):
            seg = S[f, s:e]
            vseg = V[f, s:e]
            mk = go_left[seg]
            nmk = ~mk
            S[f, s:e] = np.concatenate((seg[mk], seg[nmk]))
            V[f, s:e] = np.concatenate((vseg[mk], vseg[nmk]))
        go_left[S[best_f, s:s + best_nl]] = False
        mid = s + best_nl

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lid
        right[node] = rid
        stack.append((rid, mid, e))
        stack.append((lid, s, mid))

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            counts[:n_nodes].copy())


def tree_apply(feature, threshold, left, right, X):
    m = X.shape[0]
    node = np.zeros(m, np.int64)
    while True:
        f = feature[node]
        internal = f >= 0
        if not internal.any():
            break
        rows = np.nonzero(internal)[0]
        cur = node[rows]
        go_left = X[rows, f[rows]] < threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
    return node


def knn_mean_dist(X, k):
    n, d = X.shape
    out = np.empty(n, np.float64)
    for i in range(n):
        acc = np.zeros(n, np.float64)
        for t in range(d):
            diff = X[:, t] - X[i, t]
            acc += diff * diff
        dist = np.sqrt(acc)
        dist[i] = np.inf
        near = np.argsort(dist, kind="stable")[:k]
        s = 0.0
        for t in range(k):
            s += float(dist[near[t]])
        out[i] = s / k
    return out
