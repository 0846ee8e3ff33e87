"""Compiled CART growth and traversal.

Trees are flat arrays indexed by node id. Internal nodes send ``x[f] <= t``
to the left child. A split is taken only if its impurity decrease exceeds
``SPLIT_RTOL * parent_impurity``; among candidates within that tolerance of
each other the first one scanned wins, scanning features in ascending index
order and thresholds in ascending value order.
"""

import numpy as np
from numba import njit

SPLIT_RTOL = 1e-10


@njit(cache=True)
def _gini(counts, n):
    s = 0.0
    for c in counts:
        p = c / n
        s += p * p
    return 1.0 - s


@njit(cache=True)
def presort(X):
    n, d = X.shape
    out = np.empty((d, n), np.int64)
    for f in range(d):
        out[f] = np.argsort(X[:, f], kind="mergesort")
    return out


@njit(cache=True)
def grow(X, order, y_cls, y_reg, n_classes, regression, max_depth, min_leaf, priorities, n_sub):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    depth = np.zeros(cap, np.int64)
    n_node = np.zeros(cap, np.int64)
    impurity = np.zeros(cap)
    width = 1 if regression else n_classes
    stats = np.zeros((cap, width))
    leaf_of = np.zeros(n, np.int64)

    # seg[f, start:end] lists the node's samples sorted by feature f
    seg = order.copy()
    goes_left = np.zeros(n, np.int64)
    buf_l = np.empty(n, np.int64)
    buf_r = np.empty(n, np.int64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    top = 1
    n_nodes = 1

    cl = np.zeros(n_classes)
    cr = np.zeros(n_classes)
    all_feats = np.arange(d)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        m = end - start
        dep = depth[node]
        n_node[node] = m

        if regression:
            s = 0.0
            ss = 0.0
            lo = np.inf
            hi = -np.inf
            for jj in range(start, end):
                v = y_reg[seg[0, jj]]
                s += v
                ss += v * v
                lo = min(lo, v)
                hi = max(hi, v)
            stats[node, 0] = s
            imp = ss / m - (s / m) * (s / m)
            if imp < 0.0:
                imp = 0.0
            pure = lo == hi
        else:
            for jj in range(start, end):
                stats[node, y_cls[seg[0, jj]]] += 1.0
            imp = _gini(stats[node], m)
            nz = 0
            for c in range(n_classes):
                if stats[node, c] > 0:
                    nz += 1
            pure = nz <= 1
        impurity[node] = imp

        is_leaf = pure or m < 2 * min_leaf or (max_depth >= 0 and dep >= max_depth)
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        tol = SPLIT_RTOL * imp
        if not is_leaf:
            if n_sub < d:
                feats = np.sort(np.argsort(priorities[node])[:n_sub])
            else:
                feats = all_feats
            for f in feats:
                if regression:
                    sl = 0.0
                    s_tot = stats[node, 0]
                else:
                    for c in range(n_classes):
                        cl[c] = 0.0
                        cr[c] = stats[node, c]
                for i in range(m - 1):
                    j = seg[f, start + i]
                    if regression:
                        sl += y_reg[j]
                    else:
                        cl[y_cls[j]] += 1.0
                        cr[y_cls[j]] -= 1.0
                    nl = i + 1
                    if nl < min_leaf:
                        continue
                    nr = m - nl
                    if nr < min_leaf:
                        break
                    a = X[j, f]
                    b = X[seg[f, start + i + 1], f]
                    if not a < b:
                        continue
                    if regression:
                        sr = s_tot - sl
                        gain = (sl * sl / nl + sr * sr / nr - s_tot * s_tot / m) / m
                    else:
                        gain = imp - (nl / m) * _gini(cl, nl) - (nr / m) * _gini(cr, nr)
                    if gain > tol and gain > best_gain + tol:
                        best_gain = gain
                        best_f = f
                        t = a + (b - a) / 2.0
                        if not t < b:
                            t = a
                        best_t = t
        if best_f < 0:
            for jj in range(start, end):
                leaf_of[seg[0, jj]] = node
            continue

        n_left = 0
        for jj in range(start, end):
            j = seg[0, jj]
            g = 1 if X[j, best_f] <= best_t else 0
            goes_left[j] = g
            n_left += g
        for f in range(d):
            kl = 0
            kr = 0
            for jj in range(start, end):
                j = seg[f, jj]
                g = goes_left[j]
                buf_l[kl] = j
                buf_r[kr] = j
                kl += g
                kr += 1 - g
            for i in range(kl):
                seg[f, start + i] = buf_l[i]
            for i in range(kr):
                seg[f, start + kl + i] = buf_r[i]

        feature[node] = best_f
        threshold[node] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        depth[lc] = dep + 1
        depth[rc] = dep + 1
        mid = start + n_left
        # push right first so the left subtree is expanded first
        st_node[top] = rc
        st_start[top] = mid
        st_end[top] = end
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = mid
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        depth[:n_nodes],
        n_node[:n_nodes],
        impurity[:n_nodes],
        stats[:n_nodes],
        leaf_of,
    )


@njit(cache=True)
def apply(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
