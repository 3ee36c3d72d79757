"""Compiled tree-growing loops shared by the tree, forest and boosting learners.

Trees are stored as flat arrays indexed by node id (root = 0, children are
allocated in pairs as nodes are split). ``feature == -1`` marks a leaf.
Rows with ``x[feature] <= threshold`` go to ``left``.
"""

import numpy as np
from numba import njit

# relative slack within which two split scores count as tied; ties keep the
# earlier (lower feature, lower threshold) candidate
TIE_RTOL = 1e-12


@njit(cache=True, nogil=True)
def _gini_scan(X, y, idx, start, end, f, n_classes, tot, vals):
    """Best Gini split of rows idx[start:end] on feature f.

    The score maximised is sum_k nL_k^2 / nL + sum_k nR_k^2 / nR, which is
    monotone in the impurity decrease. Returns (score, threshold, found).
    """
    m = end - start
    for i in range(m):
        vals[i] = X[idx[start + i], f]
    order = np.argsort(vals[:m], kind="mergesort")
    left = np.zeros(n_classes, np.int64)
    best = -1.0
    thr = 0.0
    found = False
    for j in range(m - 1):
        r = order[j]
        left[y[idx[start + r]]] += 1
        a = vals[r]
        b = vals[order[j + 1]]
        if a < b:
            nl = j + 1
            nr = m - nl
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                sl += left[c] * left[c]
                rc = tot[c] - left[c]
                sr += rc * rc
            s = sl / nl + sr / nr
            if not found or s > best * (1.0 + TIE_RTOL):
                best = s
                thr = 0.5 * (a + b)
                found = True
    return best, thr, found


@njit(cache=True, nogil=True)
def gini_best_split(X, y, rows, candidates, n_classes):
    """(feature, threshold, gain) of the best split over ``candidates``; feature -1 if none."""
    m = rows.shape[0]
    tot = np.zeros(n_classes, np.int64)
    for i in range(m):
        tot[y[rows[i]]] += 1
    parent = 0.0
    for c in range(n_classes):
        parent += tot[c] * tot[c]
    parent /= m
    vals = np.empty(m)
    best = -1.0
    bf = -1
    bt = 0.0
    for f in candidates:
        s, t, found = _gini_scan(X, y, rows, 0, m, f, n_classes, tot, vals)
        if found and (bf < 0 or s > best * (1.0 + TIE_RTOL)):
            best = s
            bf = f
            bt = t
    if bf < 0 or best <= parent * (1.0 + TIE_RTOL):
        return -1, 0.0, 0.0
    return bf, bt, (best - parent) / m


@njit(cache=True, nogil=True)
def _partition(X, idx, start, end, f, thr):
    i = start
    j = end - 1
    while i <= j:
        if X[idx[i], f] <= thr:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@njit(cache=True, nogil=True)
def grow_classifier(X, y, rows, n_classes, max_depth, min_samples_split, n_try, node_noise):
    """Grow a Gini tree on ``rows`` (duplicates allowed, e.g. a bootstrap sample).

    ``max_depth < 0`` means unlimited. When ``n_try`` is smaller than the number
    of features, node k examines the ``n_try`` features with the smallest
    ``node_noise[k]`` entries (a uniform random subset).
    """
    d = X.shape[1]
    n_rows = rows.shape[0]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes), np.int64)
    idx = rows.copy()
    vals = np.empty(n_rows)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_start[0] = 0
    st_end[0] = n_rows
    st_node[0] = 0
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    all_features = np.arange(d)
    while sp > 0:
        sp -= 1
        s = st_start[sp]
        e = st_end[sp]
        node = st_node[sp]
        depth = st_depth[sp]
        m = e - s
        tot = np.zeros(n_classes, np.int64)
        for i in range(s, e):
            tot[y[idx[i]]] += 1
        counts[node] = tot
        parent = 0.0
        pure = False
        for c in range(n_classes):
            parent += tot[c] * tot[c]
            if tot[c] == m:
                pure = True
        parent /= m
        if pure or m < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue
        if n_try < d:
            cand = np.sort(np.argsort(node_noise[node], kind="mergesort")[:n_try])
        else:
            cand = all_features
        best = -1.0
        bf = -1
        bt = 0.0
        for f in cand:
            sc, t, found = _gini_scan(X, y, idx, s, e, f, n_classes, tot, vals)
            if found and (bf < 0 or sc > best * (1.0 + TIE_RTOL)):
                best = sc
                bf = f
                bt = t
        if bf < 0 or best <= parent * (1.0 + TIE_RTOL):
            continue
        mid = _partition(X, idx, s, e, bf, bt)
        feature[node] = bf
        threshold[node] = bt
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is grown first
        st_start[sp] = mid
        st_end[sp] = e
        st_node[sp] = rc
        st_depth[sp] = depth + 1
        sp += 1
        st_start[sp] = s
        st_end[sp] = mid
        st_node[sp] = lc
        st_depth[sp] = depth + 1
        sp += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _newton_scan(X, g, h, order, start, end, f, G, H, lam, min_child_h):
    """Best second-order split on feature f; ``order[f, start:end]`` is sorted by value."""
    gl = 0.0
    hl = 0.0
    best = 0.0
    thr = 0.0
    found = False
    parent = G * G / (H + lam)
    for j in range(start, end - 1):
        r = order[f, j]
        gl += g[r]
        hl += h[r]
        a = X[r, f]
        b = X[order[f, j + 1], f]
        if a < b:
            hr = H - hl
            if hl < min_child_h or hr < min_child_h:
                continue
            gr = G - gl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if not found or gain > best + TIE_RTOL * (abs(best) + parent):
                best = gain
                thr = 0.5 * (a + b)
                found = True
    return best, thr, found, parent


@njit(cache=True, nogil=True)
def _stable_partition(X, order, start, end, split_f, thr, buf):
    """Split every feature's segment into <= thr / > thr rows, preserving sort order."""
    d = order.shape[0]
    n_left = 0
    for j in range(start, end):
        if X[order[split_f, j], split_f] <= thr:
            n_left += 1
    for f in range(d):
        li = start
        ri = 0
        for j in range(start, end):
            r = order[f, j]
            if X[r, split_f] <= thr:
                order[f, li] = r
                li += 1
            else:
                buf[ri] = r
                ri += 1
        for j in range(ri):
            order[f, li + j] = buf[j]
    return start + n_left


@njit(cache=True, nogil=True)
def grow_regressor(X, g, h, presorted, max_depth, lam, gamma, min_child_h):
    """Second-order regression tree on gradients ``g`` and hessians ``h``.

    ``presorted[f]`` lists row ids sorted by feature f (computed once per
    boosting run). A split is kept only when
    0.5*[GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma is positive and both
    children carry at least ``min_child_h`` hessian. Leaves hold the Newton
    step -G/(H+lambda).
    """
    d, n_rows = presorted.shape
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    order = presorted.copy()
    buf = np.empty(n_rows, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_start[0] = 0
    st_end[0] = n_rows
    st_node[0] = 0
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        s = st_start[sp]
        e = st_end[sp]
        node = st_node[sp]
        depth = st_depth[sp]
        G = 0.0
        H = 0.0
        for i in range(s, e):
            G += g[order[0, i]]
            H += h[order[0, i]]
        value[node] = -G / (H + lam) if H + lam > 0 else 0.0
        if e - s < 2 or (max_depth >= 0 and depth >= max_depth):
            continue
        best = 0.0
        bf = -1
        bt = 0.0
        for f in range(d):
            gain, t, found, parent = _newton_scan(X, g, h, order, s, e, f, G, H, lam, min_child_h)
            if found and (bf < 0 or gain > best + TIE_RTOL * (abs(best) + parent)):
                best = gain
                bf = f
                bt = t
        if bf < 0 or best - gamma <= 0.0:
            continue
        mid = _stable_partition(X, order, s, e, bf, bt, buf)
        feature[node] = bf
        threshold[node] = bt
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_start[sp] = mid
        st_end[sp] = e
        st_node[sp] = rc
        st_depth[sp] = depth + 1
        sp += 1
        st_start[sp] = s
        st_end[sp] = mid
        st_node[sp] = lc
        st_depth[sp] = depth + 1
        sp += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf id reached by every row of X."""
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
