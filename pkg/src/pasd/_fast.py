"""Compiled kernels for loss-based trees.

These mirror the pure-Python grower in ``tree.py`` step for step (same
candidate cuts, same tie rules, same preorder node ids, same feature-subset
draws) so that forests and boosting, which grow thousands of trees, do not
pay Python overhead per node.  Only squared-error heterogeneity is
supported here; everything else goes through the reference grower.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _node_moments(v):
    n = v.size
    est = v.sum() / n
    ss = 0.0
    for i in range(n):
        d = v[i] - est
        ss += d * d
    return est, ss


@njit(cache=True, nogil=True)
def _scan_feature(xs, v, k, cart, tie_rtol):
    """Best cut on one sorted feature: (found, score, cut)."""
    n = xs.size
    center = v.sum() / n
    cs = np.empty(n)
    cs2 = np.empty(n)
    a = 0.0
    b = 0.0
    for i in range(n):
        d = v[i] - center
        a += d
        b += d * d
        cs[i] = a
        cs2[i] = b
    tot = cs[n - 1]
    tot2 = cs2[n - 1]
    floor = 1e-11 * tot2
    scores = np.full(n, np.nan)
    top = -np.inf
    for t in range(k, n - k + 1):
        if not xs[t - 1] < xs[t]:
            continue
        nl = float(t)
        nr = n - nl
        sl = cs[t - 1]
        sr = tot - sl
        ssl = cs2[t - 1] - sl * sl / nl
        ssr = (tot2 - cs2[t - 1]) - sr * sr / nr
        if ssl <= floor:
            ssl = 0.0
        if ssr <= floor:
            ssr = 0.0
        if cart:
            s = -(ssl + ssr)
        else:
            denom = ssl / (nl * (nl - 1.0)) + ssr / (nr * (nr - 1.0))
            if not denom > 0.0:
                continue
            diff = sl / nl - sr / nr
            s = diff * diff / denom
        if np.isfinite(s):
            scores[t] = s
            if s > top:
                top = s
    found = np.isfinite(top)
    best = top
    best_cut = 0
    if found:
        # smallest cut among the near-maximal scores
        tol = tie_rtol * max(1.0, abs(top))
        for t in range(k, n - k + 1):
            if np.isfinite(scores[t]) and scores[t] >= top - tol:
                best = scores[t]
                best_cut = t
                break
    if not found:
        return False, 0.0, 0.0
    t = int(best_cut)
    lo = xs[t - 1]
    hi = xs[t]
    cut = 0.5 * (lo + hi)
    if cut >= hi:
        cut = lo
    return True, best, cut


@njit(cache=True, nogil=True)
def grow_loss(X, values, rows, min_node, max_depth, cart, mtry, keys, tie_rtol):
    """Grow a tree; returns per-node arrays indexed by preorder id."""
    n_rows = rows.size
    p = X.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int64)
    cut = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    depth_arr = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    est = np.zeros(cap)
    ss = np.zeros(cap)
    stat = np.full(cap, np.nan)

    buf = rows.copy()
    tmp = np.empty(n_rows, np.int64)
    # stack entries: parent, side (0 left, 1 right), start, end, depth
    st_parent = np.empty(cap, np.int64)
    st_side = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_parent[0] = -1
    st_side[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    top = 1
    next_id = 0
    use_subset = mtry < p
    feats_all = np.arange(p)

    while top > 0:
        top -= 1
        parent = st_parent[top]
        side = st_side[top]
        s0 = st_start[top]
        s1 = st_end[top]
        d = st_depth[top]
        nid = next_id
        next_id += 1
        if parent >= 0:
            if side == 0:
                left[parent] = nid
            else:
                right[parent] = nid
        r = buf[s0:s1]
        m = s1 - s0
        v = values[r]
        e, q = _node_moments(v)
        est[nid] = e
        ss[nid] = q
        count[nid] = m
        depth_arr[nid] = d

        if max_depth >= 0 and d >= max_depth:
            continue
        if m < 2 * min_node:
            continue
        if cart and q <= 0.0:
            continue
        if use_subset:
            feats = np.sort(np.argsort(keys[nid])[:mtry])
        else:
            feats = feats_all

        found_any = False
        best_score = -np.inf
        best_f = -1
        best_c = 0.0
        for f in feats:
            xf = X[r, f]
            order = np.argsort(xf, kind="mergesort")
            ok, sc, c = _scan_feature(xf[order], v[order], min_node, cart, tie_rtol)
            if not ok:
                continue
            if not found_any or sc > best_score + tie_rtol * max(1.0, abs(best_score)):
                found_any = True
                best_score = sc
                best_f = f
                best_c = c
        if not found_any:
            continue

        # stable partition of the node's rows
        nl = 0
        for i in range(m):
            if X[r[i], best_f] <= best_c:
                tmp[nl] = r[i]
                nl += 1
        nr = 0
        for i in range(m):
            if not X[r[i], best_f] <= best_c:
                tmp[nl + nr] = r[i]
                nr += 1
        if nl < 2 or nr < 2:
            continue
        el, ql = _node_moments(values[tmp[:nl]])
        er, qr = _node_moments(values[tmp[nl:m]])
        if cart:
            statistic = ql + qr
        else:
            vl = ql / (nl * (nl - 1.0))
            vr = qr / (nr * (nr - 1.0))
            den = vl + vr
            if not den > 0.0:
                continue
            statistic = (el - er) ** 2 / den
            if not np.isfinite(statistic):
                continue
        for i in range(m):
            buf[s0 + i] = tmp[i]
        feature[nid] = best_f
        cut[nid] = best_c
        stat[nid] = statistic
        # right pushed first so the left child is popped (and numbered) next
        st_parent[top] = nid
        st_side[top] = 1
        st_start[top] = s0 + nl
        st_end[top] = s1
        st_depth[top] = d + 1
        top += 1
        st_parent[top] = nid
        st_side[top] = 0
        st_start[top] = s0
        st_end[top] = s0 + nl
        st_depth[top] = d + 1
        top += 1

    k = next_id
    return (feature[:k], cut[:k], left[:k], right[:k], depth_arr[:k], count[:k], est[:k], ss[:k],
            stat[:k])


@njit(cache=True, nogil=True)
def apply_flat(X, feature, cut, left, right):
    """Index (into the flat arrays) of the terminal node reached by each row."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        j = 0
        while feature[j] >= 0:
            if X[i, feature[j]] <= cut[j]:
                j = left[j]
            else:
                j = right[j]
        out[i] = j
    return out


@njit(cache=True, nogil=True)
def path_moments(X, values, rows, feature, cut, left, right):
    """Count, mean and centred sum of squares of ``values`` at every node.

    Each row contributes to every node on its root-to-leaf path.
    """
    k = feature.size
    count = np.zeros(k, np.int64)
    total = np.zeros(k)
    for i in rows:
        j = 0
        while True:
            count[j] += 1
            total[j] += values[i]
            if feature[j] < 0:
                break
            j = left[j] if X[i, feature[j]] <= cut[j] else right[j]
    mean = np.zeros(k)
    for j in range(k):
        if count[j] > 0:
            mean[j] = total[j] / count[j]
    ss = np.zeros(k)
    for i in rows:
        j = 0
        while True:
            d = values[i] - mean[j]
            ss[j] += d * d
            if feature[j] < 0:
                break
            j = left[j] if X[i, feature[j]] <= cut[j] else right[j]
    return count, mean, ss
