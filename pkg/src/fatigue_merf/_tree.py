"""Numba kernels for CART regression trees.

Trees are stored as flat node arrays. ``feature == -1`` marks a leaf.
Node values are response means relative to the forest offset.

Tree growth works in "position space": the bootstrap rows are gathered
once into ``V`` (p, n) and ``dd`` (n,), and every feature keeps its own
ascending order ``O[f]`` of positions. A node owns the same slice
``[start, end)`` of every ``O[f]``; splitting stably partitions each slice.
"""

import numpy as np
from numba import njit


def global_order(Xt):
    """Stable ascending row order of every feature, shape (p, n)."""
    return np.argsort(Xt, axis=1, kind="stable").astype(np.int64)


@njit(cache=True, nogil=True)
def sample_order(G, sample, n_rows):
    """Per-feature ascending order of bootstrap positions, via the global order.

    Runs in O(p * n) with a counting sort of ``sample`` by row.
    """
    p = G.shape[0]
    n = sample.size
    counts = np.zeros(n_rows + 1, dtype=np.int64)
    for i in range(n):
        counts[sample[i] + 1] += 1
    for r in range(n_rows):
        counts[r + 1] += counts[r]
    fill = counts[:-1].copy()
    bucket = np.empty(n, dtype=np.int64)
    for i in range(n):
        r = sample[i]
        bucket[fill[r]] = i
        fill[r] += 1
    O = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        k = 0
        for j in range(n_rows):
            r = G[f, j]
            for q in range(counts[r], counts[r + 1]):
                O[f, k] = bucket[q]
                k += 1
    return O


@njit(cache=True, nogil=True)
def node_split(V, dd, O, start, end, features, min_leaf):
    """Variance-reduction split of one node over ``features`` (ascending).

    Returns (feature, threshold, gain); feature -1 when no positive-gain
    split leaves ``min_leaf`` rows on each side. Ties keep the lowest
    feature index, then the lowest threshold.
    """
    m = end - start
    best_f = -1
    best_thr = 0.0
    best_gain = 0.0
    if m < 2 * min_leaf:
        return best_f, best_thr, best_gain
    row0 = O[0, start]
    dmin = dd[row0]
    dmax = dd[row0]
    total = 0.0
    for i in range(start, end):
        v = dd[O[0, i]]
        total += v
        if v < dmin:
            dmin = v
        if v > dmax:
            dmax = v
    if dmin == dmax:
        return best_f, best_thr, best_gain
    mean = total / m
    s = 0.0
    sse = 0.0
    for i in range(start, end):
        z = dd[O[0, i]] - mean
        s += z
        sse += z * z
    parent_term = s * s / m
    floor = 1e-12 * sse
    for fi in range(features.size):
        f = features[fi]
        order = O[f]
        row = V[f]
        left = 0.0
        for i in range(m - min_leaf):
            pos = order[start + i]
            left += dd[pos] - mean
            n_left = i + 1
            if n_left < min_leaf:
                continue
            v0 = row[pos]
            v1 = row[order[start + i + 1]]
            if v0 == v1:
                continue
            right = s - left
            gain = left * left / n_left + right * right / (m - n_left) - parent_term
            if gain > best_gain and gain > floor:
                thr = v0 + (v1 - v0) / 2.0
                if thr >= v1:
                    thr = v0
                best_gain = gain
                best_f = f
                best_thr = thr
    return best_f, best_thr, best_gain


@njit(cache=True, nogil=True)
def build_tree(Xt, G, d, sample, mtry, min_leaf, max_depth, keys):
    """Grow one tree on the (possibly repeated) row indices ``sample``.

    ``G`` is :func:`global_order` of ``Xt``.

    ``keys`` is an (n_nodes_max, mtry) array of uniforms in [0, 1) that
    drives the per-node partial Fisher-Yates feature draw, so the tree is
    a pure function of its inputs.
    """
    p = Xt.shape[0]
    n = sample.size
    V = np.empty((p, n))
    for f in range(p):
        for i in range(n):
            V[f, i] = Xt[f, sample[i]]
    dd = np.empty(n)
    for i in range(n):
        dd[i] = d[sample[i]]
    O = sample_order(G, sample, Xt.shape[1])

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    n_node = np.zeros(cap, dtype=np.int64)

    perm = np.arange(p)
    goes_left = np.zeros(n, dtype=np.bool_)
    scratch = np.empty(n, dtype=np.int64)
    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        acc = 0.0
        for i in range(start, end):
            acc += dd[O[0, i]]
        value[node] = acc / m
        n_node[node] = m
        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        for j in range(mtry):
            k = j + int(keys[node, j] * (p - j))
            if k >= p:
                k = p - 1
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
        feats = np.sort(perm[:mtry])
        f, thr, g = node_split(V, dd, O, start, end, feats, min_leaf)
        if f < 0:
            continue
        nl = 0
        for i in range(start, end):
            pos = O[f, i]
            goes_left[pos] = V[f, pos] <= thr
            if goes_left[pos]:
                nl += 1
        for h in range(p):
            a = 0
            b = nl
            for i in range(start, end):
                pos = O[h, i]
                if goes_left[pos]:
                    scratch[a] = pos
                    a += 1
                else:
                    scratch[b] = pos
                    b += 1
            for i in range(m):
                O[h, start + i] = scratch[i]
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is expanded first
        stack[top, 0] = rc
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lc
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), gain[:n_nodes].copy(),
            n_node[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_trees(X, offsets, feature, threshold, left, right, value):
    """Sum of leaf values over all trees for each row of X."""
    n = X.shape[0]
    n_trees = offsets.size - 1
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = acc
    return out

