"""Compiled inner loops for tree growing, forest prediction and SHAP walks.

Randomness inside the kernels comes from a SplitMix64 hash of
``(tree_key, node_id, draw)``, so the result of growing a tree never depends on
thread scheduling.
"""

import warnings

import numpy as np
from numba import njit, prange

# numba probes an outdated TBB on some hosts and falls back to another layer
warnings.filterwarnings("ignore", message="The TBB threading layer")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def counter_draw(key, node, counter):
    return splitmix64(splitmix64(key ^ splitmix64(np.uint64(node))) + np.uint64(counter))


@njit(cache=True, nogil=True)
def _node_value(y, idx, start, end):
    total = 0.0
    for i in range(start, end):
        total += y[idx[i]]
    return total / (end - start)


@njit(cache=True, nogil=True)
def _is_pure(y, idx, start, end):
    first = y[idx[start]]
    for i in range(start + 1, end):
        if y[idx[i]] != first:
            return False
    return True


@njit(cache=True, nogil=True)
def grow_tree(X, y, sample, is_classifier, max_features, min_samples_leaf, max_depth, key):
    """Grow one CART tree on the rows listed in ``sample`` (duplicates allowed).

    Returns ``(feature, threshold, left, right, value, n_nodes)``; leaves have
    ``left == -1``. Classification values are the class-1 frequency of the leaf.
    """
    n_features = X.shape[1]
    n = sample.shape[0]
    capacity = 2 * n + 1
    feature = np.full(capacity, -1, dtype=np.int32)
    threshold = np.zeros(capacity)
    left = np.full(capacity, -1, dtype=np.int32)
    right = np.full(capacity, -1, dtype=np.int32)
    value = np.zeros(capacity)

    idx = sample.copy()
    stack_node = np.empty(capacity, dtype=np.int64)
    stack_start = np.empty(capacity, dtype=np.int64)
    stack_end = np.empty(capacity, dtype=np.int64)
    stack_depth = np.empty(capacity, dtype=np.int64)
    order = np.empty(n_features, dtype=np.int64)
    vals = np.empty(n)
    ys = np.empty(n)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        count = end - start
        value[node] = _node_value(y, idx, start, end)

        if count < 2 * min_samples_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        if _is_pure(y, idx, start, end):
            continue

        for j in range(n_features):
            order[j] = j
        best_score = -np.inf
        best_feature = -1
        best_threshold = 0.0
        visited = 0
        draw = 0
        for k in range(n_features):
            if visited >= max_features:
                break
            # partial Fisher-Yates: pick the k-th candidate feature
            r = counter_draw(key, node, draw)
            draw += 1
            pick = k + np.int64(r % np.uint64(n_features - k))
            tmp = order[k]
            order[k] = order[pick]
            order[pick] = tmp
            f = order[k]

            lo = np.inf
            hi = -np.inf
            for i in range(count):
                v = X[idx[start + i], f]
                vals[i] = v
                ys[i] = y[idx[start + i]]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if lo == hi:
                continue
            visited += 1

            perm = np.argsort(vals[:count], kind="mergesort")
            sv = vals[:count][perm]
            sy = ys[:count][perm]
            total = 0.0
            for i in range(count):
                total += sy[i]
            run = 0.0
            for i in range(count - 1):
                run += sy[i]
                n_left = i + 1
                n_right = count - n_left
                if sv[i] == sv[i + 1]:
                    continue
                if n_left < min_samples_leaf or n_right < min_samples_leaf:
                    continue
                if is_classifier:
                    l1 = run
                    l0 = n_left - run
                    r1 = total - run
                    r0 = n_right - r1
                    score = (l0 * l0 + l1 * l1) / n_left + (r0 * r0 + r1 * r1) / n_right
                else:
                    rs = total - run
                    score = run * run / n_left + rs * rs / n_right
                if score > best_score or (score == best_score and f < best_feature):
                    mid = 0.5 * (sv[i] + sv[i + 1])
                    if mid >= sv[i + 1]:
                        mid = sv[i]
                    best_score = score
                    best_feature = f
                    best_threshold = mid

        if best_feature < 0:
            continue

        # partition idx[start:end] so rows with value <= threshold come first
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_feature] <= best_threshold:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid_pos = i

        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2

        stack_node[top] = right[node]
        stack_start[top] = mid_pos
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = left[node]
        stack_start[top] = start
        stack_end[top] = mid_pos
        stack_depth[top] = depth + 1
        top += 1

    return feature, threshold, left, right, value, n_nodes


@njit(cache=True, nogil=True, parallel=True)
def forest_mean(X, roots, feature, threshold, left, right, value):
    """Mean leaf value over trees, per row. Trees are packed with absolute child indices."""
    n = X.shape[0]
    out = np.empty(n)
    n_trees = roots.shape[0]
    for i in prange(n):
        acc = 0.0
        for t in range(n_trees):
            node = roots[t]
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


@njit(cache=True, nogil=True)
def _walk_tree(x, bg, pos, root, feature, threshold, left, right, value, n_features, delta, stack_node, stack_lo, stack_hi):
    # Feature f takes x's value from step pos[f] + 1 onwards and bg's value before.
    # Each leaf reached over a step interval [lo, hi] contributes +v entering and -v leaving.
    top = 0
    stack_node[0] = root
    stack_lo[0] = 0
    stack_hi[0] = n_features
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        if left[node] < 0:
            v = value[node]
            if lo >= 1:
                delta[lo] += v
            if hi < n_features:
                delta[hi + 1] -= v
            continue
        f = feature[node]
        thr = threshold[node]
        x_left = x[f] <= thr
        b_left = bg[f] <= thr
        if x_left == b_left:
            stack_node[top] = left[node] if x_left else right[node]
            stack_lo[top] = lo
            stack_hi[top] = hi
            top += 1
            continue
        switch = pos[f] + 1
        if lo <= switch - 1:
            stack_node[top] = left[node] if b_left else right[node]
            stack_lo[top] = lo
            stack_hi[top] = min(hi, switch - 1)
            top += 1
        if max(lo, switch) <= hi:
            stack_node[top] = left[node] if x_left else right[node]
            stack_lo[top] = max(lo, switch)
            stack_hi[top] = hi
            top += 1


@njit(cache=True, nogil=True, parallel=True)
def shap_walks_forest(rows, background, perms, roots, feature, threshold, left, right, value, max_nodes):
    """Forward and reverse permutation-walk attributions for a packed forest.

    For row ``s`` with feature order ``perms[s]``, the forward walk adds
    features in that order and the reverse walk adds them in the opposite
    order. Each walk's marginal deltas are averaged over trees and background
    rows, which equals the delta of the background-averaged masked forest
    output.
    """
    n_rows, n_features = rows.shape
    n_bg = background.shape[0]
    n_trees = roots.shape[0]
    fwd = np.zeros((n_rows, n_features))
    rev = np.zeros((n_rows, n_features))
    scale = 1.0 / (n_trees * n_bg)
    for s in prange(n_rows):
        pos_f = np.empty(n_features, dtype=np.int64)
        pos_r = np.empty(n_features, dtype=np.int64)
        for t in range(n_features):
            pos_f[perms[s, t]] = t
            pos_r[perms[s, t]] = n_features - 1 - t
        delta_f = np.zeros(n_features + 1)
        delta_r = np.zeros(n_features + 1)
        stack_node = np.empty(max_nodes + 1, dtype=np.int64)
        stack_lo = np.empty(max_nodes + 1, dtype=np.int64)
        stack_hi = np.empty(max_nodes + 1, dtype=np.int64)
        x = rows[s]
        for t in range(n_trees):
            for b in range(n_bg):
                _walk_tree(x, background[b], pos_f, roots[t], feature, threshold, left, right, value,
                           n_features, delta_f, stack_node, stack_lo, stack_hi)
                _walk_tree(x, background[b], pos_r, roots[t], feature, threshold, left, right, value,
                           n_features, delta_r, stack_node, stack_lo, stack_hi)
        for t in range(1, n_features + 1):
            fwd[s, perms[s, t - 1]] = delta_f[t] * scale
            rev[s, perms[s, n_features - t]] = delta_r[t] * scale
    return fwd, rev
