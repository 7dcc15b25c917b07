"""Compiled CART growth and traversal.

Trees are stored as flat arrays: ``feature[i] == -1`` marks a leaf; otherwise
samples with ``x[feature[i]] <= threshold[i]`` go to ``left[i]``.  ``counts``
holds the per-class training counts reaching each node.
"""
import numpy as np
from numba import njit

N_CLASSES = 3
LEAF = -1


@njit(cache=True, nogil=True)
def _splitmix_next(state):
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _rand_below(state, n):
    # 53 high-quality bits scaled to [0, n)
    u = (_splitmix_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    k = int(u * n)
    return k if k < n else n - 1


@njit(cache=True, nogil=True)
def _child_impurity(l0, l1, l2, r0, r1, r2):
    nl = l0 + l1 + l2
    nr = r0 + r1 + r2
    return (nl - (l0 * l0 + l1 * l1 + l2 * l2) / nl) + (nr - (r0 * r0 + r1 * r1 + r2 * r2) / nr)


@njit(cache=True, nogil=True)
def _midpoint(a, b):
    t = a + (b - a) / 2.0
    return a if t >= b else t


@njit(cache=True, nogil=True)
def grow_tree(X, ranks, uniq, n_uniq, y, sample_idx, max_features, min_leaf, max_depth, seed):
    """Grow one CART tree on the rows ``sample_idx`` of column-major ``X``.

    ``ranks[i, f]`` is the position of ``X[i, f]`` in ``uniq[f, :n_uniq[f]]``,
    the sorted distinct values of column ``f``; large nodes use it to bucket
    samples instead of sorting them.

    At each node the features are visited in a fresh random order and the
    first ``max_features`` that are not constant on the node are evaluated,
    in ascending index order.  The split with the lowest weighted Gini of the
    children wins; ties keep the lowest feature index, then the lowest
    threshold.  Splits with zero improvement are allowed on impure nodes.
    ``max_depth < 0`` means unlimited.
    """
    n = sample_idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    counts = np.zeros((cap, N_CLASSES), dtype=np.float64)

    idx = sample_idx.copy()
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    perm = np.arange(p)
    selected = np.empty(p, dtype=np.int64)
    two_valued = np.zeros(p, dtype=np.bool_)
    low_val = np.zeros(p, dtype=np.float64)
    high_val = np.zeros(p, dtype=np.float64)
    hist = np.zeros((uniq.shape[1], N_CLASSES), dtype=np.float64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    # features known to be constant on the pending node (inherited from its parent)
    stack_const = np.zeros((n + 1, p), dtype=np.bool_)
    node_const = np.zeros(p, dtype=np.bool_)
    for f in range(p):
        stack_const[0, f] = n_uniq[f] < 2
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_start[top]
        e = stack_end[top]
        depth = stack_depth[top]
        m = e - s
        for f in range(p):
            node_const[f] = stack_const[top, f]

        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for i in range(s, e):
            c = y[idx[i]]
            if c == 0:
                c0 += 1.0
            elif c == 1:
                c1 += 1.0
            else:
                c2 += 1.0
        counts[node, 0] = c0
        counts[node, 1] = c1
        counts[node, 2] = c2

        if m < 2 * min_leaf:
            continue
        if c0 == m or c1 == m or c2 == m:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        # feature subset: random visiting order, skip node-constant features
        k = 0
        for j in range(p):
            r = j + _rand_below(state, p - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            if node_const[f]:
                continue
            a = X[idx[s], f]
            b = a
            distinct = 1
            for i in range(s + 1, e):
                v = X[idx[i], f]
                if v != a and v != b:
                    if distinct == 1:
                        b = v
                        distinct = 2
                    else:
                        distinct = 3
                        break
            if distinct == 1:
                node_const[f] = True
            else:
                selected[k] = f
                # remember the two values of two-valued features for the fast path
                if distinct == 2:
                    low_val[f] = min(a, b)
                    high_val[f] = max(a, b)
                    two_valued[f] = True
                else:
                    two_valued[f] = False
                k += 1
                if k == max_features:
                    break
        if k == 0:
            continue
        chosen = np.sort(selected[:k])

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        for q in range(k):
            f = chosen[q]
            if two_valued[f]:
                a = low_val[f]
                b = high_val[f]
                l0 = 0.0
                l1 = 0.0
                l2 = 0.0
                for i in range(s, e):
                    if X[idx[i], f] == a:
                        c = y[idx[i]]
                        if c == 0:
                            l0 += 1.0
                        elif c == 1:
                            l1 += 1.0
                        else:
                            l2 += 1.0
                nl = l0 + l1 + l2
                if nl < min_leaf or m - nl < min_leaf:
                    continue
                score = _child_impurity(l0, l1, l2, c0 - l0, c1 - l1, c2 - l2)
                if score < best_score:
                    best_score = score
                    best_feature = f
                    best_threshold = _midpoint(a, b)
                continue
            n_r = n_uniq[f]
            if n_r <= 2 * m:
                # counting pass over value buckets
                for r in range(n_r):
                    hist[r, 0] = 0.0
                    hist[r, 1] = 0.0
                    hist[r, 2] = 0.0
                for i in range(s, e):
                    hist[ranks[idx[i], f], y[idx[i]]] += 1.0
                l0 = 0.0
                l1 = 0.0
                l2 = 0.0
                prev = -1
                for r in range(n_r):
                    h = hist[r, 0] + hist[r, 1] + hist[r, 2]
                    if h == 0.0:
                        continue
                    if prev >= 0:
                        nl = l0 + l1 + l2
                        if nl >= min_leaf:
                            if m - nl < min_leaf:
                                break
                            score = _child_impurity(l0, l1, l2, c0 - l0, c1 - l1, c2 - l2)
                            if score < best_score:
                                best_score = score
                                best_feature = f
                                best_threshold = _midpoint(uniq[f, prev], uniq[f, r])
                    l0 += hist[r, 0]
                    l1 += hist[r, 1]
                    l2 += hist[r, 2]
                    prev = r
                continue
            for i in range(m):
                vals[i] = X[idx[s + i], f]
            order = np.argsort(vals[:m])
            l0 = 0.0
            l1 = 0.0
            l2 = 0.0
            for i in range(m - 1):
                c = y[idx[s + order[i]]]
                if c == 0:
                    l0 += 1.0
                elif c == 1:
                    l1 += 1.0
                else:
                    l2 += 1.0
                nl = i + 1
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b:
                    continue
                score = _child_impurity(l0, l1, l2, c0 - l0, c1 - l1, c2 - l2)
                if score < best_score:
                    best_score = score
                    best_feature = f
                    best_threshold = _midpoint(a, b)
        if best_feature < 0:
            continue

        # stable partition of idx[s:e]
        nl = 0
        nr = 0
        for i in range(s, e):
            if X[idx[i], best_feature] <= best_threshold:
                idx[s + nl] = idx[i]
                nl += 1
            else:
                buf[nr] = idx[i]
                nr += 1
        for i in range(nr):
            idx[s + nl + i] = buf[i]

        lch = n_nodes
        rch = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = lch
        right[node] = rch
        # right pushed first so the left subtree is processed first
        stack_node[top] = rch
        stack_start[top] = s + nl
        stack_end[top] = e
        stack_depth[top] = depth + 1
        stack_const[top, :] = node_const
        top += 1
        stack_node[top] = lch
        stack_start[top] = s
        stack_end[top] = s + nl
        stack_depth[top] = depth + 1
        stack_const[top, :] = node_const
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
