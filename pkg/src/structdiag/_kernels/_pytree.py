"""Pure-numpy tree kernels.

Reference implementation of the split search and tree traversal. The
compiled kernels in ``_ctree.pyx`` follow the same node order, draw the
same feature samples and evaluate the same floating-point expression for
split scores, so both produce identical trees.

Split score: weighted Gini impurity is minimised by maximising
``sum_c nL_c**2 / nL + sum_c nR_c**2 / nR``. Class counts are exact
integers, so the score needs one division per child and one addition.
"""

import numpy as np

NAME = "python"


def build_tree(X, y, bag, draws, n_classes, min_leaf):
    """Grow one tree on the bootstrap rows ``bag``.

    ``draws[k]`` holds the features sampled (with replacement) for the k-th
    node that attempts a split. Returns ``(feature, threshold, left, right,
    leaf_class)``; ``feature == -1`` marks a leaf. Rows with a value
    ``<= threshold`` go left.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    idx = np.array(bag, dtype=np.intp)
    m = idx.size
    cap = 2 * m - 1
    feature = np.full(cap, -1, dtype=np.intp)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.intp)
    right = np.full(cap, -1, dtype=np.intp)
    leaf_class = np.zeros(cap, dtype=np.intp)

    eye = np.eye(n_classes, dtype=np.float64)
    stack = [(0, m, -1, False)]
    n_nodes = 0
    attempt = 0
    while stack:
        start, end, parent, is_left = stack.pop()
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        rows = idx[start:end]
        ry = y[rows]
        counts = np.bincount(ry, minlength=n_classes)
        leaf_class[node] = int(np.argmax(counts))
        size = end - start
        if size <= min_leaf or counts.max() == size:
            continue
        feats = np.unique(draws[attempt])
        attempt += 1
        total = counts.astype(np.float64)
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for f in feats:
            vals = X[rows, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cand = np.flatnonzero(sv[:-1] < sv[1:])
            if cand.size == 0:
                continue
            cum = np.cumsum(eye[ry[order]], axis=0)[cand]
            nl = (cand + 1).astype(np.float64)
            nr = size - nl
            rc = total - cum
            score = (cum * cum).sum(axis=1) / nl + (rc * rc).sum(axis=1) / nr
            j = int(np.argmax(score))
            if score[j] > best_score:
                best_score = score[j]
                best_f = int(f)
                lo, hi = sv[cand[j]], sv[cand[j] + 1]
                mid = 0.5 * (lo + hi)
                best_thr = mid if mid < hi else lo
        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_thr
        nleft = int(np.count_nonzero(go_left))
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])
        feature[node] = best_f
        threshold[node] = best_thr
        mid_pos = start + nleft
        stack.append((mid_pos, end, node, False))
        stack.append((start, mid_pos, node, True))
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_class[:n_nodes].copy())


def apply_tree(feature, threshold, left, right, leaf_class, X, rows, perm_col=-1, perm_values=None):
    """Leaf class for each of ``X[rows]``.

    With ``perm_col >= 0`` the value of that column for the i-th row is read
    from ``perm_values[i]`` instead of ``X``.
    """
    rows = np.asarray(rows, dtype=np.intp)
    node = np.zeros(rows.size, dtype=np.intp)
    active = np.arange(rows.size)
    while active.size:
        f = feature[node[active]]
        internal = f >= 0
        active = active[internal]
        if not active.size:
            break
        f = f[internal]
        nd = node[active]
        vals = X[rows[active], f]
        if perm_col >= 0:
            vals = np.where(f == perm_col, perm_values[active], vals)
        node[active] = np.where(vals <= threshold[nd], left[nd], right[nd])
    return leaf_class[node]
