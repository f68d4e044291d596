# cython: language_level=3
"""Compiled tree kernels.

Mirrors ``_pytree`` exactly: same depth-first node order, same consumption
of the pre-drawn feature samples, same split-score expression. The growth
and traversal loops run without the GIL so trees can be built from a
thread pool.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport free, malloc, qsort

cnp.import_array()

ctypedef cnp.npy_intp intp_t

NAME = "cython"


cdef struct Pair:
    double v
    intp_t y


cdef struct Frame:
    intp_t start
    intp_t end
    intp_t parent
    int is_left


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double va = (<const Pair*>a).v
    cdef double vb = (<const Pair*>b).v
    return (va > vb) - (va < vb)


cdef intp_t _grow(const double[:, ::1] X, const intp_t[::1] y, intp_t[::1] idx,
                  const intp_t[:, ::1] draws, intp_t n_classes, intp_t min_leaf,
                  intp_t[::1] feature, double[::1] threshold, intp_t[::1] left,
                  intp_t[::1] right, intp_t[::1] leaf_class) noexcept nogil:
    cdef intp_t m = idx.shape[0]
    cdef intp_t cap = 2 * m - 1
    cdef intp_t mtry = draws.shape[1]
    cdef Frame* stack = <Frame*>malloc(cap * sizeof(Frame))
    cdef Pair* pairs = <Pair*>malloc(m * sizeof(Pair))
    cdef intp_t* tmp = <intp_t*>malloc(m * sizeof(intp_t))
    cdef double* total = <double*>malloc(n_classes * sizeof(double))
    cdef double* cum = <double*>malloc(n_classes * sizeof(double))
    cdef intp_t* feats = <intp_t*>malloc(mtry * sizeof(intp_t))
    if (stack == NULL or pairs == NULL or tmp == NULL or total == NULL
            or cum == NULL or feats == NULL):
        free(stack); free(pairs); free(tmp); free(total); free(cum); free(feats)
        return -1

    cdef intp_t top = 0, n_nodes = 0, attempt = 0
    cdef intp_t start, end, parent, node, size, i, j, k, c, f, r, nf, best_f, nleft, mid
    cdef int is_left
    cdef double best_score, best_thr, score, sl, sr, dl, dr, nl, lo, hi, half, cmax
    cdef intp_t argmax

    stack[0].start = 0
    stack[0].end = m
    stack[0].parent = -1
    stack[0].is_left = 0
    top = 1
    while top > 0:
        top -= 1
        start = stack[top].start
        end = stack[top].end
        parent = stack[top].parent
        is_left = stack[top].is_left
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        size = end - start
        for c in range(n_classes):
            total[c] = 0.0
        for i in range(start, end):
            total[y[idx[i]]] += 1.0
        argmax = 0
        cmax = total[0]
        for c in range(1, n_classes):
            if total[c] > cmax:
                cmax = total[c]
                argmax = c
        leaf_class[node] = argmax
        if size <= min_leaf or cmax == <double>size:
            continue

        # sorted distinct features of this node's draw
        nf = 0
        for k in range(mtry):
            f = draws[attempt, k]
            j = nf
            while j > 0 and feats[j - 1] > f:
                j -= 1
            if j > 0 and feats[j - 1] == f:
                continue
            i = nf
            while i > j:
                feats[i] = feats[i - 1]
                i -= 1
            feats[j] = f
            nf += 1
        attempt += 1

        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        for k in range(nf):
            f = feats[k]
            for i in range(size):
                r = idx[start + i]
                pairs[i].v = X[r, f]
                pairs[i].y = y[r]
            qsort(pairs, size, sizeof(Pair), _cmp_pair)
            for c in range(n_classes):
                cum[c] = 0.0
            for i in range(size - 1):
                cum[pairs[i].y] += 1.0
                if pairs[i].v < pairs[i + 1].v:
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        sl = sl + cum[c] * cum[c]
                        dr = total[c] - cum[c]
                        sr = sr + dr * dr
                    nl = <double>(i + 1)
                    score = sl / nl + sr / (<double>size - nl)
                    if best_f < 0 or score > best_score:
                        best_score = score
                        best_f = f
                        lo = pairs[i].v
                        hi = pairs[i + 1].v
                        half = 0.5 * (lo + hi)
                        best_thr = half if half < hi else lo
        if best_f < 0:
            continue

        nleft = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                tmp[nleft] = r
                nleft += 1
        j = nleft
        for i in range(start, end):
            r = idx[i]
            if not (X[r, best_f] <= best_thr):
                tmp[j] = r
                j += 1
        for i in range(size):
            idx[start + i] = tmp[i]
        feature[node] = best_f
        threshold[node] = best_thr
        mid = start + nleft
        stack[top].start = mid
        stack[top].end = end
        stack[top].parent = node
        stack[top].is_left = 0
        top += 1
        stack[top].start = start
        stack[top].end = mid
        stack[top].parent = node
        stack[top].is_left = 1
        top += 1

    free(stack); free(pairs); free(tmp); free(total); free(cum); free(feats)
    return n_nodes


def build_tree(X, y, bag, draws, intp_t n_classes, intp_t min_leaf):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const intp_t[::1] yv = np.ascontiguousarray(y, dtype=np.intp)
    cdef intp_t[::1] idx = np.array(bag, dtype=np.intp)
    cdef const intp_t[:, ::1] dv = np.ascontiguousarray(draws, dtype=np.intp)
    cdef intp_t m = idx.shape[0]
    if m < 1:
        raise ValueError("empty bag")
    cdef intp_t cap = 2 * m - 1
    if dv.shape[0] < cap:
        raise ValueError("draws must have at least 2 * len(bag) - 1 rows")
    feature = np.full(cap, -1, dtype=np.intp)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.intp)
    right = np.full(cap, -1, dtype=np.intp)
    leaf_class = np.zeros(cap, dtype=np.intp)
    cdef intp_t[::1] fv = feature
    cdef double[::1] tv = threshold
    cdef intp_t[::1] lv = left
    cdef intp_t[::1] rv = right
    cdef intp_t[::1] cv = leaf_class
    cdef intp_t n_nodes
    with nogil:
        n_nodes = _grow(Xv, yv, idx, dv, n_classes, min_leaf, fv, tv, lv, rv, cv)
    if n_nodes < 0:
        raise MemoryError("tree workspace allocation failed")
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_class[:n_nodes].copy())


def apply_tree(feature, threshold, left, right, leaf_class, X, rows, intp_t perm_col=-1,
               perm_values=None):
    cdef const intp_t[::1] fv = np.ascontiguousarray(feature, dtype=np.intp)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const intp_t[::1] lv = np.ascontiguousarray(left, dtype=np.intp)
    cdef const intp_t[::1] rv = np.ascontiguousarray(right, dtype=np.intp)
    cdef const intp_t[::1] cv = np.ascontiguousarray(leaf_class, dtype=np.intp)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const intp_t[::1] rows_v = np.ascontiguousarray(rows, dtype=np.intp)
    cdef intp_t k = rows_v.shape[0]
    if perm_values is None:
        perm_values = np.zeros(0, dtype=np.float64)
        perm_col = -1
    cdef const double[::1] pv = np.ascontiguousarray(perm_values, dtype=np.float64)
    if perm_col >= 0 and pv.shape[0] < k:
        raise ValueError("perm_values shorter than rows")
    out = np.empty(k, dtype=np.intp)
    cdef intp_t[::1] ov = out
    cdef intp_t i, node, f
    cdef double v
    with nogil:
        for i in range(k):
            node = 0
            f = fv[0]
            while f >= 0:
                if f == perm_col:
                    v = pv[i]
                else:
                    v = Xv[rows_v[i], f]
                if v <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
                f = fv[node]
            ov[i] = cv[node]
    return out
