"""Hot numeric kernels with numba and pure-numpy twin implementations.

The backend is chosen once at import time from the ``KGEXPAND_NUMBA``
environment variable:

* ``1`` / ``true`` / ``on``  -- require numba (ImportError if missing)
* ``0`` / ``false`` / ``off`` -- pure numpy, even if numba is installed
* unset -- numba when importable, numpy otherwise

Both twins are importable directly (``kd_query_numba`` / ``kd_query_numpy``
etc.) so the benchmark in ``benchmarks/bench_backends.py`` can compare them;
the undecorated names dispatch to the active backend.

All kernels operate on float64 arrays. k-nearest results are returned as
``(indices, squared_distances)`` sorted ascending by ``(distance, index)`` so
ties are broken by the point's position in the index, which callers map to
lexicographic concept ids.
"""

from __future__ import annotations

import os

import numpy as np


def _resolve_backend() -> bool:
    flag = os.environ.get("KGEXPAND_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    if flag in ("1", "true", "on", "yes"):
        import numba  # noqa: F401  (hard requirement when forced on)

        return True
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


NUMBA_ENABLED = _resolve_backend()


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# pure-numpy twins
# ---------------------------------------------------------------------------


def dot_products_numpy(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Dot product of every row of ``points`` with ``q``."""
    return points @ q


def knn_linear_numpy(points: np.ndarray, q: np.ndarray, k: int):
    """Exact k-NN by scanning all rows. The reference every index must match."""
    diff = points - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((np.arange(points.shape[0]), d2))[:k]
    return order.astype(np.int64), d2[order]


def kd_query_numpy(tree, q: np.ndarray, k: int):
    """Same traversal as the numba twin, driven from python.

    ``tree`` is the array-encoded K-D tree built by
    :func:`kgexpand.geometry.build_kd_arrays`; see there for the layout.
    """
    split_dim, split_val, left, right, leaf_start, leaf_count, perm, points = tree
    best_d2 = np.full(k, np.inf)
    best_idx = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
    filled = 0

    stack = [(0, 0.0)]
    while stack:
        node, mind = stack.pop()
        if filled == k and (mind > best_d2[-1]):
            continue
        if left[node] < 0:  # leaf
            s, c = leaf_start[node], leaf_count[node]
            idx = perm[s : s + c]
            diff = points[idx] - q
            d2 = np.einsum("ij,ij->i", diff, diff)
            for j in range(c):
                filled = _insort_numpy(best_d2, best_idx, filled, d2[j], idx[j])
        else:
            delta = q[split_dim[node]] - split_val[node]
            near, far = (left[node], right[node]) if delta <= 0.0 else (right[node], left[node])
            stack.append((far, max(mind, delta * delta)))
            stack.append((near, mind))
    return best_idx, best_d2


def _insort_numpy(best_d2, best_idx, filled, d2, idx):
    k = best_d2.shape[0]
    if filled == k and (d2, idx) >= (best_d2[-1], best_idx[-1]):
        return filled
    pos = filled if filled < k else k - 1
    while pos > 0 and (d2, idx) < (best_d2[pos - 1], best_idx[pos - 1]):
        best_d2[pos] = best_d2[pos - 1]
        best_idx[pos] = best_idx[pos - 1]
        pos -= 1
    best_d2[pos] = d2
    best_idx[pos] = idx
    return min(filled + 1, k)


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def dot_products_numba(points, q):
        n, d = points.shape
        out = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += points[i, j] * q[j]
            out[i] = s
        return out

    @njit(cache=True)
    def knn_linear_numba(points, q, k):
        n, d = points.shape
        best_d2 = np.full(k, np.inf)
        best_idx = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
        filled = 0
        for i in range(n):
            d2 = 0.0
            for j in range(d):
                diff = points[i, j] - q[j]
                d2 += diff * diff
            filled = _insort_numba(best_d2, best_idx, filled, d2, i)
        return best_idx, best_d2

    @njit(cache=True)
    def _insort_numba(best_d2, best_idx, filled, d2, idx):
        k = best_d2.shape[0]
        if filled == k:
            if d2 > best_d2[k - 1] or (d2 == best_d2[k - 1] and idx >= best_idx[k - 1]):
                return filled
        pos = filled if filled < k else k - 1
        while pos > 0 and (
            d2 < best_d2[pos - 1] or (d2 == best_d2[pos - 1] and idx < best_idx[pos - 1])
        ):
            best_d2[pos] = best_d2[pos - 1]
            best_idx[pos] = best_idx[pos - 1]
            pos -= 1
        best_d2[pos] = d2
        best_idx[pos] = idx
        return min(filled + 1, k)

    @njit(cache=True)
    def _kd_query_numba(split_dim, split_val, left, right, leaf_start, leaf_count, perm, points, q, k):
        best_d2 = np.full(k, np.inf)
        best_idx = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
        filled = 0
        n_nodes = split_dim.shape[0]
        stack_node = np.empty(2 * n_nodes + 2, dtype=np.int64)
        stack_mind = np.empty(2 * n_nodes + 2)
        top = 0
        stack_node[top] = 0
        stack_mind[top] = 0.0
        top += 1
        dim = points.shape[1]
        while top > 0:
            top -= 1
            node = stack_node[top]
            mind = stack_mind[top]
            if filled == k and mind > best_d2[k - 1]:
                continue
            if left[node] < 0:
                s = leaf_start[node]
                for p in range(leaf_count[node]):
                    idx = perm[s + p]
                    d2 = 0.0
                    for j in range(dim):
                        diff = points[idx, j] - q[j]
                        d2 += diff * diff
                    filled = _insort_numba(best_d2, best_idx, filled, d2, idx)
            else:
                delta = q[split_dim[node]] - split_val[node]
                if delta <= 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                fard = delta * delta
                if fard < mind:
                    fard = mind
                stack_node[top] = far
                stack_mind[top] = fard
                top += 1
                stack_node[top] = near
                stack_mind[top] = mind
                top += 1
        return best_idx, best_d2

    def kd_query_numba(tree, q, k):
        return _kd_query_numba(*tree, q, k)

else:  # pragma: no cover - exercised when KGEXPAND_NUMBA=0
    dot_products_numba = None
    knn_linear_numba = None
    kd_query_numba = None


# active-backend dispatch
if NUMBA_ENABLED:
    dot_products = dot_products_numba
    knn_linear = knn_linear_numba
    kd_query = kd_query_numba
else:
    dot_products = dot_products_numpy
    knn_linear = knn_linear_numpy
    kd_query = kd_query_numpy
