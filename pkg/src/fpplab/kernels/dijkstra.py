"""Single/multi-source Dijkstra on CSR graphs.

numba lane: binary-heap Dijkstra with lazy deletion, ties broken by dense
vertex index, infinite edge weights never relaxed.  Fallback lane: scipy
csgraph Dijkstra on the same CSR data via a super-source augmentation.
"""

from __future__ import annotations

import os

import numpy as np

_USE_NUMBA = False
if os.environ.get("FPPLAB_NO_NUMBA", "0").lower() not in ("1", "true", "yes"):
    try:
        from numba import njit

        _USE_NUMBA = True
    except ImportError:  # pragma: no cover
        pass


def _dijkstra_heap(indptr, indices, weights, sources, init):
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, np.bool_)
    cap = indices.shape[0] + sources.shape[0] + 1
    heap_d = np.empty(cap)
    heap_v = np.empty(cap, np.int64)
    size = 0
    for i in range(sources.shape[0]):
        s = sources[i]
        d0 = init[i]
        if d0 < dist[s]:
            dist[s] = d0
            # push
            j = size
            heap_d[j] = d0
            heap_v[j] = s
            size += 1
            while j > 0:
                p = (j - 1) >> 1
                if heap_d[p] > heap_d[j] or (heap_d[p] == heap_d[j] and heap_v[p] > heap_v[j]):
                    heap_d[p], heap_d[j] = heap_d[j], heap_d[p]
                    heap_v[p], heap_v[j] = heap_v[j], heap_v[p]
                    j = p
                else:
                    break
    while size > 0:
        d = heap_d[0]
        u = heap_v[0]
        size -= 1
        heap_d[0] = heap_d[size]
        heap_v[0] = heap_v[size]
        j = 0
        while True:
            l = 2 * j + 1
            r = l + 1
            m = j
            if l < size and (heap_d[l] < heap_d[m] or (heap_d[l] == heap_d[m] and heap_v[l] < heap_v[m])):
                m = l
            if r < size and (heap_d[r] < heap_d[m] or (heap_d[r] == heap_d[m] and heap_v[r] < heap_v[m])):
                m = r
            if m == j:
                break
            heap_d[m], heap_d[j] = heap_d[j], heap_d[m]
            heap_v[m], heap_v[j] = heap_v[j], heap_v[m]
            j = m
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            w = weights[k]
            if w == np.inf:
                continue
            v = indices[k]
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                j = size
                heap_d[j] = nd
                heap_v[j] = v
                size += 1
                while j > 0:
                    p = (j - 1) >> 1
                    if heap_d[p] > heap_d[j] or (heap_d[p] == heap_d[j] and heap_v[p] > heap_v[j]):
                        heap_d[p], heap_d[j] = heap_d[j], heap_d[p]
                        heap_v[p], heap_v[j] = heap_v[j], heap_v[p]
                        j = p
                    else:
                        break
    return dist


if _USE_NUMBA:
    _dijkstra_heap = njit(cache=True, nogil=True)(_dijkstra_heap)


def _dijkstra_scipy(indptr, indices, weights, sources, init):
    import scipy.sparse as sparse
    from scipy.sparse.csgraph import dijkstra as cs_dijkstra

    n = indptr.shape[0] - 1
    finite = np.isfinite(weights)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))[finite]
    cols = indices[finite]
    data = weights[finite]
    # super-source n -> each source with its initial offset
    rows = np.concatenate([rows, np.full(len(sources), n, dtype=np.int64)])
    cols = np.concatenate([cols, sources.astype(np.int64)])
    data = np.concatenate([data, init.astype(np.float64)])
    g = sparse.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))
    dist = cs_dijkstra(g, directed=True, indices=n)
    return dist[:n]


def dijkstra(indptr, indices, weights, sources, init=None) -> np.ndarray:
    """Shortest-path distances from the source set on a directed CSR graph.

    ``init`` gives the starting distance per source (default all zero).
    Negative weights are rejected; +inf weights mark absent edges.
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if sources.size == 0:
        raise ValueError("need at least one source")
    n = indptr.shape[0] - 1
    if np.any(sources < 0) or np.any(sources >= n):
        raise ValueError("source outside graph")
    if weights.size and np.nanmin(weights) < 0:
        raise ValueError("negative weights are not allowed")
    if init is None:
        init = np.zeros(sources.shape[0])
    init = np.ascontiguousarray(init, dtype=np.float64)
    if _USE_NUMBA:
        return _dijkstra_heap(indptr, indices, weights, sources, init)
    return _dijkstra_scipy(indptr, indices, weights, sources, init)
