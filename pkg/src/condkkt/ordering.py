"""Fill-reducing orderings for symmetric sparse matrices."""

from __future__ import annotations

import heapq

import numpy as np

from .sparse import SparseSymCsc


def adjacency(A: SparseSymCsc) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(A.n)]
    cols = A.columns()
    for i, j in zip(A.row_idx.tolist(), cols.tolist()):
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    return adj


def minimum_degree(adj: list[set[int]], candidates=None) -> list[int]:
    """Greedy minimum-degree elimination on an explicit elimination graph.

    Only vertices in ``candidates`` (default: all) are eliminated; their
    elimination still creates fill among the remaining vertices. Ties are
    broken by smallest index, which keeps the result deterministic.
    """
    n = len(adj)
    graph = [set(a) for a in adj]
    pool = set(range(n)) if candidates is None else set(candidates)
    heap = [(len(graph[v]), v) for v in pool]
    heapq.heapify(heap)
    order: list[int] = []
    done = np.zeros(n, dtype=bool)
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(graph[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = graph[v]
        for a in nbrs:
            graph[a].discard(v)
            graph[a].update(nbrs - {a})
        for a in nbrs:
            if a in pool and not done[a]:
                heapq.heappush(heap, (len(graph[a]), a))
        graph[v] = set()
        # eliminated vertices are also dropped from the rest of the graph
        for a in nbrs:
            graph[a].discard(v)
    return order


def amd_order(A: SparseSymCsc, method: str = "mindeg", last=None) -> np.ndarray:
    """Return a fill-reducing permutation ``perm`` (new position -> old index).

    ``method`` is ``"mindeg"`` or ``"identity"``. Indices listed in ``last``
    are ordered after every other index (minimum degree within each group),
    which keeps pivot-free factorizations of saddle-point matrices away
    from structurally zero pivots.
    """
    n = A.n
    if method == "identity" or n == 0:
        return np.arange(n)
    if method != "mindeg":
        raise ValueError(f"unknown ordering method {method!r}")
    adj = adjacency(A)
    if last is None or len(last) == 0:
        return np.array(minimum_degree(adj), dtype=np.int64)
    last = sorted(set(int(i) for i in last))
    first = sorted(set(range(n)) - set(last))
    head = minimum_degree(adj, first)
    # continue on the graph left after eliminating the head group
    graph = [set(a) for a in adj]
    for v in head:
        nbrs = graph[v]
        for a in nbrs:
            graph[a].discard(v)
            graph[a].update(nbrs - {a})
        graph[v] = set()
    tail = minimum_degree(graph, last)
    return np.array(head + tail, dtype=np.int64)


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


def fill_in(A: SparseSymCsc, perm: np.ndarray) -> int:
    """Number of entries created in L beyond the strict lower pattern of A."""
    from .ldlt import symbolic_analyze

    plan = symbolic_analyze(A, perm)
    strict_A = int(np.count_nonzero(A.row_idx != A.columns()))
    return plan.nnz_l - strict_A
