"""Minimal immutable undirected simple graph used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy import sparse


def _normalize_edges(edges: Iterable[tuple[int, int]] | np.ndarray) -> np.ndarray:
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    arr = np.sort(arr, axis=1)
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ValueError("self-loops are not allowed")
    arr = np.unique(arr, axis=0)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` is an ``(E, 2)`` integer array with ``a < b`` in each row,
    lexicographically sorted and duplicate free.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        edges = _normalize_edges(self.edges)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)
        edges.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        return cls(n, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2))

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        a, b = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(a), dtype=np.float64)
        rows = np.concatenate([a, b])
        cols = np.concatenate([b, a])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        """Sorted neighbour arrays, one per node."""
        adj = self.adjacency
        return [adj.indices[adj.indptr[i]:adj.indptr[i + 1]].copy() for i in range(self.n)]

    @property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def relabel(self, perm: np.ndarray) -> "Graph":
        """Graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self.n, perm[self.edges])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self) -> int:
        return hash((self.n, self.edges.tobytes()))

    def to_edgelist(self) -> str:
        """One ``"a b"`` pair per line, sorted."""
        return "".join(f"{a} {b}\n" for a, b in self.edges)

    @classmethod
    def from_edgelist(cls, text: str, n: int | None = None) -> "Graph":
        pairs = [tuple(int(v) for v in line.split()) for line in text.splitlines() if line.strip()]
        if n is None:
            n = 1 + max((max(p) for p in pairs), default=-1)
        return cls.from_edges(n, pairs)


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
