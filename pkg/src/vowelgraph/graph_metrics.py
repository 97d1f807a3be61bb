"""Topological metrics of visibility graphs and Louvain community detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DisconnectedGraphError, UndefinedMetricError
from .graph import Graph

GAIN_TOL = 1e-10


@dataclass(frozen=True)
class Partition:
    """Community id per node; ids are contiguous from 0.

    Ids are ordered by the smallest node they contain, so community 0 always
    holds node 0.
    """

    assignment: tuple[int, ...]

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        seen: dict[int, int] = {}
        out = []
        for lab in labels:
            out.append(seen.setdefault(int(lab), len(seen)))
        return cls(tuple(out))

    @property
    def n_communities(self) -> int:
        return max(self.assignment) + 1 if self.assignment else 0

    def communities(self) -> list[list[int]]:
        groups: list[list[int]] = [[] for _ in range(self.n_communities)]
        for node, c in enumerate(self.assignment):
            groups[c].append(node)
        return groups


@dataclass(frozen=True)
class MetricVector:
    density: float
    aspl: float
    cc: float
    q: float
    meta: dict = field(default_factory=dict, compare=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.density, self.aspl, self.cc, self.q])


def density(g: Graph) -> float:
    if g.n < 2:
        raise UndefinedMetricError("density needs at least two nodes")
    return 2.0 * g.n_edges / (g.n * (g.n - 1))


@njit(cache=True)
def _bfs_distance_total(indptr, indices, n):
    dist = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    total = 0
    for s in range(n):
        dist[:] = -1
        dist[s] = 0
        head, tail = 0, 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    total += dist[v]
                    queue[tail] = v
                    tail += 1
        if tail < n:
            return -1
    return total


@njit(cache=True)
def _local_clustering_sum(indptr, indices, n):
    mark = np.zeros(n, np.bool_)
    total = 0.0
    for u in range(n):
        k = indptr[u + 1] - indptr[u]
        if k < 2:
            continue
        for e in range(indptr[u], indptr[u + 1]):
            mark[indices[e]] = True
        # each triangle through u is seen from both of its other corners
        twice_t = 0
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            for f in range(indptr[v], indptr[v + 1]):
                if mark[indices[f]]:
                    twice_t += 1
        for e in range(indptr[u], indptr[u + 1]):
            mark[indices[e]] = False
        total += twice_t / (k * (k - 1))
    return total


def aspl(g: Graph) -> float:
    """Mean hop distance over all unordered node pairs."""
    if g.n < 2:
        raise UndefinedMetricError("average path length needs at least two nodes")
    adj = g.adjacency
    total = _bfs_distance_total(adj.indptr.astype(np.int64), adj.indices.astype(np.int64), g.n)
    if total < 0:
        raise DisconnectedGraphError("graph is not connected")
    return float(total) / (g.n * (g.n - 1))


def clustering(g: Graph) -> float:
    """Average local clustering; nodes of degree < 2 count as 0."""
    if g.n == 0:
        return 0.0
    adj = g.adjacency
    return _local_clustering_sum(adj.indptr.astype(np.int64), adj.indices.astype(np.int64), g.n) / g.n


def modularity(g: Graph, p: Partition, resolution: float = 1.0) -> float:
    m = g.n_edges
    if m == 0:
        raise UndefinedMetricError("modularity is undefined on an edgeless graph")
    labels = np.asarray(p.assignment)
    if labels.size != g.n:
        raise ValueError("partition does not cover the graph")
    k = labels.max() + 1
    ca, cb = labels[g.edges[:, 0]], labels[g.edges[:, 1]]
    intra = np.bincount(ca[ca == cb], minlength=k).astype(np.float64)
    deg = np.bincount(labels, weights=g.degrees, minlength=k)
    return float(np.sum(intra / m - resolution * (deg / (2.0 * m)) ** 2))


def _one_level(nbrs, strength, m2, order, resolution):
    """Local-move phase on a weighted graph. Returns labels and whether anything moved."""
    n = len(nbrs)
    comm = list(range(n))
    tot = list(strength)
    moved_any = False
    while True:
        moved = False
        for i in order:
            ci = comm[i]
            ki = strength[i]
            tot[ci] -= ki
            links: dict[int, float] = {}
            for j, w in nbrs[i].items():
                cj = comm[j]
                links[cj] = links.get(cj, 0.0) + w
            # gain of joining c relative to being alone, times m
            best_c = ci
            best_gain = links.get(ci, 0.0) - resolution * tot[ci] * ki / m2
            for c in sorted(links):
                gain = links[c] - resolution * tot[c] * ki / m2
                if gain > best_gain + GAIN_TOL:
                    best_c, best_gain = c, gain
            tot[best_c] += ki
            if best_c != ci:
                comm[i] = best_c
                moved = True
                moved_any = True
        if not moved:
            break
    return comm, moved_any


def louvain(g: Graph, seed: int = 0, resolution: float = 1.0) -> Partition:
    """Modularity-maximising partition, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    n = g.n
    if n == 0:
        return Partition(())
    node_comm = list(range(n))
    if g.n_edges == 0:
        return Partition(tuple(node_comm))

    nbrs: list[dict[int, float]] = [dict() for _ in range(n)]
    for a, b in g.edges.tolist():
        nbrs[a][b] = 1.0
        nbrs[b][a] = 1.0
    self_w = [0.0] * n
    m2 = 2.0 * g.n_edges

    while True:
        size = len(nbrs)
        strength = [sum(nb.values()) + 2.0 * self_w[i] for i, nb in enumerate(nbrs)]
        order = rng.permutation(size).tolist()
        comm, moved = _one_level(nbrs, strength, m2, order, resolution)
        if not moved:
            break
        relabel: dict[int, int] = {}
        for c in comm:
            relabel.setdefault(c, len(relabel))
        comm = [relabel[c] for c in comm]
        node_comm = [comm[c] for c in node_comm]
        k = len(relabel)
        new_nbrs: list[dict[int, float]] = [dict() for _ in range(k)]
        new_self = [0.0] * k
        for i in range(size):
            ci = comm[i]
            new_self[ci] += self_w[i]
            for j, w in nbrs[i].items():
                if j < i:
                    continue
                cj = comm[j]
                if ci == cj:
                    new_self[ci] += w
                else:
                    new_nbrs[ci][cj] = new_nbrs[ci].get(cj, 0.0) + w
                    new_nbrs[cj][ci] = new_nbrs[cj].get(ci, 0.0) + w
        nbrs, self_w = new_nbrs, new_self
        if k == size:
            break
    return Partition.from_labels(node_comm)


def metric_vector(g: Graph, seed: int = 0, meta: dict | None = None) -> MetricVector:
    part = louvain(g, seed=seed)
    return MetricVector(
        density=density(g),
        aspl=aspl(g),
        cc=clustering(g),
        q=modularity(g, part),
        meta=dict(meta or {}),
    )
