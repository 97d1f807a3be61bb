"""Pick the most typical spectral profiles of one (speaker, vowel) group.

Profiles are linked when their log-power correlation reaches a threshold; the
largest community of that graph is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateProfileError, InvalidInputError
from .graph import Graph
from .graph_metrics import Partition, louvain
from .spectrum import SpectralProfile

DEFAULT_THRESHOLD = 0.9


@dataclass(frozen=True)
class Selection:
    kept: tuple[int, ...]
    community_sizes: tuple[int, ...]
    n_total: int

    @property
    def retained_fraction(self) -> float:
        return len(self.kept) / self.n_total if self.n_total else 0.0

    def to_dict(self) -> dict:
        return {
            "kept": list(self.kept),
            "community_sizes": list(self.community_sizes),
            "n_total": self.n_total,
            "retained_fraction": self.retained_fraction,
        }


def correlation_matrix(profiles: Sequence[SpectralProfile] | np.ndarray) -> np.ndarray:
    """Pearson correlations between log-power vectors (rows)."""
    if isinstance(profiles, np.ndarray):
        x = np.asarray(profiles, dtype=np.float64)
    else:
        x = np.vstack([np.asarray(p.log_power, dtype=np.float64) for p in profiles])
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError("need at least two profiles of equal length")
    xc = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    flat = np.flatnonzero(norms == 0)
    if flat.size:
        raise DegenerateProfileError(int(flat[0]))
    xn = xc / norms[:, None]
    corr = np.clip(xn @ xn.T, -1.0, 1.0)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return corr


def threshold_graph(corr: np.ndarray, threshold: float) -> Graph:
    n = corr.shape[0]
    iu = np.triu_indices(n, k=1)
    hit = corr[iu] >= threshold
    return Graph(n, np.column_stack([iu[0][hit], iu[1][hit]]))


def select_representatives(corr: np.ndarray, threshold: float = DEFAULT_THRESHOLD, mode: str = "community",
                           seed: int = 0) -> Selection:
    """Indices of the largest community of the thresholded correlation graph.

    ``mode="component"`` uses connected components instead of Louvain
    communities. Ties go to the group holding the smallest index. With no
    edges at all, the single profile with the highest mean correlation is
    returned.
    """
    if not -1.0 < threshold < 1.0:
        raise InvalidInputError("threshold must lie in (-1, 1)")
    corr = np.asarray(corr, dtype=np.float64)
    n = corr.shape[0]
    g = threshold_graph(corr, threshold)
    if g.n_edges == 0:
        best = int(np.argmax(corr.mean(axis=1)))
        return Selection((best,), tuple([1] * n), n)
    if mode == "community":
        part = louvain(g, seed=seed)
    elif mode == "component":
        _, labels = connected_components(g.adjacency, directed=False)
        part = Partition.from_labels(labels)
    else:
        raise InvalidInputError(f"unknown selection mode {mode!r}")
    groups = part.communities()
    # communities are numbered by their smallest member, so max() keeps the first on ties
    largest = max(groups, key=len)
    sizes = tuple(sorted((len(c) for c in groups), reverse=True))
    return Selection(tuple(largest), sizes, n)
