"""Interventional Shapley attributions for forest predictions.

The game for a row ``x`` is ``v(S) = mean_z f(x_S, z_rest)`` over background
rows ``z``, with ``f`` the probability the forest gives to the class it
predicts for ``x``. Features outside ``S`` are taken from the background
row, which breaks any dependence between features.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np

from . import METRICS, VOWELS
from .dataset import FEATURE_NAMES, FeatureTable
from .errors import ExactInfeasibleError, InvalidInputError
from .model import Forest

MAX_EXACT_FEATURES = 12
DEFAULT_PERMUTATIONS = 256
DEFAULT_BACKGROUND = 100
_PERM_CHUNK = 16


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray
    baseline: float
    fx: float
    target: int


@dataclass
class ShapleyTable:
    phi: np.ndarray
    baseline: np.ndarray
    fx: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    mode: str = "sampled"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_attributions(cls, attrs: Sequence[Attribution], mode: str = "sampled", **meta) -> "ShapleyTable":
        return cls(
            np.array([a.phi for a in attrs]).reshape(len(attrs), -1),
            np.array([a.baseline for a in attrs]),
            np.array([a.fx for a in attrs]),
            np.array([a.target for a in attrs], dtype=np.int64),
            mode=mode,
            meta=meta,
        )

    def local_accuracy_error(self) -> np.ndarray:
        return np.abs(self.baseline + self.phi.sum(axis=1) - self.fx)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "target", "baseline", "fx", *self.feature_names])
        for i in range(self.phi.shape[0]):
            w.writerow([i, int(self.target[i]), repr(float(self.baseline[i])), repr(float(self.fx[i])),
                        *(repr(float(v)) for v in self.phi[i])])
        return buf.getvalue()


def _background_array(background) -> np.ndarray:
    bg = background.X if isinstance(background, FeatureTable) else np.asarray(background, dtype=np.float64)
    bg = np.atleast_2d(bg)
    if bg.shape[0] == 0:
        raise InvalidInputError("background set is empty")
    return bg


def sample_background(table: FeatureTable, size: int = DEFAULT_BACKGROUND, seed: int = 0) -> np.ndarray:
    X = table.X
    if X.shape[0] <= size:
        return X
    rng = np.random.default_rng(seed)
    return X[np.sort(rng.choice(X.shape[0], size=size, replace=False))]


def _exact(forest: Forest, x: np.ndarray, bg: np.ndarray, target: int) -> np.ndarray:
    p = x.size
    used = sorted(forest.used_features())
    k = len(used)
    if k > MAX_EXACT_FEATURES:
        raise ExactInfeasibleError(f"model uses {k} features; exact mode supports at most {MAX_EXACT_FEATURES}")
    phi = np.zeros(p)
    if k == 0:
        return phi
    n_masks = 1 << k
    masks = np.arange(n_masks)
    bits = ((masks[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)
    v = np.empty(n_masks)
    for m in range(n_masks):
        z = bg.copy()
        cols = [used[j] for j in range(k) if bits[m, j]]
        z[:, cols] = x[cols]
        v[m] = forest.predict_proba(z)[:, target].mean()
    sizes = bits.sum(axis=1)
    weight = np.array([factorial(s) * factorial(k - s - 1) / factorial(k) for s in range(k)])
    for j in range(k):
        without = masks[~bits[:, j]]
        phi[used[j]] = np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return phi


def _sampled(forest: Forest, x: np.ndarray, bg: np.ndarray, target: int, n_perm: int, seed: int) -> np.ndarray:
    p = x.size
    B = bg.shape[0]
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(p) for _ in range(n_perm)])
    total = np.zeros(p)
    for start in range(0, n_perm, _PERM_CHUNK):
        chunk = perms[start:start + _PERM_CHUNK]
        c = chunk.shape[0]
        # composites[q, j] has the first j features of permutation q taken from x
        comp = np.broadcast_to(bg, (c, p + 1, B, p)).copy()
        for q in range(c):
            for j in range(p):
                comp[q, j + 1:, :, chunk[q, j]] = x[chunk[q, j]]
        f = forest.predict_proba(comp.reshape(-1, p))[:, target].reshape(c, p + 1, B).mean(axis=2)
        deltas = np.diff(f, axis=1)
        for q in range(c):
            total[chunk[q]] += deltas[q]
    return total / n_perm


def shapley_interventional(forest: Forest, x, background, mode: str = "sampled",
                           n_perm: int = DEFAULT_PERMUTATIONS, seed: int = 0) -> Attribution:
    """Attribute the predicted-class probability of ``x`` to its features."""
    x = np.asarray(x, dtype=np.float64).ravel()
    bg = _background_array(background)
    proba = forest.predict_proba(x[None, :])[0]
    target = int(np.argmax(proba))
    baseline = float(forest.predict_proba(bg)[:, target].mean())
    if mode == "exact":
        phi = _exact(forest, x, bg, target)
    elif mode == "sampled":
        phi = _sampled(forest, x, bg, target, n_perm, seed)
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    return Attribution(phi, baseline, float(proba[target]), target)


def explain_table(forest: Forest, rows: np.ndarray, background, mode: str = "sampled",
                  n_perm: int = DEFAULT_PERMUTATIONS, seed: int = 0) -> ShapleyTable:
    attrs = [
        shapley_interventional(forest, r, background, mode, n_perm, int(np.random.SeedSequence([seed, i]).generate_state(1)[0]))
        for i, r in enumerate(np.atleast_2d(rows))
    ]
    return ShapleyTable.from_attributions(attrs, mode=mode)


@dataclass
class Importance:
    per_feature: np.ndarray

    @property
    def layout(self) -> dict[str, dict[str, float]]:
        grid = self.per_feature.reshape(len(VOWELS), len(METRICS))
        return {v: {m: float(grid[i, j]) for j, m in enumerate(METRICS)} for i, v in enumerate(VOWELS)}

    @property
    def per_metric(self) -> dict[str, float]:
        grid = self.per_feature.reshape(len(VOWELS), len(METRICS))
        return {m: float(grid[:, j].sum()) for j, m in enumerate(METRICS)}

    def to_dict(self) -> dict:
        return {
            "per_feature": {n: float(v) for n, v in zip(FEATURE_NAMES, self.per_feature)},
            "by_vowel_metric": self.layout,
            "per_metric_total": self.per_metric,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def aggregate_importance(tables: Sequence[ShapleyTable]) -> Importance:
    """Mean |phi| per feature over every row of every table."""
    if not tables:
        raise InvalidInputError("need at least one Shapley table")
    phi = np.vstack([t.phi for t in tables])
    return Importance(np.abs(phi).mean(axis=0))
