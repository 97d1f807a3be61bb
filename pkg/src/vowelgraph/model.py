"""Random Forest speaker classifier built from Gini CART trees.

Features are binned once per training table into integer codes (one code per
distinct value) so the split search is a histogram scan. Thresholds are the
midpoints between adjacent distinct values present at a node, and samples
with ``x <= threshold`` go left.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .dataset import FeatureTable
from .errors import DegenerateLabelsError, InvalidInputError

MODEL_FORMAT = "vowelgraph-forest"
MODEL_VERSION = 1
N_ESTIMATORS_GRID = tuple(range(5, 51, 5))
MAX_DEPTH_GRID = tuple(range(5, 16))


@njit(cache=True)
def _build_tree(codes, uniq, n_uniq, y, sample, n_classes, max_depth, mtry, seed):
    np.random.seed(seed)
    n_feat = codes.shape[1]
    cap = 2 * sample.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes))
    depth_of = np.zeros(cap, dtype=np.int64)

    idx = sample.copy()
    stack = np.empty((cap, 3), dtype=np.int64)  # node, start, end
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = idx.shape[0]
    top = 1
    n_nodes = 1
    feats = np.arange(n_feat)
    max_u = uniq.shape[1]
    hist = np.zeros((max_u, n_classes))
    lc = np.zeros(n_classes)
    total = np.zeros(n_classes)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        n = end - start
        total[:] = 0.0
        for t in range(start, end):
            total[y[idx[t]]] += 1.0
        value[node, :] = total
        n_present = 0
        for c in range(n_classes):
            if total[c] > 0:
                n_present += 1
        if depth_of[node] >= max_depth or n_present <= 1 or n < 2:
            continue

        # partial Fisher-Yates draw of mtry candidate features
        for j in range(mtry):
            r = j + int(np.random.random() * (n_feat - j))
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp

        best_score = -1.0
        best_f = -1
        best_code = -1
        best_thr = 0.0
        for j in range(mtry):
            f = feats[j]
            nu = n_uniq[f]
            hist[:nu, :] = 0.0
            for t in range(start, end):
                i = idx[t]
                hist[codes[i, f], y[i]] += 1.0
            lc[:] = 0.0
            n_left = 0.0
            sq_left = 0.0
            prev = -1
            for u in range(nu):
                cnt = 0.0
                for c in range(n_classes):
                    cnt += hist[u, c]
                if cnt == 0.0:
                    continue
                if prev >= 0:
                    n_right = n - n_left
                    sq_right = 0.0
                    for c in range(n_classes):
                        rc = total[c] - lc[c]
                        sq_right += rc * rc
                    score = sq_left / n_left + sq_right / n_right
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_code = prev
                        thr = 0.5 * (uniq[f, prev] + uniq[f, u])
                        if thr >= uniq[f, u]:
                            thr = uniq[f, prev]
                        best_thr = thr
                for c in range(n_classes):
                    h = hist[u, c]
                    if h > 0.0:
                        sq_left += 2.0 * lc[c] * h + h * h
                        lc[c] += h
                n_left += cnt
                prev = u
        if best_f < 0:
            continue

        lo = start
        hi = end - 1
        while lo <= hi:
            if codes[idx[lo], best_f] <= best_code:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        depth_of[lnode] = depth_of[node] + 1
        depth_of[rnode] = depth_of[node] + 1
        stack[top, 0] = rnode
        stack[top, 1] = lo
        stack[top, 2] = end
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = lo
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), depth_of[:n_nodes].copy())


@njit(cache=True)
def _predict_packed(X, feature, threshold, left, right, dist, roots, n_trees):
    n = X.shape[0]
    out = np.zeros((n, dist.shape[1]))
    for i in range(n):
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, :] += dist[node, :]
        out[i, :] /= n_trees
    return out


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    max_depth: int
    seed: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def max_leaf_depth(self) -> int:
        return int(self.depth.max()) if self.depth.size else 0

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _Packed([self]).predict_proba(np.asarray(X, dtype=np.float64), 1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "depth": self.depth.tolist(),
            "max_depth": self.max_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
            np.asarray(d["depth"], dtype=np.int64),
            int(d["max_depth"]),
            int(d["seed"]),
        )


class _Packed:
    """All trees of a forest concatenated into flat arrays for fast traversal."""

    def __init__(self, trees: Sequence[Tree]):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees])
        self.roots = offsets[:-1].astype(np.int64)
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
        value = np.concatenate([t.value for t in trees])
        totals = value.sum(axis=1, keepdims=True)
        self.dist = np.divide(value, totals, out=np.zeros_like(value), where=totals > 0)

    def predict_proba(self, X: np.ndarray, n_trees: int) -> np.ndarray:
        return _predict_packed(X, self.feature, self.threshold, self.left, self.right, self.dist,
                               self.roots, n_trees)


@dataclass
class Forest:
    trees: list[Tree]
    n_estimators: int
    max_depth: int
    classes: tuple[str, ...]
    feature_count: int
    seed: int
    _packed: _Packed | None = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def packed(self) -> _Packed:
        if self._packed is None:
            self._packed = _Packed(self.trees)
        return self._packed

    def used_features(self) -> set[int]:
        return set().union(*(t.used_features() for t in self.trees))

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_count:
            raise InvalidInputError(f"expected {self.feature_count} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features must be finite")
        return X

    def predict_proba(self, X, n_trees: int | None = None) -> np.ndarray:
        n_trees = len(self.trees) if n_trees is None else n_trees
        return self.packed.predict_proba(self._check(X), n_trees)

    def predict_ids(self, X, n_trees: int | None = None) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return np.argmax(self.predict_proba(X, n_trees), axis=1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": MODEL_FORMAT,
                "version": MODEL_VERSION,
                "n_estimators": self.n_estimators,
                "max_depth": self.max_depth,
                "classes": list(self.classes),
                "feature_count": self.feature_count,
                "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        d = json.loads(text)
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise InvalidInputError("unrecognised model file")
        return cls([Tree.from_dict(t) for t in d["trees"]], d["n_estimators"], d["max_depth"],
                   tuple(d["classes"]), d["feature_count"], d["seed"])


def predict(forest: Forest, features) -> tuple[int, np.ndarray]:
    """Class id and probability vector for one feature vector."""
    proba = forest.predict_proba(np.asarray(features, dtype=np.float64).reshape(1, -1))[0]
    return int(np.argmax(proba)), proba


@dataclass
class _Binned:
    codes: np.ndarray
    uniq: np.ndarray
    n_uniq: np.ndarray


def _bin(X: np.ndarray) -> _Binned:
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int64)
    uniqs = []
    for f in range(p):
        u, inv = np.unique(X[:, f], return_inverse=True)
        codes[:, f] = inv
        uniqs.append(u)
    max_u = max(len(u) for u in uniqs)
    uniq = np.zeros((p, max_u))
    for f, u in enumerate(uniqs):
        uniq[f, : len(u)] = u
    return _Binned(codes, uniq, np.array([len(u) for u in uniqs], dtype=np.int64))


def _tree_seeds(seed: int, index: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([seed, index])
    state = ss.generate_state(2)
    return np.random.default_rng(int(state[0])), int(state[1])


def _encode_labels(labels: Sequence[str], classes: Sequence[str] | None = None) -> tuple[np.ndarray, tuple[str, ...]]:
    classes = tuple(sorted(set(labels))) if classes is None else tuple(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    return np.array([lookup[l] for l in labels], dtype=np.int64), classes


def feature_subset_size(n_features: int) -> int:
    return max(1, math.ceil(math.sqrt(n_features)))


def train_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int, seed: int,
               bootstrap: np.ndarray | None = None, mtry: int | None = None, _binned: _Binned | None = None) -> Tree:
    """One CART tree on the rows listed in ``bootstrap`` (all rows if omitted)."""
    X = np.asarray(X, dtype=np.float64)
    binned = _binned or _bin(X)
    sample = np.arange(X.shape[0]) if bootstrap is None else np.asarray(bootstrap, dtype=np.int64)
    if sample.size == 0:
        raise InvalidInputError("bootstrap sample is empty")
    mtry = feature_subset_size(X.shape[1]) if mtry is None else mtry
    arrays = _build_tree(binned.codes, binned.uniq, binned.n_uniq, np.asarray(y, dtype=np.int64), sample,
                         n_classes, max_depth, mtry, seed % (2 ** 32))
    return Tree(*arrays, max_depth=max_depth, seed=seed)


def train_forest(table: FeatureTable | tuple[np.ndarray, Sequence[str]], n_estimators: int, max_depth: int,
                 seed: int = 0, classes: Sequence[str] | None = None) -> Forest:
    """Bagged CART ensemble; tree ``t`` depends only on ``(seed, t)``."""
    X, labels = (table.X, table.labels) if isinstance(table, FeatureTable) else table
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise InvalidInputError("training table is empty")
    y, classes = _encode_labels(labels, classes)
    if len(set(y.tolist())) < 2:
        raise DegenerateLabelsError("training labels cover a single class")
    binned = _bin(X)
    trees = []
    for t in range(n_estimators):
        boot_rng, tree_seed = _tree_seeds(seed, t)
        boot = boot_rng.integers(0, X.shape[0], size=X.shape[0])
        trees.append(train_tree(X, y, len(classes), max_depth, tree_seed, boot, _binned=binned))
    return Forest(trees, n_estimators, max_depth, classes, X.shape[1], seed)


@dataclass
class GridResult:
    n_estimators: int
    max_depth: int
    scores: dict[tuple[int, int], float]
    forest: Forest

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "cells": len(self.scores),
            "val_accuracy": [[n, d, s] for (n, d), s in sorted(self.scores.items())],
        }


def grid_search(train: FeatureTable, val: FeatureTable, n_estimators_grid: Sequence[int] = N_ESTIMATORS_GRID,
                max_depth_grid: Sequence[int] = MAX_DEPTH_GRID, seed: int = 0,
                classes: Sequence[str] | None = None) -> GridResult:
    """Pick (n_estimators, max_depth) by validation accuracy, then refit on train+val.

    Ties prefer fewer estimators, then shallower trees. For each depth only the
    largest forest is grown; smaller forests are its leading trees, which is
    exactly what training them separately would produce.
    """
    if not n_estimators_grid or not max_depth_grid:
        raise InvalidInputError("hyperparameter grids must be non-empty")
    classes = tuple(sorted(set(train.labels))) if classes is None else tuple(classes)
    y_val, _ = _encode_labels(val.labels, classes)
    scores: dict[tuple[int, int], float] = {}
    for depth in sorted(max_depth_grid):
        big = train_forest(train, max(n_estimators_grid), depth, seed, classes)
        for n_est in sorted(n_estimators_grid):
            pred = big.predict_ids(val.X, n_est)
            scores[(n_est, depth)] = float(np.mean(pred == y_val))
    best = max(scores.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))[0]
    dev = FeatureTable.concat([train, val], "dev")
    forest = train_forest(dev, best[0], best[1], seed, classes)
    return GridResult(best[0], best[1], scores, forest)


@dataclass
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    undefined_precision: tuple[str, ...] = ()

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1},
            "accuracy": self.accuracy,
            "undefined_precision": list(self.undefined_precision),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support"])
        for c, p, r, f, s in zip(self.classes, self.precision, self.recall, self.f1, self.support):
            w.writerow([c, repr(float(p)), repr(float(r)), repr(float(f)), int(s)])
        w.writerow(["macro", repr(self.macro_precision), repr(self.macro_recall), repr(self.macro_f1),
                    int(self.support.sum())])
        return buf.getvalue()


def report_from_confusion(confusion: np.ndarray, classes: Sequence[str]) -> EvalReport:
    cm = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_pos > 0, tp / pred_pos, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    undefined = tuple(c for c, p in zip(classes, pred_pos) if p == 0)
    return EvalReport(tuple(classes), cm, precision, recall, f1, undefined)


def evaluate(forest: Forest, test: FeatureTable) -> EvalReport:
    if len(test) == 0:
        raise InvalidInputError("test table is empty")
    y, _ = _encode_labels(test.labels, forest.classes)
    pred = forest.predict_ids(test.X)
    k = forest.n_classes
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y, pred), 1)
    return report_from_confusion(cm, forest.classes)
