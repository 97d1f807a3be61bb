"""Leakage-free train/validation/test splits and five-vowel feature rows."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import METRICS, VOWELS
from .errors import IncompleteVowelError, InsufficientDataError
from .graph_metrics import MetricVector

PARTITIONS = ("train", "val", "test")
DEFAULT_RATIOS = (0.4, 0.3, 0.3)
FEATURE_NAMES = tuple(f"{v}_{m}" for v in VOWELS for m in METRICS)


class CombinationCapWarning(UserWarning):
    """Fewer distinct vowel combinations exist than were requested."""


@dataclass(frozen=True)
class Splits:
    """Per (subject, vowel) group: segment ids for each partition."""

    groups: dict[tuple[str, str], dict[str, tuple[str, ...]]]
    seed: int

    def ids(self, subject: str, vowel: str, partition: str) -> tuple[str, ...]:
        return self.groups.get((subject, vowel), {}).get(partition, ())

    def partition_of(self) -> dict[str, str]:
        return {sid: part for g in self.groups.values() for part, ids in g.items() for sid in ids}

    @property
    def subjects(self) -> list[str]:
        return sorted({s for s, _ in self.groups})


@dataclass(frozen=True)
class FeatureRow:
    features: tuple[float, ...]
    label: str
    provenance: tuple[str, ...]


@dataclass
class FeatureTable:
    rows: list[FeatureRow]
    partition: str
    seed: int
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(FEATURE_NAMES)))
        return np.array([r.features for r in self.rows], dtype=np.float64)

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rows]

    def with_labels(self, labels: Sequence[str]) -> "FeatureTable":
        rows = [FeatureRow(r.features, lab, r.provenance) for r, lab in zip(self.rows, labels)]
        return FeatureTable(rows, self.partition, self.seed, list(self.warnings))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*FEATURE_NAMES, "label", *(f"seg_{v}" for v in VOWELS)])
        for r in self.rows:
            w.writerow([*(repr(float(v)) for v in r.features), r.label, *r.provenance])
        return buf.getvalue()

    @classmethod
    def concat(cls, tables: Sequence["FeatureTable"], partition: str | None = None) -> "FeatureTable":
        rows = [r for t in tables for r in t.rows]
        warns = [w for t in tables for w in t.warnings]
        return cls(rows, partition or tables[0].partition, tables[0].seed if tables else 0, warns)


def split_segments(groups: Mapping[tuple[str, str], Sequence[str]], ratios: Sequence[float] = DEFAULT_RATIOS,
                   seed: int = 0) -> Splits:
    """Shuffle each group and cut it at ``round(r0*n)`` and ``round((r0+r1)*n)``.

    Python's ``round`` is half-to-even.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three fractions summing to 1")
    rng = np.random.default_rng(seed)
    out: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    for key in sorted(groups):
        ids = sorted(groups[key])
        n = len(ids)
        if n < 3:
            raise InsufficientDataError(f"group {key} has {n} segments, need at least 3")
        order = [ids[i] for i in rng.permutation(n)]
        c1 = round(ratios[0] * n)
        c2 = round((ratios[0] + ratios[1]) * n)
        out[key] = {"train": tuple(order[:c1]), "val": tuple(order[c1:c2]), "test": tuple(order[c2:])}
    return Splits(out, seed)


def _draw_indices(total: int, k: int, rng: np.random.Generator) -> list[int]:
    if total <= 4 * k:
        return rng.choice(total, size=min(k, total), replace=False).tolist()
    seen: set[int] = set()
    out = []
    while len(out) < k:
        for i in rng.integers(0, total, size=k - len(out)).tolist():
            if i not in seen:
                seen.add(i)
                out.append(i)
                if len(out) == k:
                    break
    return out


def sample_combinations(splits: Splits, metrics: Mapping[str, MetricVector], subject: str, partition: str,
                        k: int = 1000, seed: int = 0) -> FeatureTable:
    """Up to ``k`` distinct one-segment-per-vowel tuples of a subject within one partition."""
    pools = [splits.ids(subject, v, partition) for v in VOWELS]
    missing = [v for v, p in zip(VOWELS, pools) if not p]
    if missing:
        raise IncompleteVowelError(f"{subject} has no {partition} segments for vowels {missing}")
    counts = tuple(len(p) for p in pools)
    total = int(np.prod(counts, dtype=np.int64))
    rng = np.random.default_rng(seed)
    notes = []
    if total < k:
        msg = f"{subject}/{partition}: only {total} combinations available, {k} requested"
        warnings.warn(msg, CombinationCapWarning, stacklevel=2)
        notes.append(msg)
    per_seg = {sid: metrics[sid].as_array() for p in pools for sid in p}
    rows = []
    for flat in _draw_indices(total, k, rng):
        idx = np.unravel_index(flat, counts)
        prov = tuple(pools[j][int(i)] for j, i in enumerate(idx))
        feats = np.concatenate([per_seg[sid] for sid in prov])
        rows.append(FeatureRow(tuple(float(v) for v in feats), subject, prov))
    return FeatureTable(rows, partition, seed, notes)


def build_table(splits: Splits, metrics: Mapping[str, MetricVector], partition: str, k: int = 1000,
                seed: int = 0) -> FeatureTable:
    """All subjects' combinations for one partition, subjects in sorted order."""
    tables = []
    for i, subject in enumerate(splits.subjects):
        sub_seed = int(np.random.SeedSequence([seed, i, PARTITIONS.index(partition)]).generate_state(1)[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CombinationCapWarning)
            tables.append(sample_combinations(splits, metrics, subject, partition, k, sub_seed))
    return FeatureTable.concat(tables, partition)
