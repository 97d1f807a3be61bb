"""End-to-end orchestration: corpus, spectra, selection, graphs, runs and sweeps.

Every file written here is a pure function of the config and master seed;
timings and host details go to the log only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import METRICS, VOWELS
from .audio_io import PIPELINE_RATE, read_wav, resample
from .dataset import FeatureTable, Splits, build_table, split_segments
from .errors import InvalidInputError, StageError, VowelGraphError
from .explain import ShapleyTable, aggregate_importance, explain_table, sample_background
from .graph_metrics import MetricVector, metric_vector
from .model import MAX_DEPTH_GRID, N_ESTIMATORS_GRID, EvalReport, Forest, GridResult, evaluate, grid_search
from .preprocess import GateParams, Segment, spectral_gate, split_on_silence
from .rep_select import Selection, correlation_matrix, select_representatives
from .spectrum import SpectralProfile, lpc_profile
from .stats import ranksum
from .synth import load_profiles, synth_corpus
from .visgraph import nvg_fast

log = logging.getLogger(__name__)

DEFAULT_ORDERS = tuple(range(10, 21))
DEFAULT_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
REFERENCE_ORDER = 13
REFERENCE_THRESHOLD = 0.9
CORR_BINS = np.linspace(-1.0, 1.0, 41)

GroupKey = tuple[str, str]


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str | None = None
    speakers: str | None = None
    segments_per_vowel: int = 25
    synth_seed: int = 0
    sample_rate: int = PIPELINE_RATE
    lpc_order: int = 13
    n_bins: int = 512
    corr_threshold: float = 0.9
    selection_mode: str = "community"
    ratios: tuple[float, float, float] = (0.4, 0.3, 0.3)
    k_combinations: int = 1000
    n_estimators_grid: tuple[int, ...] = N_ESTIMATORS_GRID
    max_depth_grid: tuple[int, ...] = MAX_DEPTH_GRID
    n_runs: int = 10
    seed: int = 0
    out_dir: str = "out"
    permute_labels: bool = False
    threads: int = 1
    explain: bool = True
    shap_rows_per_class: int = 1
    shap_background: int = 100
    shap_permutations: int = 256
    sweep_explain: bool = False
    lpc_orders: tuple[int, ...] = DEFAULT_ORDERS
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    gate: bool = True
    split_silence: bool = True
    min_silence_ms: float = 300.0
    silence_thresh_db: float = -40.0
    keep_ms: float = 50.0
    min_segment_ms: float = 150.0

    def __post_init__(self):
        if not 1 <= self.lpc_order <= 40:
            raise InvalidInputError("lpc_order must be in [1, 40]")
        if not 0.0 < self.corr_threshold < 1.0:
            raise InvalidInputError("corr_threshold must be in (0, 1)")
        if self.n_runs < 1 or self.threads < 1:
            raise InvalidInputError("n_runs and threads must be positive")
        if self.n_bins < 2 or self.k_combinations < 1:
            raise InvalidInputError("n_bins must be >= 2 and k_combinations >= 1")
        if self.selection_mode not in ("community", "component"):
            raise InvalidInputError(f"unknown selection_mode {self.selection_mode!r}")
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-9 or min(self.ratios) <= 0:
            raise InvalidInputError("ratios must be three positive fractions summing to 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys: {unknown}")
        tuples = {"ratios", "n_estimators_grid", "max_depth_grid", "lpc_orders", "thresholds"}
        return cls(**{k: tuple(v) if k in tuples else v for k, v in d.items()})

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def result_dict(self) -> dict:
        # keys that cannot change any result are left out so reports do not depend on where they are written
        return {k: v for k, v in self.to_dict().items() if k not in ("out_dir", "threads")}


# ---------------------------------------------------------------- corpus


def _load_directory(cfg: PipelineConfig) -> list[Segment]:
    root = Path(cfg.input_dir)
    if not root.is_dir():
        raise InvalidInputError(f"input directory {root} not found")
    gate = GateParams()
    out = []
    for subj_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for vowel in VOWELS:
            idx = 0
            for wav in sorted((subj_dir / vowel).glob("*.wav")):
                buf = resample(read_wav(wav), cfg.sample_rate)
                if cfg.gate:
                    buf = spectral_gate(buf, gate)
                pieces = (split_on_silence(buf, cfg.min_silence_ms, cfg.silence_thresh_db, cfg.keep_ms,
                                           cfg.min_segment_ms) if cfg.split_silence else [buf])
                for piece in pieces:
                    out.append(Segment(piece, subj_dir.name, vowel, idx))
                    idx += 1
    if not out:
        raise InvalidInputError(f"no segments found under {root}")
    return out


def load_segments(cfg: PipelineConfig) -> list[Segment]:
    """Segments from ``input_dir`` ({subject}/{vowel}/*.wav) or the synthetic speakers."""
    if cfg.input_dir:
        return _load_directory(cfg)
    return synth_corpus(load_profiles(cfg.speakers), cfg.segments_per_vowel, cfg.synth_seed, cfg.sample_rate)


def group_ids(segments: Iterable[Segment]) -> dict[GroupKey, list[str]]:
    groups: dict[GroupKey, list[tuple[int, str]]] = {}
    for s in segments:
        groups.setdefault((s.subject, s.vowel), []).append((s.source_index, s.id))
    return {k: [sid for _, sid in sorted(v)] for k, v in sorted(groups.items())}


# ---------------------------------------------------------------- features


@dataclass
class Prepared:
    """Spectra, selections and graph metrics for one (lpc_order, threshold)."""

    order: int
    threshold: float
    groups: dict[GroupKey, list[str]]
    profiles: dict[str, SpectralProfile]
    correlations: dict[GroupKey, np.ndarray]
    selections: dict[GroupKey, Selection]
    kept: dict[GroupKey, list[str]]
    metrics: dict[str, MetricVector]
    dropped: dict[str, str] = field(default_factory=dict)


def compute_profiles(segments: Sequence[Segment], order: int, n_bins: int) -> tuple[dict[str, SpectralProfile], dict[str, str]]:
    profiles, dropped = {}, {}
    for s in segments:
        try:
            profiles[s.id] = lpc_profile(s.audio.samples, s.audio.sample_rate, order, n_bins, {"id": s.id})
        except VowelGraphError as e:
            dropped[s.id] = f"spectra: {type(e).__name__}: {e}"
    return profiles, dropped


def segment_metrics(profile: SpectralProfile) -> MetricVector:
    return metric_vector(nvg_fast(profile.log_power), seed=0)


def select_groups(groups: Mapping[GroupKey, list[str]], profiles: Mapping[str, SpectralProfile], threshold: float,
                  mode: str) -> tuple[dict, dict, dict]:
    correlations, selections, kept = {}, {}, {}
    for key, ids in groups.items():
        ids = [i for i in ids if i in profiles]
        if len(ids) < 2:
            kept[key] = ids
            continue
        corr = correlation_matrix([profiles[i] for i in ids])
        sel = select_representatives(corr, threshold, mode)
        correlations[key] = corr
        selections[key] = sel
        kept[key] = [ids[i] for i in sel.kept]
    return correlations, selections, kept


def prepare(segments: Sequence[Segment], cfg: PipelineConfig, profiles: dict | None = None,
            dropped: dict | None = None, metric_cache: dict | None = None, with_metrics: bool = True) -> Prepared:
    """Spectra, representative selection and metrics of the kept segments."""
    if profiles is None:
        profiles, dropped = compute_profiles(segments, cfg.lpc_order, cfg.n_bins)
    groups = group_ids(segments)
    correlations, selections, kept = select_groups(groups, profiles, cfg.corr_threshold, cfg.selection_mode)
    cache = {} if metric_cache is None else metric_cache
    for ids in kept.values() if with_metrics else ():
        for sid in ids:
            if sid not in cache:
                cache[sid] = segment_metrics(profiles[sid])
    metrics = {sid: cache[sid] for ids in kept.values() for sid in ids if sid in cache}
    return Prepared(cfg.lpc_order, cfg.corr_threshold, groups, profiles, correlations, selections, kept, metrics,
                    dict(dropped or {}))


# ---------------------------------------------------------------- runs


@dataclass
class RunResult:
    index: int
    seed: int
    grid: GridResult | None = None
    report: EvalReport | None = None
    shap: ShapleyTable | None = None
    notes: list[str] = field(default_factory=list)
    sizes: dict[str, int] = field(default_factory=dict)
    error: str | None = None
    stage: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def summary(self) -> dict:
        d = {"run": self.index, "seed": self.seed, "ok": self.ok}
        if not self.ok:
            d.update(stage=self.stage, error=self.error)
            return d
        d.update(
            n_estimators=self.grid.n_estimators,
            max_depth=self.grid.max_depth,
            precision=self.report.macro_precision,
            recall=self.report.macro_recall,
            f1=self.report.macro_f1,
            accuracy=self.report.accuracy,
            table_sizes=self.sizes,
        )
        return d


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except VowelGraphError as e:
        raise StageError(name, e) from e


def _permute(table: FeatureTable, rng: np.random.Generator) -> FeatureTable:
    labels = table.labels
    return table.with_labels([labels[i] for i in rng.permutation(len(labels))])


def _shap_rows(test: FeatureTable, per_class: int, seed: int) -> np.ndarray:
    labels = np.array(test.labels)
    rng = np.random.default_rng(seed)
    picks = []
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        picks.extend(np.sort(rng.choice(idx, size=min(per_class, idx.size), replace=False)).tolist())
    return np.array(picks, dtype=np.int64)


def make_tables(kept: Mapping[GroupKey, list[str]], metrics: Mapping[str, MetricVector], cfg: PipelineConfig,
                seed: int) -> tuple[Splits, dict[str, FeatureTable]]:
    """Split, sample combinations and, for the control, permute dev labels."""
    splits: Splits = _stage("split", split_segments, kept, cfg.ratios, seed)
    tables = {p: _stage("features", build_table, splits, metrics, p, cfg.k_combinations, seed)
              for p in ("train", "val", "test")}
    if cfg.permute_labels:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        tables["train"] = _permute(tables["train"], rng)
        tables["val"] = _permute(tables["val"], rng)
    return splits, tables


def explain_run(forest: Forest, tables: Mapping[str, FeatureTable], cfg: PipelineConfig, seed: int) -> ShapleyTable:
    rows = _shap_rows(tables["test"], cfg.shap_rows_per_class, seed)
    bg = sample_background(tables["train"], cfg.shap_background, seed)
    shap = _stage("explain", explain_table, forest, tables["test"].X[rows], bg, "sampled",
                  cfg.shap_permutations, seed)
    shap.meta["rows"] = rows.tolist()
    return shap


def run_once(kept: Mapping[GroupKey, list[str]], metrics: Mapping[str, MetricVector], cfg: PipelineConfig,
             index: int, explain: bool) -> RunResult:
    seed = cfg.seed + index
    res = RunResult(index, seed)
    try:
        splits, tables = make_tables(kept, metrics, cfg, seed)
        res.sizes = {p: len(t) for p, t in tables.items()}
        res.notes = [w for t in tables.values() for w in t.warnings]
        res.grid = _stage("train", grid_search, tables["train"], tables["val"], cfg.n_estimators_grid,
                          cfg.max_depth_grid, seed, tuple(splits.subjects))
        res.report = _stage("evaluate", evaluate, res.grid.forest, tables["test"])
        if explain:
            res.shap = explain_run(res.grid.forest, tables, cfg, seed)
    except StageError as e:
        res.error, res.stage = str(e), e.stage
        log.warning("run %d failed: %s", index, e)
    return res


def _run_job(args) -> RunResult:
    return run_once(*args)


def map_jobs(jobs: list[tuple], threads: int) -> list[RunResult]:
    """Run jobs on a bounded pool; results come back in job order."""
    if threads <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_job, jobs))


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


@dataclass
class ExperimentReport:
    config: PipelineConfig
    runs: list[RunResult]
    prepared: Prepared | None = None

    @property
    def ok_runs(self) -> list[RunResult]:
        return [r for r in self.runs if r.ok]

    def metric_values(self, name: str) -> list[float]:
        return [getattr(r.report, f"macro_{name}") for r in self.ok_runs]

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in ("precision", "recall", "f1"):
            m, s = _mean_std(self.metric_values(name))
            out[name] = {"mean": m, "std": s}
        return out

    def importance(self):
        tables = [r.shap for r in self.ok_runs if r.shap is not None]
        return aggregate_importance(tables) if tables else None

    def to_dict(self) -> dict:
        imp = self.importance()
        return {
            "config": self.config.result_dict(),
            "control_permuted_labels": self.config.permute_labels,
            "n_runs": len(self.runs),
            "n_ok": len(self.ok_runs),
            "macro": self.summary(),
            "runs": [r.summary() for r in self.runs],
            "combination_notes": sorted({n for r in self.runs for n in r.notes}),
            "importance": imp.to_dict() if imp else None,
        }


def run_experiment(cfg: PipelineConfig, segments: Sequence[Segment] | None = None,
                   prepared: Prepared | None = None, explain: bool | None = None) -> ExperimentReport:
    """``n_runs`` independent split/train/evaluate/explain runs on one selection."""
    if prepared is None:
        segments = load_segments(cfg) if segments is None else segments
        prepared = prepare(segments, cfg)
    explain = (cfg.explain and not cfg.permute_labels) if explain is None else explain
    jobs = [(prepared.kept, prepared.metrics, cfg, i, explain) for i in range(cfg.n_runs)]
    return ExperimentReport(cfg, map_jobs(jobs, cfg.threads), prepared)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepReport:
    parameter: str
    values: list
    experiments: list[ExperimentReport | None]
    failures: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    reference: object = None
    distribution: tuple | None = None

    def rows(self) -> list[dict]:
        ref = None
        if self.reference in self.values:
            ref = self.experiments[self.values.index(self.reference)]
        out = []
        for v, exp in zip(self.values, self.experiments):
            row = {self.parameter: v, "n_ok": 0}
            for name in ("precision", "recall", "f1"):
                row[f"{name}_mean"] = row[f"{name}_std"] = float("nan")
                row[f"{name}_p_vs_ref"] = float("nan")
            if exp is not None:
                row["n_ok"] = len(exp.ok_runs)
                for name, ms in exp.summary().items():
                    row[f"{name}_mean"], row[f"{name}_std"] = ms["mean"], ms["std"]
                    if ref is not None:
                        a, b = exp.metric_values(name), ref.metric_values(name)
                        if len(a) >= 3 and len(b) >= 3:
                            row[f"{name}_p_vs_ref"] = ranksum(a, b).p
            row.update(self.extra.get(v, {}))
            out.append(row)
        return out

    def run_rows(self) -> list[dict]:
        out = []
        for v, exp in zip(self.values, self.experiments):
            if exp is None:
                continue
            for r in exp.runs:
                s = r.summary()
                out.append({self.parameter: v, "run": s["run"], "seed": s["seed"], "ok": s["ok"],
                            "precision": s.get("precision", float("nan")), "recall": s.get("recall", float("nan")),
                            "f1": s.get("f1", float("nan")), "stage": s.get("stage") or ""})
        return out

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "values": list(self.values), "reference": self.reference,
                "rows": self.rows(), "failures": {str(k): v for k, v in self.failures.items()}}


def sweep_lpc_order(cfg: PipelineConfig, orders: Sequence[int] | None = None,
                    segments: Sequence[Segment] | None = None) -> SweepReport:
    orders = list(cfg.lpc_orders if orders is None else orders)
    segments = load_segments(cfg) if segments is None else segments
    exps, failures = [], {}
    for order in orders:
        sub = replace(cfg, lpc_order=order)
        try:
            exp = run_experiment(sub, prepared=prepare(segments, sub), explain=cfg.sweep_explain)
        except VowelGraphError as e:
            failures[order] = f"{type(e).__name__}: {e}"
            exp = None
        exps.append(exp)
        log.info("lpc order %d done", order)
    return SweepReport("order", orders, exps, failures, reference=REFERENCE_ORDER)


def correlation_distribution(correlations: Mapping[GroupKey, np.ndarray]) -> np.ndarray:
    """Pooled within-group pairwise correlations (upper triangles)."""
    parts = [c[np.triu_indices(c.shape[0], k=1)] for c in correlations.values()]
    return np.concatenate(parts) if parts else np.zeros(0)


def sweep_threshold(cfg: PipelineConfig, thresholds: Sequence[float] | None = None,
                    segments: Sequence[Segment] | None = None) -> SweepReport:
    thresholds = [float(t) for t in (cfg.thresholds if thresholds is None else thresholds)]
    segments = load_segments(cfg) if segments is None else segments
    profiles, dropped = compute_profiles(segments, cfg.lpc_order, cfg.n_bins)
    cache: dict[str, MetricVector] = {}
    exps, failures, extra = [], {}, {}
    pooled = None
    for t in thresholds:
        sub = replace(cfg, corr_threshold=t)
        prep = prepare(segments, sub, profiles, dropped, cache)
        if pooled is None:
            pooled = correlation_distribution(prep.correlations)
        n_total = sum(len(v) for v in prep.groups.values())
        extra[t] = {
            "retained_edge_fraction": float(np.mean(pooled >= t)) if pooled.size else 0.0,
            "retained_segment_fraction": sum(len(v) for v in prep.kept.values()) / n_total,
            "min_kept": min(len(v) for v in prep.kept.values()),
        }
        exp = run_experiment(sub, prepared=prep, explain=cfg.sweep_explain)
        if not exp.ok_runs:
            failures[t] = sorted({r.error for r in exp.runs})
        exps.append(exp)
        log.info("threshold %.2f done", t)
    hist, edges = np.histogram(pooled if pooled is not None else np.zeros(0), bins=CORR_BINS)
    return SweepReport("threshold", thresholds, exps, failures, extra, REFERENCE_THRESHOLD, (edges, hist))


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def metrics_csv(prep: Prepared) -> str:
    rows = []
    for key, ids in prep.kept.items():
        for sid in ids:
            mv = prep.metrics[sid]
            rows.append({"id": sid, "subject": key[0], "vowel": key[1], **dict(zip(METRICS, mv.as_array().tolist()))})
    return rows_to_csv(rows)


def profiles_csv(prep: Prepared) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ids = [sid for group in prep.groups.values() for sid in group if sid in prep.profiles]
    if not ids:
        return ""
    w.writerow(["id", *(repr(float(f)) for f in prep.profiles[ids[0]].freqs)])
    for sid in ids:
        w.writerow([sid, *(repr(float(v)) for v in prep.profiles[sid].log_power)])
    return buf.getvalue()


def selection_report(prep: Prepared) -> dict:
    groups = {}
    for key, ids in prep.groups.items():
        sel = prep.selections.get(key)
        groups[f"{key[0]}/{key[1]}"] = {
            "n_total": len(ids),
            "kept": prep.kept.get(key, []),
            "community_sizes": list(sel.community_sizes) if sel else [],
            "retained_fraction": len(prep.kept.get(key, [])) / len(ids) if ids else 0.0,
        }
    return {"lpc_order": prep.order, "threshold": prep.threshold, "groups": groups,
            "dropped": dict(sorted(prep.dropped.items()))}


def write_prepared(prep: Prepared, out: Path) -> list[Path]:
    return [
        _write(out / "spectra" / "profiles.csv", profiles_csv(prep)),
        _write(out / "reports" / "selection.json", dump_json(selection_report(prep))),
        _write(out / "tables" / "metrics.csv", metrics_csv(prep)),
    ]


def write_experiment(exp: ExperimentReport, out: str | Path) -> list[Path]:
    out = Path(out)
    paths = []
    if exp.prepared is not None:
        paths += write_prepared(exp.prepared, out)
    paths.append(_write(out / "reports" / "experiment.json", dump_json(exp.to_dict())))
    paths.append(_write(out / "tables" / "runs.csv", rows_to_csv([
        {k: v for k, v in r.summary().items() if k != "table_sizes"} for r in exp.runs])))
    imp = exp.importance()
    if imp is not None:
        paths.append(_write(out / "reports" / "importance.json", imp.to_json() + "\n"))
    for r in exp.ok_runs:
        tag = f"run{r.index:02d}"
        paths.append(_write(out / "models" / f"forest_{tag}.json", r.grid.forest.to_json() + "\n"))
        paths.append(_write(out / "reports" / f"grid_{tag}.json", dump_json(r.grid.to_dict())))
        paths.append(_write(out / "reports" / f"eval_{tag}.json", dump_json(r.report.to_dict())))
        paths.append(_write(out / "tables" / f"eval_{tag}.csv", r.report.to_csv()))
        if r.shap is not None:
            paths.append(_write(out / "tables" / f"shap_{tag}.csv", r.shap.to_csv()))
    return paths


def write_sweep(rep: SweepReport, out: str | Path, name: str) -> list[Path]:
    out = Path(out)
    paths = [
        _write(out / "tables" / f"sweep_{name}.csv", rows_to_csv(rep.rows())),
        _write(out / "tables" / f"sweep_{name}_runs.csv", rows_to_csv(rep.run_rows())),
        _write(out / "reports" / f"sweep_{name}.json", dump_json(rep.to_dict())),
    ]
    if rep.distribution is not None:
        edges, hist = rep.distribution
        total = max(int(hist.sum()), 1)
        rows = [{"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(hist[i]),
                 "probability": hist[i] / total} for i in range(hist.size)]
        paths.append(_write(out / "tables" / "correlation_distribution.csv", rows_to_csv(rows)))
    return paths


def load_forest(path: str | Path) -> Forest:
    return Forest.from_json(Path(path).read_text())
