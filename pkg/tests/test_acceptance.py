"""Acceptance criteria 1-10, one test each, each printing a PASS/FAIL line."""

import itertools
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import solve_toeplitz
from scipy.signal import lfilter
from scipy.stats import rankdata

from conftest import ACCEPTANCE_LINES, two_triangles
from vowelgraph.explain import shapley_interventional
from vowelgraph.graph import Graph, complete_graph, path_graph
from vowelgraph.graph_metrics import Partition, aspl, clustering, density, modularity
from vowelgraph.model import Forest, Tree, train_forest
from vowelgraph.pipeline import (
    PipelineConfig,
    load_segments,
    prepare,
    run_experiment,
    sweep_lpc_order,
    sweep_threshold,
)
from vowelgraph.spectrum import LpcModel, autocorrelation, frequency_response, levinson_durbin, lpc_fit
from vowelgraph.stats import ranksum
from vowelgraph.visgraph import nvg_fast, nvg_naive

pytestmark = pytest.mark.slow

REDUCED = dict(segments_per_vowel=10)


def verdict(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_c01_visibility_oracle_equivalence():
    t0 = time.perf_counter()
    n_series = mismatches = 0
    for n in range(1, 11):
        for vals in itertools.product((0.0, 1.0, 2.0), repeat=n):
            y = np.array(vals)
            n_series += 1
            if nvg_fast(y) != nvg_naive(y):
                mismatches += 1
    rng = np.random.default_rng(2024)
    for n in (64, 512, 1024, 2048):
        for _ in range(50):
            y = rng.normal(size=n)
            n_series += 1
            if nvg_fast(y) != nvg_naive(y):
                mismatches += 1
    elapsed = time.perf_counter() - t0
    verdict(1, mismatches == 0 and elapsed < 60,
            f"{n_series} series, {mismatches} mismatches, {elapsed:.1f} s (< 60 s)")


# ---------------------------------------------------------------- 2


def test_c02_visibility_fixtures():
    ramp = nvg_naive([0, 1, 2, 3, 4]) == path_graph(5) == nvg_fast([0, 1, 2, 3, 4])
    const = nvg_naive([3.0] * 6) == path_graph(6) == nvg_fast([3.0] * 6)
    peak = {(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (2, 4)}
    fixture = nvg_naive([1, 2, 5, 2, 1]).edge_set() == peak == nvg_fast([1, 2, 5, 2, 1]).edge_set()
    verdict(2, ramp and const and fixture, f"ramp->path {ramp}, constant->path {const}, [1,2,5,2,1] 6 edges {fixture}")


# ---------------------------------------------------------------- 3


def _stable_poly(rng, order):
    roots = []
    while len(roots) < order:
        if order - len(roots) >= 2:
            z = rng.uniform(0.3, 0.95) * np.exp(1j * rng.uniform(0.05, np.pi - 0.05))
            roots += [z, np.conj(z)]
        else:
            roots.append(rng.uniform(-0.9, 0.9))
    return np.real(np.poly(roots))


def test_c03_lpc_correctness():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        poly = _stable_poly(rng, int(rng.integers(2, 21)))
        x = lfilter([1.0], poly, rng.normal(size=5000))
        for order in range(1, 21):
            r = autocorrelation(x, order)
            a, _, _, _ = levinson_durbin(r, order)
            direct = solve_toeplitz(r[:-1], r[1:])
            worst = max(worst, float(np.linalg.norm(a - direct) / np.linalg.norm(direct)))
    x = lfilter([1.0], [1.0, -1.0, 0.5], rng.normal(size=100_000))
    d = lpc_fit(x, 2).coeffs
    err = float(np.max(np.abs(d - [1.0, -0.5])))
    verdict(3, worst <= 1e-9 and err <= 0.02,
            f"max norm-wise relative deviation from Toeplitz solve {worst:.2e} (<= 1e-9); AR(2) error {err:.4f} (<= 0.02)")


# ---------------------------------------------------------------- 4


def test_c04_response_evaluation():
    flat = frequency_response(lpc_fit(np.random.default_rng(0).normal(size=64), 0))
    zero = bool(np.all(flat.log_power == 0.0))
    r, th = 0.98, 2 * np.pi * 1000 / 11025
    prof = frequency_response(LpcModel(2, np.array([2 * r * np.cos(th), -r * r]), 11025.0), 512)
    bin_hz = 11025 / 2 / 512
    peak_err = abs(prof.freqs[np.argmax(prof.log_power)] - 1000.0)
    grid_ok = prof.freqs.size == 512 and prof.freqs[0] == 0.0 and prof.freqs[-1] < 5512.5
    verdict(4, zero and peak_err <= bin_hz and grid_ok,
            f"order-0 flat {zero}; peak {peak_err:.2f} Hz from 1000 Hz (bin {bin_hz:.2f} Hz); "
            f"512 bins in [0, {prof.freqs[-1]:.2f}] Hz")


# ---------------------------------------------------------------- 5


def test_c05_metric_fixtures():
    star = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    k4e = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])
    halves = Partition((0, 0, 0, 1, 1, 1))
    checks = {
        "density(K4)": (density(complete_graph(4)), 1.0),
        "density(P4)": (density(path_graph(4)), 0.5),
        "aspl(P3)": (aspl(path_graph(3)), 4 / 3),
        "aspl(K7)": (aspl(complete_graph(7)), 1.0),
        "aspl(S4)": (aspl(star), 1.6),
        "cc(triangle)": (clustering(complete_graph(3)), 1.0),
        "cc(P4)": (clustering(path_graph(4)), 0.0),
        "cc(K4-e)": (clustering(k4e), 5 / 6),
        "Q(two triangles)": (modularity(two_triangles(False), halves), 0.5),
        "Q(bridged)": (modularity(two_triangles(True), halves), 6 / 7 - 0.5),
    }
    bad = {k: v for k, v in checks.items() if abs(v[0] - v[1]) > 1e-12}
    verdict(5, not bad, f"{len(checks) - len(bad)}/{len(checks)} exact to 1e-12" + (f"; off: {bad}" if bad else ""))


# ---------------------------------------------------------------- 6 and 7 (pipeline)


@pytest.fixture(scope="module")
def full_experiment():
    t0 = time.perf_counter()
    cfg = PipelineConfig()
    prep = prepare(load_segments(cfg), cfg)
    main = run_experiment(cfg, prepared=prep)
    control = run_experiment(cfg.with_overrides(permute_labels=True), prepared=prep)
    return cfg, main, control, time.perf_counter() - t0


def test_c06_end_to_end_synthetic(full_experiment):
    cfg, main, control, elapsed = full_experiment
    f1 = main.summary()["f1"]
    cf1 = control.summary()["f1"]
    ok = (len(main.ok_runs) == 10 and f1["mean"] >= 0.90 and cf1["mean"] <= 0.30 and elapsed < 15 * 60)
    verdict(6, ok, f"7x5x25 corpus, 10 runs: macro F1 {f1['mean']:.3f} ± {f1['std']:.3f} (>= 0.90); "
                   f"control {cf1['mean']:.3f} (<= 0.30); {elapsed / 60:.1f} min (< 15)")


def test_c07_shapley_validity(full_experiment):
    # exact mode on a 10-feature forest
    rng = np.random.default_rng(5)
    X = rng.normal(size=(400, 10))
    y = list(np.where(X[:, 0] - X[:, 4] > 0, "a", "b"))
    forest = train_forest((X, y), 4, 3, seed=0)
    bg = X[200:260]
    unused = sorted(set(range(10)) - forest.used_features())
    exact_err, null_ok = 0.0, True
    for x in X[:10]:
        a = shapley_interventional(forest, x, bg, mode="exact")
        exact_err = max(exact_err, abs(a.baseline + a.phi.sum() - a.fx))
        null_ok &= all(a.phi[j] == 0.0 for j in unused)
    # sampled mode on every explained row of the full pipeline
    _, main, _, _ = full_experiment
    tables = [r.shap for r in main.ok_runs if r.shap is not None]
    sampled_err = max(float(t.local_accuracy_error().max()) for t in tables)
    n_rows = sum(t.phi.shape[0] for t in tables)
    # stump closed form
    stump = Tree(np.array([0, -1, -1]), np.array([0.0, 0, 0]), np.array([1, -1, -1]), np.array([2, -1, -1]),
                 np.array([[0, 0], [0.9, 0.1], [0.1, 0.9]]), np.array([0, 1, 1]), 1, 0)
    f = Forest([stump], 1, 1, ("a", "b"), 3, 0)
    s = shapley_interventional(f, np.array([-1.0, 2.0, 2.0]), np.array([[-1.0, 0, 0], [1.0, 0, 0]]), mode="exact")
    stump_ok = s.phi[0] == pytest.approx(0.4, abs=1e-12) and s.phi[1] == 0.0 and s.phi[2] == 0.0
    ok = exact_err < 1e-6 and sampled_err < 0.02 and null_ok and bool(unused) and stump_ok
    verdict(7, ok, f"exact local accuracy {exact_err:.1e} (< 1e-6); sampled {sampled_err:.1e} on {n_rows} "
                   f"pipeline rows (< 0.02); {len(unused)} null features phi=0 {null_ok}; stump phi0=0.4 {stump_ok}")


# ---------------------------------------------------------------- 8


@pytest.fixture(scope="module")
def reduced_segments():
    cfg = PipelineConfig(**REDUCED)
    return cfg, load_segments(cfg)


def test_c08_robustness_sweeps(reduced_segments):
    cfg, segs = reduced_segments
    t0 = time.perf_counter()
    lpc = sweep_lpc_order(cfg, segments=segs)
    t_lpc = time.perf_counter() - t0
    t0 = time.perf_counter()
    thr = sweep_threshold(cfg, segments=segs)
    t_thr = time.perf_counter() - t0

    lpc_rows, thr_rows = lpc.rows(), thr.rows()
    lpc_complete = [r["order"] for r in lpc_rows] == list(range(10, 21)) and len(lpc.run_rows()) == 110
    thr_complete = len(thr_rows) == 10 and len(thr.run_rows()) == 100
    all_ok = all(r["n_ok"] == 10 for r in lpc_rows + thr_rows)
    edge_frac = [r["retained_edge_fraction"] for r in thr_rows]
    monotone = all(b <= a for a, b in zip(edge_frac, edge_frac[1:]))
    ref = run_experiment(cfg, prepared=prepare(segs, cfg), explain=False).summary()
    row13 = next(r for r in lpc_rows if r["order"] == 13)
    row90 = next(r for r in thr_rows if r["threshold"] == 0.9)
    consistent = all(row13[f"{m}_mean"] == ref[m]["mean"] == row90[f"{m}_mean"] for m in ("precision", "recall", "f1"))
    ok = lpc_complete and thr_complete and all_ok and monotone and consistent and max(t_lpc, t_thr) < 30 * 60
    best = max(lpc_rows, key=lambda r: r["f1_mean"])
    verdict(8, ok, f"LPC sweep 11x10 in {t_lpc / 60:.1f} min, threshold sweep 10x10 in {t_thr / 60:.1f} min "
                   f"(< 30 each); all cells ok {all_ok}; edge fraction non-increasing {monotone}; "
                   f"order-13 row matches run_experiment {consistent} (F1 {row13['f1_mean']:.3f}); "
                   f"best order {best['order']}")


# ---------------------------------------------------------------- 9


def test_c09_determinism(tmp_path):
    cfg = {"segments_per_vowel": 10, "n_runs": 2}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        subprocess.run([sys.executable, "-m", "vowelgraph.cli", "run", "--config", str(tmp_path / "cfg.json"),
                        "--seed", "3", "--out", str(out)], check=True, capture_output=True)
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    other = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    kinds = {p.parts[0] for p in files}
    same = files == other and all((outs[0] / p).read_bytes() == (outs[1] / p).read_bytes() for p in files)
    ok = same and {"reports", "models", "tables"} <= kinds
    verdict(9, ok, f"{len(files)} files under {sorted(kinds)} byte-identical across two runs: {same}")


# ---------------------------------------------------------------- 10


def _enumerated_p(a, b):
    pool = np.concatenate([a, b])
    r = rankdata(pool)
    n1, n = len(a), len(pool)
    mu = n1 * (n - n1) / 2
    obs = abs(r[:n1].sum() - n1 * (n1 + 1) / 2 - mu)
    hits = total = 0
    for idx in itertools.combinations(range(n), n1):
        total += 1
        hits += abs(r[list(idx)].sum() - n1 * (n1 + 1) / 2 - mu) >= obs - 1e-9
    return hits / total


def test_c10_ranksum_exhaustive():
    rng = np.random.default_rng(10)
    worst, cases = 0.0, 0
    for n1 in range(3, 7):
        for n2 in range(3, 7):
            for trial in range(12):
                # half the trials draw from a small alphabet to force ties
                if trial % 2:
                    a, b = rng.integers(0, 4, n1).astype(float), rng.integers(0, 4, n2).astype(float)
                else:
                    a, b = rng.normal(size=n1), rng.normal(0.8, 1, size=n2)
                worst = max(worst, abs(ranksum(a, b).p - _enumerated_p(a, b)))
                cases += 1
    verdict(10, worst <= 1e-3, f"{cases} cases over all size pairs 3..6: max |p - enumerated| = {worst:.2e} (<= 1e-3)")
