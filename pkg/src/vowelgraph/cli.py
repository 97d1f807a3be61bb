"""Command-line entry point: ``vowelgraph <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import VowelGraphError
from .explain import aggregate_importance
from .model import evaluate, grid_search
from .pipeline import (
    PipelineConfig,
    _write,
    dump_json,
    explain_run,
    load_forest,
    load_segments,
    make_tables,
    metrics_csv,
    prepare,
    run_experiment,
    selection_report,
    sweep_lpc_order,
    sweep_threshold,
    write_experiment,
    write_sweep,
)
from .synth import write_corpus
from .visgraph import nvg_fast

log = logging.getLogger("vowelgraph")

COMMANDS = ("synth", "preprocess", "spectra", "select", "graphs", "features", "train", "evaluate", "explain",
            "sweep-lpc", "sweep-threshold", "run")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of config keys")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--runs", type=int, help="number of runs")
    common.add_argument("--input", help="directory of {subject}/{vowel}/*.wav recordings")
    common.add_argument("--control-permute-labels", action="store_true",
                        help="permute train/val labels (randomized control)")
    common.add_argument("--threads", type=int, help="worker processes for runs")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (VALUE parsed as JSON when possible)")
    common.add_argument("--model", type=Path, help="forest JSON for evaluate/explain")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vowelgraph", description="Speaker identification from vowel visibility graphs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args) -> PipelineConfig:
    base = json.loads(args.config.read_text()) if args.config else {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise VowelGraphError(f"--set expects KEY=VALUE, got {item!r}")
        base[key] = _parse_value(value)
    cfg = PipelineConfig.from_dict(base)
    return cfg.with_overrides(
        seed=args.seed,
        out_dir=args.out,
        n_runs=args.runs,
        input_dir=args.input,
        threads=args.threads,
        permute_labels=True if args.control_permute_labels else None,
    )


def _stage_tables(cfg: PipelineConfig):
    prep = prepare(load_segments(cfg), cfg)
    return prep, *make_tables(prep.kept, prep.metrics, cfg, cfg.seed)


def _model_path(args, out: Path) -> Path:
    return args.model or out / "models" / "forest.json"


def execute(args) -> list[Path]:
    cfg = config_from_args(args)
    out = Path(cfg.out_dir)
    cmd = args.command

    if cmd == "synth":
        if cfg.input_dir:
            raise VowelGraphError("synth does not take --input")
        return write_corpus(load_segments(cfg), out / "corpus")
    if cmd == "preprocess":
        if not cfg.input_dir:
            raise VowelGraphError("preprocess needs --input")
        return write_corpus(load_segments(cfg), out / "segments")
    if cmd in ("spectra", "select"):
        prep = prepare(load_segments(cfg), cfg, with_metrics=False)
        if cmd == "select":
            return [_write(out / "reports" / "selection.json", dump_json(selection_report(prep)))]
        paths = []
        for sid, prof in prep.profiles.items():
            paths.append(_write(out / "spectra" / f"{sid.replace('/', '_')}.csv", prof.to_csv()))
        return paths
    if cmd == "graphs":
        prep = prepare(load_segments(cfg), cfg)
        paths = [_write(out / "tables" / "metrics.csv", metrics_csv(prep))]
        for ids in prep.kept.values():
            for sid in ids:
                g = nvg_fast(prep.profiles[sid].log_power)
                paths.append(_write(out / "graphs" / f"{sid.replace('/', '_')}.edges", g.to_edgelist()))
        return paths
    if cmd == "features":
        _, _, tables = _stage_tables(cfg)
        return [_write(out / "tables" / f"features_{p}.csv", t.to_csv()) for p, t in tables.items()]
    if cmd == "train":
        _, splits, tables = _stage_tables(cfg)
        res = grid_search(tables["train"], tables["val"], cfg.n_estimators_grid, cfg.max_depth_grid, cfg.seed,
                          tuple(splits.subjects))
        return [
            _write(out / "models" / "forest.json", res.forest.to_json() + "\n"),
            _write(out / "reports" / "grid.json", dump_json(res.to_dict())),
        ]
    if cmd == "evaluate":
        forest = load_forest(_model_path(args, out))
        _, _, tables = _stage_tables(cfg)
        rep = evaluate(forest, tables["test"])
        print(f"macro precision {rep.macro_precision:.4f} recall {rep.macro_recall:.4f} f1 {rep.macro_f1:.4f}")
        return [
            _write(out / "reports" / "eval.json", dump_json(rep.to_dict())),
            _write(out / "tables" / "eval.csv", rep.to_csv()),
        ]
    if cmd == "explain":
        forest = load_forest(_model_path(args, out))
        _, _, tables = _stage_tables(cfg)
        shap = explain_run(forest, tables, cfg, cfg.seed)
        return [
            _write(out / "tables" / "shap.csv", shap.to_csv()),
            _write(out / "reports" / "importance.json", aggregate_importance([shap]).to_json() + "\n"),
        ]
    if cmd == "sweep-lpc":
        return write_sweep(sweep_lpc_order(cfg), out, "lpc")
    if cmd == "sweep-threshold":
        return write_sweep(sweep_threshold(cfg), out, "threshold")
    if cmd == "run":
        exp = run_experiment(cfg)
        paths = write_experiment(exp, out)
        s = exp.summary()
        print("macro " + " ".join(f"{k} {v['mean']:.4f}±{v['std']:.4f}" for k, v in s.items())
              + f" ({len(exp.ok_runs)}/{len(exp.runs)} runs ok)")
        return paths
    raise VowelGraphError(f"unknown command {cmd}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        paths = execute(args)
    except VowelGraphError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {len(paths)} files")
    return 0


if __name__ == "__main__":
    sys.exit(main())
