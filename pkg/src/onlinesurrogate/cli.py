"""Command-line front end.

    onlinesurrogate run --config exp.yaml [--out DIR] [--seed N] [--preset P] [--mode M]
    onlinesurrogate bench-table --config bench.yaml [--out DIR]
    onlinesurrogate predict SURROGATE POINTS [--out FILE]
    onlinesurrogate distances SURROGATE EVALDB [--mode M] [--out FILE]
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import rbf
from .distance import GRAPHICAL, MODES, report
from .models import MODEL_IDS, get_model
from .optimize import SolverConfig
from .samplers import SamplerConfig
from .store import EvalStore
from .validity import PRESETS, ToleranceConfig, preset
from .workflow import WorkflowConfig, run_asymptotic, run_single

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("function", "ndim", "strategy", "preset", "seed", "total_evals")


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files(__package__).joinpath("data/experiment.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _line_of(node, path) -> int | None:
    """1-based line of the YAML node at ``path`` (falls back to the deepest parent)."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def _error_path(e) -> list:
    path = list(e.absolute_path)
    if e.validator == "additionalProperties" and isinstance(e.instance, dict):
        # point at the first unexpected key rather than its parent
        known = e.schema.get("properties", {})
        extra = [k for k in e.instance if k not in known]
        if extra:
            path.append(extra[0])
    return path


def read_config(path: str | Path, kind: str) -> dict:
    """Parse a YAML or JSON config and validate it against the ``kind`` schema."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        root = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: malformed config: {getattr(exc, 'problem', exc)}") from exc
    if root is None or not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a mapping")
    schema = load_schema()
    validator = jsonschema.Draft202012Validator({"$ref": f"#/$defs/{kind}", "$defs": schema["$defs"]})
    errors = sorted(validator.iter_errors(doc), key=lambda e: (_line_of(root, _error_path(e)), e.message))
    if errors:
        lines = []
        for e in errors:
            loc = ".".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}:{_line_of(root, _error_path(e))}: {loc}: {e.message}")
        raise ConfigError("\n".join(lines))
    return doc


def _tolerances(section: dict | None, default: str) -> ToleranceConfig:
    section = dict(section or {})
    name = section.pop("preset", default)
    return preset(name, **section)


def workflow_config(doc: dict, model_id: str, seed: int, preset_name: str | None = None, mode: str | None = None,
                    sampler_overrides: dict | None = None) -> WorkflowConfig:
    default_preset = preset_name or doc.get("preset", "loose")
    test_section = dict(doc.get("test") or {})
    train_section = dict(doc.get("train") or {})
    if preset_name:
        test_section["preset"] = train_section["preset"] = preset_name
    sampler = dict(doc.get("sampler") or {})
    sampler.update(sampler_overrides or {})
    if isinstance(sampler.get("n_s"), list):
        sampler["n_s"] = tuple(sampler["n_s"])
    bounds = doc.get("bounds")
    return WorkflowConfig(
        model_id=model_id,
        sampler=SamplerConfig(**sampler),
        solver=SolverConfig(**(doc.get("solver") or {})),
        test_tol=_tolerances(test_section, default_preset),
        train_tol=_tolerances(train_section, default_preset),
        mode=mode or doc.get("mode", GRAPHICAL),
        train_budget=doc.get("train_budget", 12),
        max_iterations=doc.get("max_iterations", 100),
        rng_seed=seed,
        noise_sigma=doc.get("noise_sigma", 1e-8),
        report_cap=doc.get("report_cap"),
        min_separation=doc.get("min_separation", 1e-5),
        bounds=None if bounds is None else tuple((float(lo), float(hi)) for lo, hi in bounds),
    )


def _run_one(cfg: WorkflowConfig, workflow: str, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    evals = out / "evals.jsonl"
    surrogate_path = out / "surrogate.json"
    for stale in (evals, surrogate_path):
        if workflow == "asymptotic" and stale.exists():
            stale.unlink()
    model = cfg.model()
    store = EvalStore.load(evals, dim=model.dim, attach=True) if evals.exists() else EvalStore(model.dim, evals)
    runner = run_asymptotic if workflow == "asymptotic" else run_single
    result = runner(model, cfg, store=store, surrogate_path=surrogate_path)
    if result.surrogate is not None:
        rbf.save(result.surrogate, surrogate_path)
    (out / "summary.csv").write_text(result.csv(), encoding="utf-8")
    return result


def cmd_run(args) -> int:
    doc = read_config(args.config, "run")
    seeds = [args.seed] if args.seed is not None else doc.get("seeds", [0])
    out = Path(args.out or doc.get("out", "out"))
    workflow = doc.get("workflow", "asymptotic")
    status = 0
    for seed in seeds:
        cfg = workflow_config(doc, doc["model"], seed, args.preset, args.mode)
        target = out if len(seeds) == 1 else out / f"seed-{seed}"
        result = _run_one(cfg, workflow, target)
        print(f"seed {seed}: termination={result.termination} total_evals={result.total_evals} -> {target}")
        if result.surrogate is None:
            status = 1
    return status


def model_id_for(function: str, ndim: int) -> str:
    for candidate in (f"{function}{ndim}", function):
        if candidate in MODEL_IDS and get_model(candidate).dim == ndim:
            return candidate
    raise ConfigError(f"no registered model for function {function!r} in {ndim} dimensions")


def _sampler_for(strategy: str) -> dict:
    base, _, suffix = strategy.partition("-")
    if strategy == "directed":
        return {"strategy": "random", "directed": True}
    return {"strategy": base, "directed": suffix == "directed"}


def bench_rows(doc: dict, out: Path | None, mode: str | None = None, preset_name: str | None = None):
    """Yield table rows cell by cell: one per seed, then the cell median."""
    seeds = doc.get("seeds", [0, 1, 2, 3, 4])
    for cell in doc["cells"]:
        pname = preset_name or cell["preset"]
        overrides = _sampler_for(cell["strategy"])
        if "n_s" in cell:
            overrides["n_s"] = cell["n_s"]
        totals = []
        for seed in seeds:
            row = [cell["function"], cell["ndim"], cell["strategy"], pname, seed]
            try:
                mid = model_id_for(cell["function"], cell["ndim"])
                cfg = workflow_config(doc, mid, seed, pname, mode, overrides)
                runner = run_asymptotic if doc.get("workflow", "asymptotic") == "asymptotic" else run_single
                result = runner(None, cfg)
                if out is not None:
                    cells = out / "cells"
                    cells.mkdir(parents=True, exist_ok=True)
                    name = f"{mid}-{cell['strategy']}-{pname}-seed{seed}.csv"
                    (cells / name).write_text(result.csv(), encoding="utf-8")
                totals.append(result.total_evals)
                yield row + [result.total_evals]
            except Exception as exc:  # recorded in-table; the remaining cells still run
                log.error("cell %s seed %s failed: %s", cell, seed, exc)
                yield row + [f"error: {type(exc).__name__}: {exc}"]
        median = statistics.median(totals) if totals else ""
        yield [cell["function"], cell["ndim"], cell["strategy"], pname, "median", median]


def cmd_bench_table(args) -> int:
    doc = read_config(args.config, "bench")
    out = Path(args.out or doc.get("out", "bench-out"))
    out.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    failed = False
    for row in bench_rows(doc, out, args.mode, args.preset):
        writer.writerow(row)
        failed |= isinstance(row[-1], str) and row[-1].startswith("error")
        print(",".join(str(v) for v in row), flush=True)
    (out / "bench.csv").write_text(buf.getvalue(), encoding="utf-8")
    return 1 if failed else 0


def _read_points(path: Path, dim: int) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
            if len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no points")
    return np.array(rows)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_predict(args) -> int:
    s = rbf.load(args.surrogate)
    X = _read_points(Path(args.points), s.dim)
    yhat = s.predict_many(X)
    buf = io.StringIO()
    buf.write(",".join([f"x{i}" for i in range(s.dim)] + ["yhat"]) + "\n")
    for x, y in zip(X.tolist(), yhat.tolist()):
        buf.write(",".join(repr(v) for v in x + [y]) + "\n")
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_distances(args) -> int:
    s = rbf.load(args.surrogate)
    store = EvalStore.load(args.evaldb, dim=s.dim)
    if not len(store):
        raise ValueError(f"{args.evaldb}: no records")
    X, Y, _ = store.arrays()
    bounds = s.bounds
    if bounds is None:
        bounds = tuple(zip(X.min(axis=0).tolist(), X.max(axis=0).tolist()))
    rep = report(s, (X, Y), args.mode or GRAPHICAL, bounds)
    _emit(rep.to_csv([r.seq for r in store.records]), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onlinesurrogate", description="Online surrogate learning experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="YAML or JSON experiment config")
        sp.add_argument("--out", help="output directory (file for predict/distances)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=MODES)
        sp.add_argument("--preset", choices=sorted(PRESETS))

    common(sub.add_parser("run", help="run one experiment"))
    common(sub.add_parser("bench-table", help="evaluation-count table over functions, strategies and presets"))
    sp = sub.add_parser("predict", help="surrogate predictions at points from a CSV file")
    sp.add_argument("surrogate")
    sp.add_argument("points")
    common(sp, config=False)
    sp = sub.add_parser("distances", help="distance report of a surrogate against an evaluation DB")
    sp.add_argument("surrogate")
    sp.add_argument("evaldb")
    common(sp, config=False)
    return p


COMMANDS = {"run": cmd_run, "bench-table": cmd_bench_table, "predict": cmd_predict, "distances": cmd_distances}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
