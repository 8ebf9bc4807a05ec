"""Command-line entry point: ``b2ea run | report | generate | convert``.

An experiment spec is a JSON file::

    {
      "benchmark": "table.jsonl",
      "algorithms": ["rs", {"name": "b2ea", "config": {"beta": 0.25}}],
      "seeds": [0, 1, 2],
      "exit": {"mode": "fixed_target", "target": "c_d", "t_max": 1e6},
      "output": "runs/demo"
    }

``target`` may be a number or one of ``c_e``, ``c_d``, ``c_x``, which are
resolved against the benchmark table.  Relative paths are taken relative
to the spec file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchmarkTable, TableError, convert_csv, default_synthetic_space, generate_synthetic, load_table
from .engine import ALGORITHMS, EngineConfig, ExitCriteria, run_algorithm
from .io import atomic_write_text
from .metrics import (
    RunTrace,
    aggregate,
    derive_budget,
    derive_targets,
    expected_time,
    normalized_expected_time,
    regret_series,
    success_rate,
)
from .space import SearchSpace, SpaceError

log = logging.getLogger("b2ea")

EXIT_OK, EXIT_SPEC, EXIT_BENCH = 0, 2, 3
TARGET_NAMES = ("c_e", "c_d", "c_x")
MANIFEST = "manifest.json"


class SpecError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class AlgorithmEntry:
    name: str
    algorithm: str
    config: EngineConfig


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    benchmark: Path
    algorithms: tuple
    seeds: tuple
    exit: dict
    output: Path

    def __post_init__(self):
        if not self.seeds:
            raise SpecError("seeds must be non-empty")
        if not self.algorithms:
            raise SpecError("at least one algorithm is required")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise SpecError(f"algorithm names must be unique, got {names}")

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise SpecError("spec must be a JSON object")
        unknown = set(d) - {"benchmark", "algorithms", "seeds", "exit", "output"}
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        try:
            benchmark = base / d["benchmark"]
            raw_algs = d["algorithms"]
            seeds = d.get("seeds", [])
        except KeyError as e:
            raise SpecError(f"spec missing field {e}") from None
        if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool)
                                                  for s in seeds):
            raise SpecError("seeds must be a list of integers")
        exit = dict(d.get("exit", {"mode": "fixed_budget", "t_max": math.inf}))
        unknown = set(exit) - {"mode", "target", "t_max", "max_evaluations"}
        if unknown:
            raise SpecError(f"unknown exit fields {sorted(unknown)}")
        out = base / d.get("output", "runs")
        return cls(benchmark, tuple(_parse_algorithm(a) for a in raw_algs),
                   tuple(seeds), exit, out)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SpecError(f"cannot read spec {path}: {e}") from None
        return cls.from_dict(d, path.parent)

    def exit_criteria(self, table: BenchmarkTable) -> ExitCriteria:
        e = self.exit
        target = e.get("target")
        if isinstance(target, str):
            if target not in TARGET_NAMES:
                raise SpecError(f"target must be a number or one of {TARGET_NAMES}")
            target = dict(zip(TARGET_NAMES, derive_targets(table)))[target]
        t_max = float(e.get("t_max", math.inf))
        try:
            return ExitCriteria(e.get("mode", "fixed_budget"), t_max, target, e.get("max_evaluations"))
        except ValueError as err:
            raise SpecError(str(err)) from None

    def config_hash(self) -> str:
        """Hash of every field that can change a trace; seeds and output excluded."""
        body = {
            "benchmark": self.benchmark.name,
            "benchmark_sha256": _sha256(self.benchmark),
            "algorithms": [{"name": a.name, "algorithm": a.algorithm, "config": a.config.to_dict()}
                           for a in sorted(self.algorithms, key=lambda a: a.name)],
            "exit": {k: self.exit[k] for k in sorted(self.exit)},
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()


def _parse_algorithm(entry) -> AlgorithmEntry:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise SpecError(f"bad algorithm entry {entry!r}")
    unknown = set(entry) - {"name", "algorithm", "config"}
    if unknown:
        raise SpecError(f"unknown algorithm fields {sorted(unknown)}")
    algorithm = entry.get("algorithm", entry["name"])
    if algorithm not in ALGORITHMS:
        raise SpecError(f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}")
    # baselines train every configuration to completion unless told otherwise
    defaults = {} if algorithm == "b2ea" else {"early_termination": False}
    try:
        cfg = EngineConfig.from_dict({**defaults, **entry.get("config", {})})
    except (TypeError, ValueError) as e:
        raise SpecError(f"algorithm {entry['name']!r}: {e}") from None
    return AlgorithmEntry(entry["name"], algorithm, cfg)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_seed_range(text: str) -> list[int]:
    """``"a..b"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise SpecError(f"bad seed range {text!r}; expected a..b") from None
    if b < a:
        raise SpecError(f"empty seed range {text!r}")
    return list(range(a, b + 1))


# -- run ----------------------------------------------------------------------

_WORKER_TABLE = None


def _init_worker(path):
    global _WORKER_TABLE
    _WORKER_TABLE = load_table(path)


def _run_pair(job):
    name, algorithm, cfg_dict, exit, seed = job
    trace = run_algorithm(algorithm, _WORKER_TABLE, EngineConfig.from_dict(cfg_dict), exit, seed)
    return name, seed, trace.to_text(), trace.status, len(trace), trace.warnings


def trace_path(out: Path, name: str, seed: int) -> Path:
    return out / "traces" / name / f"seed_{seed}.jsonl"


def _versions() -> dict:
    import scipy
    import sklearn
    return {"b2ea": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def _write_manifest(out: Path, spec: ExperimentSpec, chash: str, runs: dict) -> dict:
    rows = [runs[k] for k in sorted(runs)]
    manifest = {
        "config_hash": chash,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "versions": _versions(),
        "benchmark": str(spec.benchmark.resolve()),
        "exit": _json_safe(spec.exit),
        "algorithms": {a.name: {"algorithm": a.algorithm, "config": a.config.to_dict()}
                       for a in spec.algorithms},
        "runs": rows,
        "total_sim_time": math.fsum(r["sim_time"] for r in rows),
    }
    atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_run(spec: ExperimentSpec, workers: int = 1) -> dict:
    try:
        table = load_table(spec.benchmark)
    except OSError as e:
        raise TableError(f"cannot read benchmark {spec.benchmark}: {e}") from None
    exit = spec.exit_criteria(table)
    out = spec.output
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SpecError(f"cannot create output directory {out}: {e}") from None
    chash = spec.config_hash()

    runs = {}
    mpath = out / MANIFEST
    if mpath.exists():
        old = json.loads(mpath.read_text())
        if old.get("config_hash") != chash:
            raise SpecError(f"{out} holds results of a different configuration; use a fresh --out")
        for r in old.get("runs", []):
            if (out / r["file"]).exists():
                runs[(r["algorithm"], r["seed"])] = r

    jobs = [(a.name, a.algorithm, a.config.to_dict(), exit, s)
            for a in sorted(spec.algorithms, key=lambda a: a.name) for s in sorted(set(spec.seeds))
            if (a.name, s) not in runs]
    if len(runs):
        log.info("resuming: %d completed runs skipped", len(runs))

    def record(result):
        name, seed, text, status, n, warnings = result
        path = trace_path(out, name, seed)
        atomic_write_text(path, text)
        trace = RunTrace.load(path)
        runs[(name, seed)] = {
            "algorithm": name, "seed": seed, "file": str(path.relative_to(out)), "status": status,
            "n_evaluations": n, "sim_time": float(trace.times[-1]) if n else 0.0,
            "best_y": float(trace.values.min()) if n else None, "warnings": warnings,
        }
        _write_manifest(out, spec, chash, runs)
        log.info("%s seed %d: %s after %d evaluations", name, seed, status, n)

    if workers <= 1:
        _init_worker(spec.benchmark)
        for job in jobs:
            record(_run_pair(job))
    elif jobs:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(spec.benchmark,)) as pool:
            for result in pool.map(_run_pair, jobs):
                record(result)
    return _write_manifest(out, spec, chash, runs)


# -- report -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return _fmt(obj)
    return obj


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def load_run_dir(run_dir: Path):
    """Manifest, benchmark table and traces grouped by algorithm."""
    mpath = run_dir / MANIFEST
    if not mpath.exists():
        raise SpecError(f"no {MANIFEST} in {run_dir}")
    manifest = json.loads(mpath.read_text())
    if not manifest.get("runs"):
        raise SpecError(f"{run_dir} contains no traces")
    by_alg = {}
    for r in manifest["runs"]:
        by_alg.setdefault(r["algorithm"], []).append(
            RunTrace.load(run_dir / r["file"], r["seed"], r["algorithm"]))
    return manifest, by_alg


def task_metrics(by_alg, targets: dict, t_max: float, t_b: float | None = None) -> list[dict]:
    rows = []
    for tname, c in targets.items():
        tb = t_b if t_b is not None else derive_budget(by_alg, c, t_max)
        for alg in sorted(by_alg):
            traces = by_alg[alg]
            e = expected_time(traces, c, t_max)
            rows.append({"algorithm": alg, "target": tname, "c": c, "t_b": tb, "t_max": t_max,
                         "n_runs": len(traces), "success_rate": success_rate(traces, c, tb),
                         "expected_time": e, "normalized_expected_time": normalized_expected_time(e, t_max)})
    return rows


def cmd_report(run_dirs, out: Path, t_max: float | None = None, t_b: float | None = None,
               targets: dict | None = None, n_points: int = 200) -> dict:
    rows, series, tasks = [], [], {}
    for run_dir in map(Path, run_dirs):
        manifest, by_alg = load_run_dir(run_dir)
        task = run_dir.resolve().name
        if task in tasks:
            raise SpecError(f"duplicate task name {task!r}")
        try:
            table = load_table(manifest["benchmark"])
        except OSError as e:
            raise TableError(f"cannot read benchmark {manifest['benchmark']}: {e}") from None
        tgt = targets or dict(zip(TARGET_NAMES, derive_targets(table)))
        horizon = t_max
        if horizon is None:
            horizon = float(manifest.get("exit", {}).get("t_max", math.inf))
        if not math.isfinite(horizon):
            horizon = max(float(tr.times[-1]) for trs in by_alg.values() for tr in trs if len(tr))
        tasks[task] = {"optimum": table.optimum_value, "t_max": horizon, "targets": tgt}
        for r in task_metrics(by_alg, tgt, horizon, t_b):
            rows.append({"task": task, **r})
        grid = np.linspace(0.0, horizon, n_points + 1)[1:]
        for alg in sorted(by_alg):
            s = regret_series(by_alg[alg], table.optimum_value, grid)
            for i, t in enumerate(grid):
                series.append((task, alg, float(t), float(s["median"][i]), float(s["q25"][i]),
                               float(s["q75"][i]), float(s["mean"][i])))

    summary = {}
    for tname in sorted({r["target"] for r in rows}):
        sel = [r for r in rows if r["target"] == tname]
        sr = {}
        ne = {}
        for r in sel:
            sr.setdefault(r["algorithm"], {})[r["task"]] = r["success_rate"]
            ne.setdefault(r["algorithm"], {})[r["task"]] = r["normalized_expected_time"]
        summary[tname] = {"success_rate": aggregate(sr, higher_is_better=True),
                          "normalized_expected_time": aggregate(ne, higher_is_better=False)}

    cols = ["task", "algorithm", "target", "c", "t_b", "t_max", "n_runs", "success_rate",
            "expected_time", "normalized_expected_time"]
    atomic_write_text(out / "metrics.csv", _csv_text(cols, [[r[c] for c in cols] for r in rows]))
    report = {"tasks": tasks, "rows": rows, "aggregate": summary}
    atomic_write_text(out / "metrics.json", json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
    atomic_write_text(out / "regret.csv", _csv_text(
        ["task", "algorithm", "time", "median", "q25", "q75", "mean"], series))
    return report


# -- argument handling ----------------------------------------------------------

def _parse_targets(items) -> dict | None:
    if not items:
        return None
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[name] = float(value)
        except ValueError:
            raise SpecError(f"bad target {item!r}; expected NAME=VALUE") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="b2ea", description="Surrogate-assisted NAS experiments on tabular benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every (algorithm, seed) pair of an experiment spec")
    r.add_argument("--spec", required=True)
    r.add_argument("--out", help="output directory (overrides the spec)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed-range", help="inclusive a..b, overrides the spec's seeds")

    rep = sub.add_parser("report", help="metric tables and regret series from run directories")
    rep.add_argument("runs", nargs="+", help="run output directories, one per task")
    rep.add_argument("--out", required=True)
    rep.add_argument("--t-max", type=float)
    rep.add_argument("--t-b", type=float, help="fixed success-rate horizon instead of the derived one")
    rep.add_argument("--target", action="append", metavar="NAME=VALUE",
                     help="absolute target loss; repeatable, replaces c_e/c_d/c_x")
    rep.add_argument("--points", type=int, default=200, help="time points in regret.csv")

    g = sub.add_parser("generate", help="write a synthetic benchmark table")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-configs", type=int, default=3000)
    g.add_argument("--space", help="search space JSON; defaults to the built-in mixed space")
    g.add_argument("--max-epochs", type=int, default=100)
    g.add_argument("--noise", type=float, default=0.02)

    c = sub.add_parser("convert", help="convert a CSV of trained configurations into a table")
    c.add_argument("source")
    c.add_argument("--space", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--max-epochs", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            spec = ExperimentSpec.load(args.spec)
            changes = {}
            if args.out:
                changes["output"] = Path(args.out)
            if args.seed_range:
                changes["seeds"] = tuple(parse_seed_range(args.seed_range))
            if changes:
                spec = dataclasses.replace(spec, **changes)
            m = cmd_run(spec, max(1, args.workers))
            print(f"{len(m['runs'])} runs, total simulated time {m['total_sim_time']:.1f}s -> {spec.output}")
        elif args.command == "report":
            cmd_report(args.runs, Path(args.out), args.t_max, args.t_b,
                       _parse_targets(args.target), args.points)
            print(f"report written to {args.out}")
        elif args.command == "generate":
            space = SearchSpace.load(args.space) if args.space else default_synthetic_space()
            table = generate_synthetic(space, args.n_configs, args.seed, args.max_epochs, args.noise)
            table.save(args.out)
            print(f"{len(table)} configurations -> {args.out}")
        elif args.command == "convert":
            table = convert_csv(args.source, SearchSpace.load(args.space), args.max_epochs)
            table.save(args.out)
            print(f"{len(table)} configurations -> {args.out}")
    except TableError as e:
        print(f"benchmark error: {e}", file=sys.stderr)
        return EXIT_BENCH
    except (SpecError, SpaceError, OSError, json.JSONDecodeError) as e:
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
