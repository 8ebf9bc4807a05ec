"""Tabular benchmarks: file format, simulated evaluation and a synthetic generator.

Table files are JSON lines.  The first line is a header::

    {"format": "b2ea-table", "version": 1, "max_epochs": 100, "space": {...}}

and every following line is one record::

    {"key": "[...]", "values": {"dim": value, ...}, "curve": [...],
     "train_time": 123.4, "valid": true}

``curve`` holds the per-epoch validation loss (lower is better) and may be
``null`` for invalid records.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .io import atomic_write_text, dumps_line
from .space import SearchSpace, SpaceError
from .termination import evaluate_with_termination

FORMAT = "b2ea-table"
VERSION = 1


class TableError(ValueError):
    """Malformed benchmark file or unusable table."""


@dataclass(frozen=True)
class Record:
    config: tuple
    curve: tuple | None
    train_time: float
    valid: bool = True

    @property
    def best(self) -> float:
        return min(self.curve)


@dataclass
class SimClock:
    now: float = 0.0

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot run backwards")
        self.now += dt
        return self.now


@dataclass(frozen=True)
class Observation:
    config: tuple
    key: str
    x: np.ndarray = field(repr=False, compare=False)
    y: float
    curve: tuple = field(repr=False)
    charged_time: float
    terminated_early: bool = False
    substituted: bool = False
    sim_time: float = 0.0


class BenchmarkTable:
    def __init__(self, space: SearchSpace, records, max_epochs: int, meta=None):
        self.space = space
        self.max_epochs = int(max_epochs)
        self.meta = dict(meta or {})
        self.records: dict[str, Record] = {}
        for rec in records:
            k = space.key(rec.config)
            if k in self.records:
                raise TableError(f"duplicate record {k}")
            if rec.valid:
                if rec.curve is None or len(rec.curve) != self.max_epochs:
                    raise TableError(f"record {k}: curve length must equal max_epochs")
                if not rec.train_time > 0:
                    raise TableError(f"record {k}: train_time must be positive")
            self.records[k] = rec
        if not self.valid_keys:
            raise TableError("table has no valid records")

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        return (isinstance(other, BenchmarkTable) and self.space == other.space
                and self.max_epochs == other.max_epochs and self.records == other.records)

    @cached_property
    def valid_keys(self) -> list[str]:
        return [k for k, r in self.records.items() if r.valid]

    @cached_property
    def candidates(self) -> list[tuple]:
        """Valid configurations in file order; the finite candidate set."""
        return [self.records[k].config for k in self.valid_keys]

    @property
    def candidate_keys(self) -> list[str]:
        return self.valid_keys

    @cached_property
    def candidate_matrix(self) -> np.ndarray:
        return self.space.encode_many(self.candidates)

    @cached_property
    def best_losses(self) -> np.ndarray:
        return np.array([self.records[k].best for k in self.valid_keys])

    @cached_property
    def optimum(self) -> tuple:
        i = int(np.argmin(self.best_losses))
        return self.candidates[i], float(self.best_losses[i])

    @property
    def optimum_value(self) -> float:
        return self.optimum[1]

    # -- fail-over --------------------------------------------------------

    @cached_property
    def _nn_index(self):
        order = sorted(self.valid_keys)
        cfgs = [self.records[k].config for k in order]
        fin = [i for i, d in enumerate(self.space.dims) if d.is_finite]
        cont = [i for i, d in enumerate(self.space.dims) if not d.is_finite]
        lookup = {i: {v: j for j, v in enumerate(self.space.dims[i].grid())} for i in fin}
        codes = np.array([[lookup[i][c[i]] for i in fin] for c in cfgs], dtype=int).reshape(len(cfgs), len(fin))
        reals = np.array([[self.space.dims[i].normalize(c[i]) for i in cont] for c in cfgs]).reshape(len(cfgs), len(cont))
        return order, fin, cont, lookup, codes, reals

    def nearest_valid(self, config) -> str:
        """Key of the closest valid record: Hamming distance on finite dimensions
        plus Euclidean distance on normalized continuous ones; ties go to the
        lowest key."""
        order, fin, cont, lookup, codes, reals = self._nn_index
        q = np.array([lookup[i].get(config[i], -1) for i in fin], dtype=int)
        dist = (codes != q).sum(1).astype(float)
        if cont:
            qr = np.array([self.space.dims[i].normalize(config[i]) for i in cont])
            dist += np.sqrt(((reals - qr) ** 2).sum(1))
        return order[int(np.argmin(dist))]

    def resolve(self, config) -> tuple[str, bool]:
        k = self.space.key(config)
        rec = self.records.get(k)
        if rec is not None and rec.valid:
            return k, False
        return self.nearest_valid(config), True

    # -- evaluation -------------------------------------------------------

    def evaluate(self, config, clock: SimClock, rule=None, completed_curves=(),
                 overhead: float = 0.0) -> Observation:
        k, substituted = self.resolve(tuple(config))
        rec = self.records[k]
        ev = evaluate_with_termination(rule, rec.curve, rec.train_time, completed_curves)
        clock.advance(ev.charged_time + overhead)
        return Observation(
            config=rec.config, key=k, x=self.space.encode(rec.config), y=ev.y,
            curve=ev.curve, charged_time=ev.charged_time,
            terminated_early=ev.terminated_early, substituted=substituted,
            sim_time=clock.now,
        )

    # -- serialization ----------------------------------------------------

    def header(self) -> dict:
        h = {"format": FORMAT, "version": VERSION, "max_epochs": self.max_epochs,
             "space": self.space.to_dict()}
        if self.meta:
            h["meta"] = self.meta
        return h

    def to_text(self) -> str:
        lines = [dumps_line(self.header())]
        for k, r in self.records.items():
            lines.append(dumps_line({
                "key": k,
                "values": self.space.as_mapping(r.config),
                "curve": list(r.curve) if r.curve is not None else None,
                "train_time": r.train_time,
                "valid": r.valid,
            }))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        atomic_write_text(path, self.to_text())


def parse_table(lines, source="<table>") -> BenchmarkTable:
    it = iter(enumerate(lines, 1))
    try:
        _, first = next(it)
    except StopIteration:
        raise TableError(f"{source}: empty file") from None
    try:
        header = json.loads(first)
        if header.get("format") != FORMAT:
            raise TableError(f"{source} line 1: not a {FORMAT} header")
        space = SearchSpace.from_dict(header["space"])
        max_epochs = int(header["max_epochs"])
    except (json.JSONDecodeError, KeyError, TypeError, SpaceError) as e:
        raise TableError(f"{source} line 1: bad header ({e})") from None
    records = []
    seen = set()
    for lineno, line in it:
        if not line.strip():
            continue
        where = f"{source} line {lineno}"
        try:
            row = json.loads(line)
            config = space.from_mapping(row["values"])
            valid = bool(row.get("valid", True))
            curve = row.get("curve")
            train_time = float(row.get("train_time", 0.0))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise TableError(f"{where}: {e}") from None
        key = space.key(config)
        if "key" in row and row["key"] != key:
            raise TableError(f"{where}: key {row['key']!r} does not match values")
        if key in seen:
            raise TableError(f"{where}: duplicate record {key}")
        seen.add(key)
        if valid:
            if not isinstance(curve, list) or len(curve) != max_epochs:
                raise TableError(f"{where}: curve length must equal max_epochs={max_epochs}")
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in curve):
                raise TableError(f"{where}: curve must hold finite numbers")
            if not train_time > 0:
                raise TableError(f"{where}: train_time must be positive")
            curve = tuple(float(v) for v in curve)
        else:
            curve = tuple(float(v) for v in curve) if curve else None
        records.append(Record(config, curve, train_time, valid))
    return BenchmarkTable(space, records, max_epochs, header.get("meta"))


def load_table(path) -> BenchmarkTable:
    with open(path) as f:
        return parse_table(f.read().splitlines(), str(path))


def evaluate(table: BenchmarkTable, clock: SimClock, config, rule=None,
             completed_curves=(), overhead=0.0) -> Observation:
    return table.evaluate(config, clock, rule, completed_curves, overhead)


# -- synthetic generator --------------------------------------------------

def _unique_configs(space: SearchSpace, n: int, rng) -> list[tuple]:
    if space.is_finite:
        card = space.cardinality
        if n > card:
            raise TableError(f"requested {n} configurations but the space only has {card}")
        grids = [d.grid() for d in space.dims]
        radices = [len(g) for g in grids]
        if card <= 10_000_000:
            idx = np.sort(rng.choice(int(card), size=n, replace=False))
        else:
            picked: set[int] = set()
            while len(picked) < n:
                picked.add(int(rng.integers(int(card))))
            idx = sorted(picked)
        out = []
        for i in idx:
            i = int(i)
            vals = []
            for g, r in zip(reversed(grids), reversed(radices)):
                i, j = divmod(i, r)
                vals.append(g[j])
            out.append(tuple(reversed(vals)))
        return out
    seen, out = set(), []
    while len(out) < n:
        c = space.sample(rng)
        k = space.key(c)
        if k not in seen:
            seen.add(k)
            out.append(c)
    return out


def synthetic_losses(space: SearchSpace, configs, rng, n_bumps=12, noise=0.02):
    """Smooth multimodal final losses in roughly [0.05, 0.55] plus per-config noise."""
    X = space.encode_many(configs)
    d = X.shape[1]
    scale = np.sqrt(max(len(space.dims), 1))
    w = rng.normal(0.0, 1.0, d) / scale
    centers = X[rng.choice(len(X), size=min(n_bumps, len(X)), replace=False)]
    amps = rng.uniform(0.5, 1.5, len(centers))
    widths = rng.uniform(0.6, 1.2, len(centers)) * scale
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    f = X @ w - (amps * np.exp(-d2 / (2 * widths**2))).sum(1)
    f = (f - f.min()) / max(f.max() - f.min(), 1e-12)
    f = f + rng.normal(0.0, noise, len(f))
    return 0.05 + 0.5 * (f - f.min()) / max(f.max() - f.min(), 1e-12)


def generate_synthetic(space: SearchSpace, n_configs: int, seed: int, max_epochs: int = 100,
                       noise: float = 0.02) -> BenchmarkTable:
    if isinstance(space, dict):
        space = SearchSpace.from_dict(space)
    rng = np.random.default_rng(seed)
    configs = _unique_configs(space, n_configs, rng)
    final = synthetic_losses(space, configs, rng, noise=noise)
    start = final + rng.uniform(0.8, 1.6, len(final))
    rate = rng.uniform(8.0, 30.0, len(final))
    epochs = np.arange(1, max_epochs + 1)
    curves = final[:, None] + (start - final)[:, None] * np.exp(-epochs[None, :] / rate[:, None])
    times = np.exp(rng.uniform(np.log(60.0), np.log(600.0), len(final)))
    records = [
        Record(c, tuple(round(float(v), 10) for v in curve), round(float(t), 6), True)
        for c, curve, t in zip(configs, curves, times)
    ]
    return BenchmarkTable(space, records, max_epochs,
                          {"source": "synthetic", "seed": int(seed), "noise": noise})


def default_synthetic_space() -> SearchSpace:
    """A mixed categorical/discrete space with exactly 3000 configurations."""
    return SearchSpace.from_dict({"dims": [
        {"name": "op_a", "kind": "categorical", "values": ["conv3", "conv1", "pool", "skip", "none"],
         "group": "architecture"},
        {"name": "op_b", "kind": "categorical", "values": ["conv3", "conv1", "pool", "skip"],
         "group": "architecture"},
        {"name": "depth", "kind": "discrete", "lo": 1, "hi": 10, "step": 1, "group": "architecture"},
        {"name": "width", "kind": "discrete", "lo": 16, "hi": 128, "step": 8, "group": "architecture"},
    ]})


# -- converter ------------------------------------------------------------

def convert_csv(source, space: SearchSpace, max_epochs: int | None = None) -> BenchmarkTable:
    """Build a table from a CSV export of an external benchmark.

    Expected columns: one per space dimension, ``train_time``, optionally
    ``valid``, and the learning curve either as ``epoch_1 .. epoch_N`` columns
    or as a single ``curve`` column holding a JSON list.  The whole file is
    validated before a table is returned.
    """
    source = Path(source)
    with open(source, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [n for n in space.names + ["train_time"] if n not in cols]
        if missing:
            raise TableError(f"{source}: missing columns {missing}")
        epoch_cols = sorted((c for c in cols if c.startswith("epoch_")),
                            key=lambda c: int(c.split("_", 1)[1]))
        if not epoch_cols and "curve" not in cols:
            raise TableError(f"{source}: no curve columns")
        rows = list(reader)
    if not rows:
        raise TableError(f"{source}: no data rows")
    records = []
    for lineno, row in enumerate(rows, 2):
        where = f"{source} line {lineno}"
        if None in row or any(v is None for v in row.values()):
            raise TableError(f"{where}: wrong number of fields")
        try:
            vals = {}
            for dim in space.dims:
                raw = row[dim.name]
                if dim.kind == "categorical":
                    vals[dim.name] = _match_category(dim, raw)
                elif dim.kind == "discrete":
                    vals[dim.name] = int(float(raw))
                else:
                    vals[dim.name] = float(raw)
            config = space.from_mapping(vals)
            valid = row.get("valid", "true").strip().lower() not in ("0", "false", "no", "")
            if epoch_cols:
                curve = [float(row[c]) for c in epoch_cols if row[c] != ""]
            else:
                curve = json.loads(row["curve"]) if row["curve"].strip() else []
            train_time = float(row["train_time"]) if row["train_time"] else 0.0
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            raise TableError(f"{where}: {e}") from None
        n_ep = max_epochs or len(curve)
        if valid and len(curve) != n_ep:
            raise TableError(f"{where}: curve has {len(curve)} epochs, expected {n_ep}")
        if max_epochs is None:
            max_epochs = n_ep
        records.append(Record(config, tuple(curve) if curve else None, train_time, valid))
    try:
        return BenchmarkTable(space, records, max_epochs, {"source": str(source.name)})
    except TableError as e:
        raise TableError(f"{source}: {e}") from None


def _match_category(dim, raw):
    for v in dim.values:
        if str(v) == raw:
            return v
    raise ValueError(f"{raw!r} is not a category of {dim.name!r}")
