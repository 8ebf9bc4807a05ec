"""Mixed-type search spaces: dimensions, encodings, sampling and mutation.

A configuration is a plain tuple holding one value per dimension, in the
order the dimensions are declared.  Spaces are immutable and can be shared
between runs; random state is always passed in by the caller.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np

KINDS = ("categorical", "discrete", "continuous")
GROUPS = ("architecture", "hyperparameter")
ENCODINGS = ("one_hot", "adjacency_matrix")

Config = tuple


class SpaceError(ValueError):
    """Raised for malformed spaces or configurations that do not fit a space."""


@dataclass(frozen=True)
class ParamDim:
    name: str
    kind: str
    values: tuple = ()
    lo: float = 0.0
    hi: float = 1.0
    step: int = 1
    group: str = "hyperparameter"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if self.group not in GROUPS:
            raise SpaceError(f"dimension {self.name!r}: unknown group {self.group!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "values", tuple(self.values))
            if not self.values:
                raise SpaceError(f"dimension {self.name!r}: empty category list")
            if len(set(self.values)) != len(self.values):
                raise SpaceError(f"dimension {self.name!r}: duplicate categories")
        elif self.kind == "discrete":
            for attr in ("lo", "hi", "step"):
                v = getattr(self, attr)
                if int(v) != v:
                    raise SpaceError(f"dimension {self.name!r}: {attr} must be an integer")
                object.__setattr__(self, attr, int(v))
            if self.step <= 0:
                raise SpaceError(f"dimension {self.name!r}: step must be positive")
            if self.lo > self.hi or (self.hi - self.lo) % self.step:
                raise SpaceError(
                    f"dimension {self.name!r}: need lo <= hi and (hi - lo) divisible by step"
                )
        else:
            object.__setattr__(self, "lo", float(self.lo))
            object.__setattr__(self, "hi", float(self.hi))
            if not self.lo < self.hi:
                raise SpaceError(f"dimension {self.name!r}: need lo < hi")

    @property
    def is_finite(self) -> bool:
        return self.kind != "continuous"

    @property
    def size(self) -> float:
        """Number of distinct values; ``inf`` for continuous dimensions."""
        if self.kind == "categorical":
            return len(self.values)
        if self.kind == "discrete":
            return (self.hi - self.lo) // self.step + 1
        return math.inf

    @property
    def mutable(self) -> bool:
        return self.size > 1

    def grid(self) -> tuple:
        if self.kind == "categorical":
            return self.values
        if self.kind == "discrete":
            return tuple(range(self.lo, self.hi + 1, self.step))
        raise SpaceError(f"dimension {self.name!r} is continuous and has no grid")

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return v in self.values
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            return False
        if self.kind == "discrete":
            return int(v) == v and self.lo <= v <= self.hi and (v - self.lo) % self.step == 0
        return self.lo <= v <= self.hi

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.values[int(rng.integers(len(self.values)))]
        if self.kind == "discrete":
            return self.lo + self.step * int(rng.integers(self.size))
        return float(rng.uniform(self.lo, self.hi))

    def resample_other(self, v, rng: np.random.Generator):
        """Draw a value uniformly from the domain, excluding ``v`` on finite grids."""
        if self.kind == "continuous":
            return float(rng.uniform(self.lo, self.hi))
        grid = self.grid()
        i = grid.index(v)
        j = int(rng.integers(len(grid) - 1))
        return grid[j + 1 if j >= i else j]

    def normalize(self, v) -> float:
        if self.hi == self.lo:
            return 0.0
        return (float(v) - self.lo) / (self.hi - self.lo)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind, "group": self.group}
        if self.kind == "categorical":
            d["values"] = list(self.values)
        elif self.kind == "discrete":
            d.update(lo=self.lo, hi=self.hi, step=self.step)
        else:
            d.update(lo=self.lo, hi=self.hi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParamDim":
        try:
            kind = d["kind"]
            kw = {"name": d["name"], "kind": kind, "group": d.get("group", "hyperparameter")}
        except KeyError as e:
            raise SpaceError(f"dimension entry missing field {e}") from None
        if kind == "categorical":
            kw["values"] = tuple(d.get("values", ()))
        elif kind in ("discrete", "continuous"):
            if "lo" not in d or "hi" not in d:
                raise SpaceError(f"dimension {d['name']!r}: lo and hi are required")
            kw.update(lo=d["lo"], hi=d["hi"])
            if kind == "discrete":
                kw["step"] = d.get("step", 1)
        return cls(**kw)


@dataclass(frozen=True)
class CellSpec:
    """Marks which categorical dimensions describe a DAG cell.

    ``edges`` name the dimensions holding the 0/1 entries of the strict upper
    triangle of the ``n_nodes`` x ``n_nodes`` adjacency matrix, listed in
    row-major order.  ``ops`` name the per-node operation dimensions.
    """

    n_nodes: int
    edges: tuple
    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "ops", tuple(self.ops))
        if len(self.edges) != self.n_nodes * (self.n_nodes - 1) // 2:
            raise SpaceError("cell edge list must cover the strict upper triangle")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple
    encoding: str = "one_hot"
    cell: CellSpec | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise SpaceError("dimension names must be unique")
        if self.encoding not in ENCODINGS:
            raise SpaceError(f"unknown encoding {self.encoding!r}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})
        if self.encoding == "adjacency_matrix":
            if self.cell is None:
                raise SpaceError("adjacency_matrix encoding requires a cell declaration")
            for n in self.cell.edges + self.cell.ops:
                if n not in self._index:
                    raise SpaceError(f"cell refers to unknown dimension {n!r}")
            for n in self.cell.edges:
                d = self.dims[self._index[n]]
                if not d.is_finite or not set(d.grid()) <= {0, 1}:
                    raise SpaceError(f"edge dimension {n!r} must take values in {{0, 1}}")
            for n in self.cell.ops:
                if self.dims[self._index[n]].kind != "categorical":
                    raise SpaceError(f"operation dimension {n!r} must be categorical")

    def __len__(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def is_finite(self) -> bool:
        return all(d.is_finite for d in self.dims)

    @property
    def cardinality(self) -> float:
        return math.prod(d.size for d in self.dims)

    def validate(self, c: Sequence) -> Config:
        if len(c) != len(self.dims):
            raise SpaceError(f"config has {len(c)} values, space has {len(self.dims)} dimensions")
        out = []
        for d, v in zip(self.dims, c):
            if not d.contains(v):
                raise SpaceError(f"value {v!r} outside domain of dimension {d.name!r}")
            if d.kind == "categorical":
                v = d.values[d.values.index(v)]
            out.append(int(v) if d.kind == "discrete" else float(v) if d.kind == "continuous" else v)
        return tuple(out)

    def from_mapping(self, values: dict) -> Config:
        try:
            return self.validate([values[n] for n in self.names])
        except KeyError as e:
            raise SpaceError(f"missing value for dimension {e}") from None

    def as_mapping(self, c: Config) -> dict:
        return dict(zip(self.names, c))

    def key(self, c: Config) -> str:
        return json.dumps(list(c), separators=(",", ":"))

    def from_key(self, key: str) -> Config:
        return self.validate(json.loads(key))

    # -- sampling ---------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> Config:
        return tuple(d.sample(rng) for d in self.dims)

    def enumerate(self) -> Iterable[Config]:
        return itertools.product(*(d.grid() for d in self.dims))

    def mutate(self, parent: Config, rng: np.random.Generator) -> Config:
        movable = [i for i, d in enumerate(self.dims) if d.mutable]
        if not movable:
            return tuple(parent)
        i = movable[int(rng.integers(len(movable)))]
        child = list(parent)
        child[i] = self.dims[i].resample_other(parent[i], rng)
        return tuple(child)

    # -- encoding ---------------------------------------------------------

    @cached_property
    def _layout(self) -> list[tuple[int, str, Any]]:
        # (dimension index, how, lookup) triples emitted in order
        layout = []
        celled = set()
        if self.encoding == "adjacency_matrix":
            for n in self.cell.edges:
                layout.append((self._index[n], "bit", None))
            for n in self.cell.ops:
                d = self.dims[self._index[n]]
                layout.append((self._index[n], "onehot", {v: j for j, v in enumerate(d.values)}))
            celled = set(self._index[n] for n in self.cell.edges + self.cell.ops)
        for i, d in enumerate(self.dims):
            if i in celled:
                continue
            if d.kind == "categorical":
                layout.append((i, "onehot", {v: j for j, v in enumerate(d.values)}))
            else:
                layout.append((i, "scale", None))
        return layout

    @cached_property
    def n_features(self) -> int:
        return sum(len(lk) if how == "onehot" else 1 for _, how, lk in self._layout)

    def encode(self, c: Config) -> np.ndarray:
        if len(c) != len(self.dims):
            raise SpaceError(f"config has {len(c)} values, space has {len(self.dims)} dimensions")
        out = np.zeros(self.n_features)
        pos = 0
        for i, how, lk in self._layout:
            v = c[i]
            if how == "onehot":
                if v not in lk:
                    raise SpaceError(f"value {v!r} outside domain of dimension {self.dims[i].name!r}")
                out[pos + lk[v]] = 1.0
                pos += len(lk)
            else:
                d = self.dims[i]
                if not d.contains(v):
                    raise SpaceError(f"value {v!r} outside domain of dimension {d.name!r}")
                out[pos] = float(v) if how == "bit" else d.normalize(v)
                pos += 1
        return out

    def encode_many(self, configs: Sequence[Config]) -> np.ndarray:
        if not len(configs):
            return np.zeros((0, self.n_features))
        return np.stack([self.encode(c) for c in configs])

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"dims": [p.to_dict() for p in self.dims], "encoding": self.encoding}
        if self.cell is not None:
            d["cell"] = {"n_nodes": self.cell.n_nodes, "edges": list(self.cell.edges),
                         "ops": list(self.cell.ops)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        if not isinstance(d, dict) or "dims" not in d:
            raise SpaceError("space definition needs a 'dims' list")
        cell = d.get("cell")
        if cell is not None:
            try:
                cell = CellSpec(int(cell["n_nodes"]), cell["edges"], cell.get("ops", ()))
            except KeyError as e:
                raise SpaceError(f"cell declaration missing field {e}") from None
        return cls(tuple(ParamDim.from_dict(p) for p in d["dims"]),
                   d.get("encoding", "one_hot"), cell)

    @classmethod
    def load(cls, path) -> "SearchSpace":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Config:
    return space.sample(rng)


def encode(space: SearchSpace, c: Config) -> np.ndarray:
    return space.encode(c)


def mutate(space: SearchSpace, parent: Config, rng: np.random.Generator) -> Config:
    return space.mutate(parent, rng)


def hamming(a: Config, b: Config) -> int:
    return sum(x != y for x, y in zip(a, b))
