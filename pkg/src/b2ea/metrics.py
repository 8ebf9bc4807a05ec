"""Run traces and the three performance views over them: intermediate
regret, fixed-budget success rate and failure-adjusted expected time."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .io import jsonl_text, read_jsonl, write_jsonl

DEFAULT_PERCENTILES = (0.01, 0.0005, 0.0002)
TARGET_NAMES = ("c_e", "c_d", "c_x")


@dataclass(frozen=True)
class Event:
    n: int
    sim_time: float
    y: float
    config_key: str
    terminated_early: bool = False
    substituted: bool = False


@dataclass
class RunTrace:
    events: list = field(default_factory=list)
    seed: int = 0
    algorithm: str = ""
    status: str = "running"
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.sim_time for e in self.events], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.y for e in self.events], dtype=float)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.values) if self.events else np.array([])

    def best_at(self, t: float) -> float:
        """Best value observed at or before time ``t``; ``inf`` before the first event."""
        i = int(np.searchsorted(self.times, t, side="right"))
        return float(self.best_so_far[i - 1]) if i else math.inf

    def hit_time(self, target: float) -> float:
        """First simulated time at which ``y <= target``; ``inf`` if never."""
        for e in self.events:
            if e.y <= target:
                return e.sim_time
        return math.inf

    def to_text(self) -> str:
        return jsonl_text(asdict(e) for e in self.events)

    def save(self, path) -> None:
        write_jsonl(path, (asdict(e) for e in self.events))

    @classmethod
    def load(cls, path, seed=0, algorithm="") -> "RunTrace":
        return cls([Event(**row) for row in read_jsonl(path)], seed, algorithm, "loaded")


@dataclass(frozen=True)
class TargetSet:
    c_e: float
    c_d: float
    c_x: float
    t_b: float
    t_max: float

    def __post_init__(self):
        if not self.c_e >= self.c_d >= self.c_x:
            raise ValueError("targets must satisfy c_e >= c_d >= c_x")
        if not 0 < self.t_b <= self.t_max:
            raise ValueError("need 0 < t_b <= t_max")


def intermediate_regret(trace: RunTrace, t: float, optimum: float) -> float:
    best = trace.best_at(t)
    return math.inf if math.isinf(best) else abs(optimum - best)


def target_rank(n: int, p: float) -> int:
    """1-based rank of the top-``p`` fraction among ``n`` configurations."""
    return max(1, math.ceil(round(p * n, 12)))


def derive_targets(table_or_losses, percentiles: Sequence[float] = DEFAULT_PERCENTILES) -> list:
    """Absolute loss targets at the given top fractions of the table."""
    losses = getattr(table_or_losses, "best_losses", table_or_losses)
    ordered = np.sort(np.asarray(losses, dtype=float))
    n = len(ordered)
    return [float(ordered[min(target_rank(n, p), n) - 1]) for p in percentiles]


def hit_times(traces: Sequence[RunTrace], c: float) -> np.ndarray:
    return np.array([tr.hit_time(c) for tr in traces], dtype=float)


def success_rate(traces: Sequence[RunTrace], c: float, t: float) -> float:
    if not traces:
        raise ValueError("need at least one trace")
    return float(np.mean(hit_times(traces, c) <= t))


def expected_time_from_taus(taus, t_max: float) -> float:
    taus = np.asarray(taus, dtype=float)
    ok = taus <= t_max
    p = float(ok.mean())
    if p == 0:
        return math.inf
    e_s = float(taus[ok].mean())
    return (p * e_s + (1.0 - p) * t_max) / p


def expected_time(traces: Sequence[RunTrace], c: float, t_max: float) -> float:
    """Failure-adjusted expected time to reach ``c``; ``inf`` when no run succeeds."""
    if not traces:
        raise ValueError("need at least one trace")
    return expected_time_from_taus(hit_times(traces, c), t_max)


def normalized_expected_time(e_tau: float, t_max: float) -> float:
    return 100.0 * e_tau / t_max


def derive_budget(traces_by_algorithm: Mapping[str, Sequence[RunTrace]], c: float,
                  t_max: float, level: float = 0.99) -> float:
    """Smallest time at which some algorithm's success rate reaches ``level``;
    ``t_max`` if none does within the budget."""
    best = math.inf
    for traces in traces_by_algorithm.values():
        taus = np.sort(hit_times(traces, c))
        k = math.ceil(round(level * len(taus), 12))
        best = min(best, float(taus[max(k, 1) - 1]))
    return t_max if best > t_max else best


def ranks(values: Mapping[str, float], higher_is_better: bool = True) -> dict:
    names = list(values)
    v = np.array([values[n] for n in names], dtype=float)
    r = rankdata(-v if higher_is_better else v, method="average")
    return dict(zip(names, r.tolist()))


def aggregate(per_task: Mapping[str, Mapping[str, float]], higher_is_better: bool = True) -> dict:
    """Mean/std of values and of per-task ranks across tasks.

    ``per_task`` maps algorithm -> task -> value.  Every algorithm must
    report the same tasks.
    """
    algs = list(per_task)
    if not algs:
        raise ValueError("nothing to aggregate")
    tasks = sorted(per_task[algs[0]])
    for a in algs:
        if sorted(per_task[a]) != tasks:
            raise ValueError(f"algorithm {a!r} covers a different task set")
    rank_table = {a: [] for a in algs}
    for t in tasks:
        r = ranks({a: per_task[a][t] for a in algs}, higher_is_better)
        for a in algs:
            rank_table[a].append(r[a])
    out = {}
    for a in algs:
        vals = np.array([per_task[a][t] for t in tasks], dtype=float)
        finite = vals[np.isfinite(vals)]
        out[a] = {
            "mean": float(vals.mean()) if len(finite) == len(vals) else math.inf,
            "std": float(vals.std()) if len(finite) == len(vals) else math.nan,
            "mean_rank": float(np.mean(rank_table[a])),
            "std_rank": float(np.std(rank_table[a])),
            "ranks": dict(zip(tasks, rank_table[a])),
        }
    return out


def regret_series(traces: Sequence[RunTrace], optimum: float, times) -> dict:
    """Median, quartiles and mean of regret across traces at each time."""
    times = np.asarray(times, dtype=float)
    R = np.array([[intermediate_regret(tr, t, optimum) for t in times] for tr in traces])
    with np.errstate(invalid="ignore"):
        return {
            "time": times,
            "median": np.median(R, axis=0),
            "q25": np.quantile(R, 0.25, axis=0),
            "q75": np.quantile(R, 0.75, axis=0),
            "mean": R.mean(axis=0),
        }
