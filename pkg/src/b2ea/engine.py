"""The two-BO surrogate-assisted evolutionary loop and its baselines.

Each iteration a round-robin surrogate picks the top ``K`` candidates of
the search space (module A), ``M`` of them are mutated (module B), and a
second, randomly chosen surrogate picks the one candidate that is actually
evaluated (module C).

Objectives look like :class:`b2ea.bench.BenchmarkTable`: they expose
``space``, ``candidates`` / ``candidate_keys`` / ``candidate_matrix`` for a
finite candidate set (``candidates`` may be ``None``) and
``evaluate(config, clock, rule, completed_curves, overhead)``.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .acquisition import DEFAULT_POOL, SurrogateSpec, pick_first, pick_second, score
from .bench import SimClock
from .metrics import Event, RunTrace
from .surrogate import ModelFitError, fit_gp, fit_rf
from .termination import TerminationRule
from .transform import fit_power_transform, fit_standardize

log = logging.getLogger(__name__)

STREAMS = ("init", "pool", "mutation", "surrogate", "select", "subsample", "baseline")
GP_EI = SurrogateSpec.parse("GP-EI")
INIT_RETRIES = 100


@dataclass(frozen=True)
class EngineConfig:
    K: int = 10
    M: int = 10
    mutation_prob: float = 0.5
    pool_cap: int = 20000
    subsample_cap: int = 200
    saea: bool = True
    module_a: bool = True
    module_b: bool = True
    module_c: bool = True
    input_warping: bool = True
    output_transform: bool = True
    early_termination: bool = True
    beta: float = 0.25
    checkpoint_fractions: tuple = (0.5, 0.75)
    warmup: int = 10
    n_mc: int = 10
    duplicate_retries: int = 10
    overhead: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "checkpoint_fractions", tuple(self.checkpoint_fractions))
        if not 1 <= self.M <= self.K:
            raise ValueError("need 1 <= M <= K")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.pool_cap < 1 or self.subsample_cap < 2:
            raise ValueError("pool_cap must be >= 1 and subsample_cap >= 2")
        if self.overhead not in ("none", "measured"):
            raise ValueError("overhead must be 'none' or 'measured'")

    @property
    def rule(self) -> TerminationRule | None:
        if not self.early_termination:
            return None
        return TerminationRule(self.beta, self.checkpoint_fractions, self.warmup)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoint_fractions"] = list(self.checkpoint_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown engine options {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ExitCriteria:
    mode: str = "fixed_budget"
    t_max: float = math.inf
    target: float | None = None
    max_evaluations: int | None = None

    def __post_init__(self):
        if self.mode not in ("fixed_budget", "fixed_target"):
            raise ValueError(f"unknown exit mode {self.mode!r}")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.mode == "fixed_target" and self.target is None:
            raise ValueError("fixed_target needs a target value")
        if math.isinf(self.t_max) and self.max_evaluations is None and self.mode == "fixed_budget":
            raise ValueError("an unbounded fixed budget needs max_evaluations")

    @classmethod
    def fixed_budget(cls, t_max, max_evaluations=None):
        return cls("fixed_budget", t_max, None, max_evaluations)

    @classmethod
    def fixed_target(cls, c, t_max=math.inf, max_evaluations=None):
        return cls("fixed_target", t_max, c, max_evaluations)

    def status(self, history: "History", clock: SimClock) -> str | None:
        if self.mode == "fixed_target" and history and history.best_y <= self.target:
            return "target_reached"
        if clock.now >= self.t_max:
            return "budget_exhausted"
        if self.max_evaluations is not None and len(history) >= self.max_evaluations:
            return "evaluations_exhausted"
        return None


class History:
    """Append-only record of evaluated configurations."""

    def __init__(self):
        self.observations = []
        self.keys = set()
        self.completed_curves = []
        self._X = []
        self._y = []

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def append(self, obs):
        self.observations.append(obs)
        self.keys.add(obs.key)
        self._X.append(obs.x)
        self._y.append(obs.y)
        if not obs.terminated_early:
            self.completed_curves.append(obs.curve)

    @property
    def X(self) -> np.ndarray:
        return np.array(self._X)

    @property
    def y(self) -> np.ndarray:
        return np.array(self._y, dtype=float)

    @property
    def best_y(self) -> float:
        return min(self._y) if self._y else math.inf


@dataclass
class FitData:
    X: np.ndarray
    z: np.ndarray
    y_best: float
    transform: object
    index: np.ndarray


def make_streams(seed: int) -> dict:
    """Independent generators per consumer, all derived from one seed."""
    return {name: np.random.default_rng([int(seed), i]) for i, name in enumerate(STREAMS)}


def fit_data(history: History, cfg: EngineConfig, rng) -> FitData:
    """Subsample the history and power-transform its objective values."""
    n = len(history)
    if n > cfg.subsample_cap:
        idx = np.sort(rng.choice(n, size=cfg.subsample_cap, replace=False))
    else:
        idx = np.arange(n)
    y = history.y[idx]
    g = fit_power_transform(y) if cfg.output_transform else fit_standardize(y)
    z = np.asarray(g.apply(y), dtype=float)
    return FitData(history.X[idx], z, float(z.min()), g, idx)


def fit_model(spec: SurrogateSpec, data: FitData, cfg: EngineConfig, model_seed: int):
    rng = np.random.default_rng(model_seed)
    if spec.model == "gp":
        return fit_gp(data.X, data.z, rng, n_samples=cfg.n_mc, warping=cfg.input_warping)
    return fit_rf(data.X, data.z, rng)


def _draw_seed(rng) -> int:
    return int(rng.integers(2**63 - 1))


# -- candidate sets ---------------------------------------------------------

def candidate_pool(objective, history: History, cfg: EngineConfig, rng, need: int):
    """Configurations (and their encodings) that module A may rank.

    The whole finite candidate set when it fits under ``pool_cap``, otherwise
    a uniform sample of ``pool_cap``.  Evaluated configurations are dropped
    whenever at least ``need`` unevaluated ones remain.
    """
    cands = getattr(objective, "candidates", None)
    space = objective.space
    if cands is not None:
        keys = objective.candidate_keys
        if len(cands) <= cfg.pool_cap:
            idx = np.arange(len(cands))
        else:
            idx = np.sort(rng.choice(len(cands), size=cfg.pool_cap, replace=False))
        fresh = np.array([keys[i] not in history.keys for i in idx], dtype=bool)
        if fresh.sum() >= need:
            idx = idx[fresh]
        return [cands[i] for i in idx], objective.candidate_matrix[idx]
    configs = [space.sample(rng) for _ in range(cfg.pool_cap)]
    fresh = [c for c in configs if space.key(c) not in history.keys]
    if len(fresh) >= need:
        configs = fresh
    return configs, space.encode_many(configs)


def _sample_candidate(objective, rng):
    cands = getattr(objective, "candidates", None)
    if cands is not None:
        return cands[int(rng.integers(len(cands)))]
    return objective.space.sample(rng)


def _n_candidates(objective) -> float:
    cands = getattr(objective, "candidates", None)
    return len(cands) if cands is not None else objective.space.cardinality


def _exhausted(objective, history: History) -> bool:
    return len(history.keys) >= _n_candidates(objective)


# -- the three modules ------------------------------------------------------

def module_a_populate(objective, history, first_spec, data, cfg, pool_rng, model_seed):
    """Top-``K`` configurations of the candidate pool under the first surrogate.

    Returns ``(population, scores)``; ``scores`` is ``None`` when the model
    could not be fitted and a random population was used instead.
    """
    configs, X = candidate_pool(objective, history, cfg, pool_rng, need=cfg.K)
    try:
        model = fit_model(first_spec, data, cfg, model_seed)
        s = score(first_spec, model, X, data.y_best)
    except (ModelFitError, np.linalg.LinAlgError) as e:
        log.warning("first surrogate %s failed (%s); using a random population", first_spec, e)
        idx = pool_rng.choice(len(configs), size=min(cfg.K, len(configs)), replace=False)
        return [configs[i] for i in idx], None
    order = np.argsort(-s, kind="stable")[: cfg.K]
    return [configs[i] for i in order], s[order]


def random_population(objective, history, cfg, pool_rng):
    configs, _ = candidate_pool(objective, history, cfg, pool_rng, need=cfg.K)
    idx = pool_rng.choice(len(configs), size=min(cfg.K, len(configs)), replace=False)
    return [configs[i] for i in idx]


def module_b_vary(population, space, cfg, rng, evaluated=frozenset()):
    """Pick ``M`` parents without replacement and mutate each with ``mutation_prob``.

    On finite spaces a mutated child that was already evaluated is re-mutated
    from its parent up to ``duplicate_retries`` times.  Returns the offspring
    and per-offspring mutation flags.
    """
    m = min(cfg.M, len(population))
    parents = rng.choice(len(population), size=m, replace=False)
    children, mutated = [], []
    for i in parents:
        parent = population[int(i)]
        if rng.random() < cfg.mutation_prob:
            child = space.mutate(parent, rng)
            if space.is_finite:
                for _ in range(cfg.duplicate_retries):
                    if space.key(child) not in evaluated:
                        break
                    child = space.mutate(parent, rng)
            children.append(child)
            mutated.append(True)
        else:
            children.append(parent)
            mutated.append(False)
    return children, mutated


def _fresh_indices(configs, space, evaluated):
    idx = [i for i, c in enumerate(configs) if space.key(c) not in evaluated]
    return idx or list(range(len(configs)))


def _argmax(scores, configs, space):
    """Index of the best score; exact ties go to the lowest configuration key
    so the choice does not depend on candidate order."""
    best = np.flatnonzero(scores == scores.max())
    if len(best) == 1:
        return int(best[0])
    return int(min(best, key=lambda i: space.key(configs[i])))


def module_c_select(candidates, space, history, second_spec, data, cfg, model_seed):
    """The candidate the second surrogate scores highest (lowest key on ties).

    Already-evaluated candidates are skipped while unevaluated ones exist.
    """
    idx = _fresh_indices(candidates, space, history.keys)
    if len(idx) == 1:
        return candidates[idx[0]]
    X = space.encode_many([candidates[i] for i in idx])
    model = fit_model(second_spec, data, cfg, model_seed)
    s = score(second_spec, model, X, data.y_best)
    fresh = [candidates[i] for i in idx]
    return fresh[_argmax(s, fresh, space)]


def bo_propose(objective, history, spec, data, cfg, model_seed, pool_rng):
    """Single-surrogate proposal: argmax of the acquisition over the candidate pool."""
    configs, X = candidate_pool(objective, history, cfg, pool_rng, need=1)
    model = fit_model(spec, data, cfg, model_seed)
    s = score(spec, model, X, data.y_best)
    return configs[_argmax(s, configs, objective.space)]


# -- run scaffolding --------------------------------------------------------

class _Run:
    def __init__(self, objective, exit: ExitCriteria, seed: int, algorithm: str,
                 cfg: EngineConfig):
        self.objective = objective
        self.space = objective.space
        self.exit = exit
        self.cfg = cfg
        self.rule = cfg.rule
        self.rng = make_streams(seed)
        self.clock = SimClock()
        self.history = History()
        self.trace = RunTrace([], int(seed), algorithm)

    def evaluate(self, config, overhead=0.0):
        obs = self.objective.evaluate(config, self.clock, self.rule,
                                      self.history.completed_curves, overhead)
        self.history.append(obs)
        self.trace.events.append(Event(len(self.history), obs.sim_time, float(obs.y), obs.key,
                                       bool(obs.terminated_early), bool(obs.substituted)))
        return obs

    def stop(self) -> bool:
        status = self.exit.status(self.history, self.clock)
        if status is None and _exhausted(self.objective, self.history):
            status = "space_exhausted"
        if status is not None:
            self.trace.status = status
            return True
        return False

    def initialize(self, n=2):
        """Evaluate ``n`` distinct uniformly drawn configurations."""
        rng = self.rng["init"]
        picked, keys = [], set()
        limit = min(n, _n_candidates(self.objective))
        while len(picked) < limit:
            c = _sample_candidate(self.objective, rng)
            for _ in range(INIT_RETRIES):
                if self.space.key(c) not in keys:
                    break
                c = _sample_candidate(self.objective, rng)
            if self.space.key(c) in keys:
                break
            keys.add(self.space.key(c))
            picked.append(c)
        if len(picked) < n:
            self.trace.warnings.append(f"initialized with {len(picked)} configuration(s)")
        for c in picked:
            if self.stop():
                break
            self.evaluate(c)

    def timer(self):
        return _Timer(self.cfg.overhead == "measured")


class _Timer:
    def __init__(self, on):
        self.on = on
        self.elapsed = 0.0

    def __enter__(self):
        self._t = time.perf_counter() if self.on else 0.0
        return self

    def __exit__(self, *exc):
        if self.on:
            self.elapsed = time.perf_counter() - self._t


def initialize(objective, rng_seed: int, cfg: EngineConfig | None = None) -> History:
    run = _Run(objective, ExitCriteria.fixed_budget(math.inf, max_evaluations=2), rng_seed,
               "init", cfg or EngineConfig())
    run.initialize()
    return run.history


# -- algorithms -------------------------------------------------------------

def run_b2ea(objective, cfg: EngineConfig, exit: ExitCriteria, seed: int,
             pool=DEFAULT_POOL, observer=None, algorithm="b2ea") -> RunTrace:
    """Run the two-BO evolutionary search until ``exit`` fires.

    ``observer``, if given, is called once per iteration with a dict
    describing the iteration's decisions (used by tests).
    """
    if not cfg.saea:
        return run_single_bo(objective, exit, seed, cfg, algorithm=algorithm, observer=observer)
    run = _Run(objective, exit, seed, algorithm, cfg)
    run.initialize()
    space, rng, history = run.space, run.rng, run.history
    n = 0
    while not run.stop():
        n += 1
        with run.timer() as timer:
            first = pick_first(pool, n)
            second = pick_second(pool, first, rng["select"])
            seeds = (_draw_seed(rng["surrogate"]), _draw_seed(rng["surrogate"]))
            needs_model = cfg.module_a or (cfg.module_c and len(history) > 0)
            data = fit_data(history, cfg, rng["subsample"]) if needs_model and len(history) else None

            scores = None
            if cfg.module_a and data is not None:
                population, scores = module_a_populate(objective, history, first, data, cfg,
                                                       rng["pool"], seeds[0])
            else:
                population = random_population(objective, history, cfg, rng["pool"])

            if cfg.module_b:
                offspring, _ = module_b_vary(population, space, cfg, rng["mutation"], history.keys)
            else:
                offspring = population[: cfg.M]

            if cfg.module_c and data is not None:
                try:
                    chosen = module_c_select(offspring, space, history, second, data, cfg, seeds[1])
                except (ModelFitError, np.linalg.LinAlgError) as e:
                    log.warning("second surrogate %s failed (%s); picking at random", second, e)
                    chosen = offspring[int(rng["select"].integers(len(offspring)))]
            else:
                idx = _fresh_indices(offspring, space, history.keys)
                chosen = offspring[idx[int(rng["select"].integers(len(idx)))]]
        if observer is not None:
            observer({"n": n, "first": first, "second": second, "model_seeds": seeds,
                      "history_size": len(history), "data": data, "population": population,
                      "scores": scores, "offspring": offspring, "chosen": chosen,
                      "history": history})
        run.evaluate(chosen, timer.elapsed)
    return run.trace


def run_single_bo(objective, exit: ExitCriteria, seed: int, cfg: EngineConfig | None = None,
                  spec: SurrogateSpec = GP_EI, algorithm="single_bo", observer=None) -> RunTrace:
    """Plain one-surrogate BO (GP-EI by default) over the module-A style pool."""
    cfg = cfg or EngineConfig()
    run = _Run(objective, exit, seed, algorithm, cfg)
    run.initialize()
    rng, history = run.rng, run.history
    n = 0
    while not run.stop():
        n += 1
        with run.timer() as timer:
            model_seed = _draw_seed(rng["surrogate"])
            data = fit_data(history, cfg, rng["subsample"])
            try:
                chosen = bo_propose(objective, history, spec, data, cfg, model_seed, rng["pool"])
            except (ModelFitError, np.linalg.LinAlgError) as e:
                log.warning("surrogate %s failed (%s); picking at random", spec, e)
                chosen = random_population(objective, history, cfg, rng["pool"])[0]
        if observer is not None:
            observer({"n": n, "spec": spec, "model_seed": model_seed, "data": data,
                      "chosen": chosen, "history": history})
        run.evaluate(chosen, timer.elapsed)
    return run.trace


def run_rs(objective, exit: ExitCriteria, seed: int, cfg: EngineConfig | None = None,
           algorithm="rs") -> RunTrace:
    """Uniform random search; without replacement on finite candidate sets."""
    cfg = cfg or EngineConfig(early_termination=False)
    run = _Run(objective, exit, seed, algorithm, cfg)
    rng = run.rng["init"]
    cands = getattr(objective, "candidates", None)
    if cands is not None:
        order = iter(rng.permutation(len(cands)))
        draw = lambda: cands[int(next(order))]  # noqa: E731
    elif objective.space.is_finite:
        configs = list(objective.space.enumerate())
        order = iter(rng.permutation(len(configs)))
        draw = lambda: configs[int(next(order))]  # noqa: E731
    else:
        draw = lambda: objective.space.sample(rng)  # noqa: E731
    while not run.stop():
        run.evaluate(draw())
    return run.trace


def run_rea(objective, exit: ExitCriteria, seed: int, cfg: EngineConfig | None = None,
            population_size=10, sample_size=3, algorithm="rea") -> RunTrace:
    """Regularized (aging) evolution: tournament of ``sample_size`` drawn with
    replacement, mutate the winner, retire the oldest member."""
    cfg = cfg or EngineConfig(early_termination=False)
    run = _Run(objective, exit, seed, algorithm, cfg)
    rng = run.rng["baseline"]
    population = deque()
    while len(population) < population_size and not run.stop():
        obs = run.evaluate(_sample_candidate(objective, run.rng["init"]))
        population.append((obs.config, obs.y))
    while not run.stop():
        sample = [population[int(rng.integers(len(population)))] for _ in range(sample_size)]
        parent = min(sample, key=lambda p: p[1])
        obs = run.evaluate(objective.space.mutate(parent[0], rng))
        population.append((obs.config, obs.y))
        if len(population) > population_size:
            population.popleft()
    return run.trace


ALGORITHMS = {
    "b2ea": lambda obj, cfg, exit, seed: run_b2ea(obj, cfg, exit, seed),
    "single_bo": lambda obj, cfg, exit, seed: run_single_bo(obj, exit, seed, cfg),
    "rs": lambda obj, cfg, exit, seed: run_rs(obj, exit, seed, cfg),
    "rea": lambda obj, cfg, exit, seed: run_rea(obj, exit, seed, cfg),
}


def run_algorithm(name: str, objective, cfg: EngineConfig, exit: ExitCriteria, seed: int) -> RunTrace:
    try:
        fn = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    trace = fn(objective, cfg, exit, seed)
    trace.algorithm = name
    return trace
