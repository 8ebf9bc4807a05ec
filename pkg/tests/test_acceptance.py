"""End-to-end acceptance checks.

Each test prints a single ``[PASS]`` / ``[FAIL]`` line; the lines are also
repeated in pytest's terminal summary.  Run this file directly to get just
the summary::

    python tests/test_acceptance.py
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy import integrate, stats

from b2ea.acquisition import DEFAULT_POOL, AcquisitionKind, acq_value, pick_second
from b2ea.bench import default_synthetic_space, generate_synthetic
from b2ea.cli import ExperimentSpec, cmd_run
from b2ea.engine import (
    EngineConfig,
    ExitCriteria,
    bo_propose,
    module_b_vary,
    run_b2ea,
    run_rs,
    run_single_bo,
)
from b2ea.metrics import (
    Event,
    RunTrace,
    derive_targets,
    expected_time,
    expected_time_from_taus,
    intermediate_regret,
    success_rate,
)
from b2ea.space import SearchSpace
from b2ea.surrogate import FittedGP, sample_hypers

pytestmark = pytest.mark.acceptance

RESULTS = {}


def verdict(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def mixed_space():
    return SearchSpace.from_dict({"dims": [
        {"name": "a", "kind": "categorical", "values": [f"a{i}" for i in range(5)]},
        {"name": "b", "kind": "categorical", "values": [f"b{i}" for i in range(4)]},
        {"name": "c", "kind": "discrete", "lo": 0, "hi": 4},
    ]})


# 1 ---------------------------------------------------------------------------

def test_1_acquisition_quadrature():
    t0 = time.perf_counter()
    worst = 0.0
    grid = [(mu, sd, yb) for mu in (-2.0, -0.3, 0.0, 0.4, 1.5)
            for sd in (0.05, 0.3, 1.0, 2.5) for yb in (-1.0, 0.0, 0.2, 0.9, 3.0)]
    assert len(grid) == 100
    for mu, sd, yb in grid:
        for name in ("EI", "PI"):
            kind = AcquisitionKind(name)
            thr = yb - kind.epsilon
            gain = (lambda y: thr - y) if name == "EI" else (lambda y: 1.0)
            lo = mu - 40 * sd
            ref = 0.0 if thr <= lo else integrate.quad(
                lambda y: gain(y) * stats.norm.pdf(y, mu, sd), lo, thr,
                points=[mu] if lo < mu < thr else None, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            worst = max(worst, abs(acq_value(kind, mu, sd * sd, yb) - ref))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-4 and dt < 60, f"max |EI/PI - quadrature| = {worst:.2e} over 100 cases ({dt:.1f}s)")


# 2 ---------------------------------------------------------------------------

def _kern(h, a, b):
    wa = [1 - (1 - x**p) ** q for x, p, q in zip(a, h.warp_a, h.warp_b)]
    wb = [1 - (1 - x**p) ** q for x, p, q in zip(b, h.warp_a, h.warp_b)]
    lin = h.linear_variance * sum(x * y for x, y in zip(wa, wb))
    r = math.sqrt(sum(((x - y) / l) ** 2 for x, y, l in zip(wa, wb, h.lengthscales)))
    return lin + h.matern_variance * (1 + math.sqrt(3) * r) * math.exp(-math.sqrt(3) * r)


def test_2_gp_direct_solve():
    t0 = time.perf_counter()
    worst, cases = 0.0, 0
    rng = np.random.default_rng(2024)
    for n in range(1, 11):
        for d in (1, 3, 6):
            X = rng.uniform(size=(n, d))
            y = rng.standard_normal(n)
            hypers = sample_hypers(d, rng, n=3)
            Xs = rng.uniform(size=(4, d))
            means, varis = FittedGP(X, y, hypers).predict(Xs)
            for s, h in enumerate(hypers):
                K = np.array([[_kern(h, X[i], X[j]) for j in range(n)] for i in range(n)])
                K += h.noise_variance * np.eye(n)
                for j, xs in enumerate(Xs):
                    k = np.array([_kern(h, X[i], xs) for i in range(n)])
                    mu = k @ np.linalg.solve(K, y)
                    var = _kern(h, xs, xs) - k @ np.linalg.solve(K, k)
                    worst = max(worst, abs(means[s, j] - mu), abs(varis[s, j] - var))
                    cases += 1
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-8 and dt < 60, f"max posterior deviation {worst:.2e} over {cases} points ({dt:.1f}s)")


# 3 ---------------------------------------------------------------------------

def test_3_collapse_to_bo():
    table = generate_synthetic(SearchSpace.from_dict({"dims": [
        {"name": "a", "kind": "categorical", "values": [f"a{i}" for i in range(5)]},
        {"name": "b", "kind": "categorical", "values": ["b0", "b1"]},
        {"name": "c", "kind": "discrete", "lo": 0, "hi": 4}]}), 50, seed=3)
    n = len(table.candidates)
    cfg = EngineConfig(module_b=False, K=n, M=n)
    mismatches = []

    def check(info):
        ref = bo_propose(table, info["history"], info["second"], info["data"], cfg,
                         info["model_seeds"][1], np.random.default_rng(0))
        if ref != info["chosen"]:
            mismatches.append(info["n"])

    trace = run_b2ea(table, cfg, ExitCriteria.fixed_budget(math.inf, 22), 7, observer=check)
    ok = len(trace) == 22 and not mismatches
    verdict(3, ok, f"20 iterations, {len(mismatches)} selections differ from single-BO")


# 4 ---------------------------------------------------------------------------

def evals_to_optimum(trace, opt):
    return next(e.n for e in trace.events if e.y <= opt)


def test_4_ablation_equals_rs():
    table = generate_synthetic(mixed_space(), 100, seed=11)
    opt = table.optimum_value
    ex = ExitCriteria.fixed_target(opt, math.inf)
    off = EngineConfig(module_a=False, module_b=False, module_c=False, early_termination=False)
    a = np.array([evals_to_optimum(run_b2ea(table, off, ex, s), opt) for s in range(200)])
    b = np.array([evals_to_optimum(run_rs(table, ex, s), opt) for s in range(200)])
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    diff = abs(a.mean() - b.mean())
    verdict(4, diff < 2 * se, f"mean evaluations {a.mean():.2f} (off/off/off) vs {b.mean():.2f} (RS), "
                              f"|diff| = {diff / se:.2f} SE")


# 5 ---------------------------------------------------------------------------

def test_5_desk_scale_dominance():
    t0 = time.perf_counter()
    table = generate_synthetic(default_synthetic_space(), 3000, seed=0)
    c_d = derive_targets(table)[1]
    ex = ExitCriteria.fixed_target(c_d, math.inf)
    plain = EngineConfig(early_termination=False)
    medians = {}
    for name, fn in (("b2ea", lambda s: run_b2ea(table, EngineConfig(), ex, s)),
                     ("single_bo", lambda s: run_single_bo(table, ex, s, plain)),
                     ("rs", lambda s: run_rs(table, ex, s, plain))):
        medians[name] = float(np.median([fn(s).hit_time(c_d) for s in range(50)]))
    r_rs = medians["b2ea"] / medians["rs"]
    r_bo = medians["b2ea"] / medians["single_bo"]
    dt = time.perf_counter() - t0
    verdict(5, r_rs <= 0.5 and r_bo <= 0.9,
            f"median time-to-c_d b2ea {medians['b2ea']:.0f}s, single-BO {medians['single_bo']:.0f}s, "
            f"RS {medians['rs']:.0f}s; ratios {r_rs:.3f} (<=0.5) and {r_bo:.3f} (<=0.9) ({dt:.0f}s)")


# 6 ---------------------------------------------------------------------------

def _trace(pairs):
    return RunTrace([Event(i + 1, t, y, str(i)) for i, (t, y) in enumerate(pairs)])


def test_6_metric_formulas():
    checks = []
    checks.append(expected_time_from_taus([10.0, math.inf], 100.0) == 110.0)
    checks.append(expected_time([_trace([(10, 0.0)]), _trace([(50, 1.0)])], 0.0, 100.0) == 110.0)
    traces = [_trace([(t / 2, 1.0), (t, 0.0)]) for t in (300.0, 900.0, 1500.0)]
    checks.append(success_rate(traces, 0.0, 1200.0) == 2 / 3)
    checks.append(success_rate(traces, 0.0, 0.0) == 0.0)
    checks.append(success_rate(traces, math.inf, 1e9) == 1.0)
    rng = np.random.default_rng(6)
    monotone = 0
    for _ in range(1000):
        k = int(rng.integers(1, 40))
        times = np.cumsum(rng.uniform(0.01, 10, k))
        tr = _trace(list(zip(times, rng.normal(size=k))))
        grid = np.sort(rng.uniform(0, times[-1] * 1.2, 60))
        r = [intermediate_regret(tr, t, -10.0) for t in grid]
        monotone += all(x >= y for x, y in zip(r, r[1:]))
    verdict(6, all(checks) and monotone == 1000,
            f"{sum(checks)}/{len(checks)} formula fixtures exact; r_t monotone on {monotone}/1000 traces")


# 7 ---------------------------------------------------------------------------

ET_TABLE_CONFIGS = 3000
ET_EVALS = 50


def test_7_early_termination_safety():
    table = generate_synthetic(default_synthetic_space(), ET_TABLE_CONFIGS, seed=5)
    opt = table.optimum_value
    ex = ExitCriteria.fixed_budget(math.inf, ET_EVALS)
    identical = all(
        run_b2ea(table, EngineConfig(beta=0.0), ex, s).to_text()
        == run_b2ea(table, EngineConfig(early_termination=False), ex, s).to_text()
        for s in range(5))

    def train_time(trace):
        # the overhead-free clock is pure charged training time
        return trace.events[-1].sim_time

    on = [run_b2ea(table, EngineConfig(beta=0.25), ex, s) for s in range(50)]
    off = [run_b2ea(table, EngineConfig(early_termination=False), ex, s) for s in range(50)]
    saving = 1 - sum(map(train_time, on)) / sum(map(train_time, off))
    reg_on = float(np.median([tr.values.min() - opt for tr in on]))
    reg_off = float(np.median([tr.values.min() - opt for tr in off]))
    change = 0.0 if reg_on == reg_off else abs(reg_on - reg_off) / max(reg_off, 1e-300)
    verdict(7, identical and saving >= 0.05 and change < 0.10,
            f"beta=0 byte-identical: {identical}; training time saved {100 * saving:.1f}% (>=5%); "
            f"median final regret {reg_on:.4g} vs {reg_off:.4g}, change {100 * change:.1f}% (<10%)")


# 8 ---------------------------------------------------------------------------

def _traces(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted((out / "traces").rglob("*.jsonl"))}


def test_8_determinism(tmp_path):
    bench = tmp_path / "table.jsonl"
    generate_synthetic(mixed_space(), 100, seed=11).save(bench)
    spec = {"benchmark": str(bench), "algorithms": ["b2ea", "single_bo", "rs", "rea"],
            "seeds": [0, 1, 2, 3], "exit": {"mode": "fixed_budget", "t_max": 1e12, "max_evaluations": 15}}
    outs = {}
    for label, workers in (("first", 1), ("second", 1), ("pool", 4)):
        s = ExperimentSpec.from_dict({**spec, "output": str(tmp_path / label)})
        cmd_run(s, workers)
        outs[label] = _traces(tmp_path / label)
    same_runs = outs["first"] == outs["second"]
    same_workers = outs["first"] == outs["pool"]
    verdict(8, same_runs and same_workers and len(outs["first"]) == 16,
            f"{len(outs['first'])} trace files; identical across runs: {same_runs}, "
            f"across 1 vs 4 workers: {same_workers}")


# 9 ---------------------------------------------------------------------------

def test_9_diversification_statistics():
    n = 10000
    space = mixed_space()
    rng = np.random.default_rng(9)
    base = ("a0", "b0", 0)
    counts = np.zeros(3)
    for _ in range(n):
        child = space.mutate(base, rng)
        counts[[i for i in range(3) if child[i] != base[i]][0]] += 1
    p_dim = stats.chisquare(counts).pvalue

    first = DEFAULT_POOL[1]
    picks = [pick_second(DEFAULT_POOL, first, rng) for _ in range(n)]
    freq = np.array([sum(p == s for p in picks) for s in DEFAULT_POOL if s != first])
    excluded = all(p != first for p in picks)
    p_second = stats.chisquare(freq).pvalue

    cfg = EngineConfig(mutation_prob=0.5)
    pop = [space.sample(rng) for _ in range(10)]
    flags = []
    while len(flags) < n:
        flags += module_b_vary(pop, space, cfg, rng)[1]
    k = sum(flags[:n])
    p_mut = stats.chisquare([k, n - k]).pvalue

    ok = min(p_dim, p_second, p_mut) > 0.01 and excluded
    verdict(9, ok, f"chi-square p-values: dimension {p_dim:.3f}, second model {p_second:.3f} "
                   f"(first never drawn: {excluded}), mutation fraction {k / n:.4f} p={p_mut:.3f}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
