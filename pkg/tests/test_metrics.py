import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from b2ea.metrics import (
    Event,
    RunTrace,
    TargetSet,
    aggregate,
    derive_budget,
    derive_targets,
    expected_time,
    expected_time_from_taus,
    intermediate_regret,
    normalized_expected_time,
    ranks,
    regret_series,
    success_rate,
    target_rank,
)


def trace(pairs, seed=0):
    return RunTrace([Event(i + 1, t, y, str(i)) for i, (t, y) in enumerate(pairs)], seed)


def hitting(tau):
    """A trace that reaches loss 0 at time ``tau``."""
    return trace([(tau / 2, 1.0), (tau, 0.0)])


class TestRegret:
    def test_running_minimum(self):
        tr = trace([(10, 5.0), (20, 3.0)])
        assert intermediate_regret(tr, 15, 1.0) == 4.0
        assert intermediate_regret(tr, 20, 1.0) == 2.0

    def test_zero_after_optimum(self):
        tr = trace([(1, 3.0), (2, 1.0), (3, 2.0), (4, 1.5)])
        assert all(intermediate_regret(tr, t, 1.0) == 0 for t in (2, 3, 4, 100))

    def test_before_first_event(self):
        assert math.isinf(intermediate_regret(trace([(10, 1.0)]), 5, 0.0))

    def test_monotone_on_random_traces(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            times = np.cumsum(rng.uniform(0.1, 5, n))
            tr = trace(list(zip(times, rng.uniform(0, 10, n))))
            grid = np.linspace(0, times[-1] + 1, 40)
            r = [intermediate_regret(tr, t, -1.0) for t in grid]
            assert all(a >= b for a, b in zip(r, r[1:]))


class TestTargets:
    def test_rank_arithmetic(self):
        assert target_rank(15625, 0.01) == 157
        assert target_rank(100, 0.0005) == 1
        assert target_rank(200, 0.01) == 2

    def test_lookup(self):
        losses = np.arange(1, 201, dtype=float)[::-1]
        c_e, c_d, c_x = derive_targets(losses)
        assert c_e == 2.0 and c_d == 1.0 and c_x == 1.0

    def test_floor_guard(self):
        losses = np.linspace(0.5, 1.0, 100)
        assert derive_targets(losses, [0.0005]) == [0.5]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=300))
    def test_monotone(self, losses):
        a, b, c = derive_targets(losses)
        assert a >= b >= c

    def test_targetset_invariants(self):
        TargetSet(3, 2, 1, 5, 10)
        with pytest.raises(ValueError):
            TargetSet(1, 2, 3, 5, 10)
        with pytest.raises(ValueError):
            TargetSet(3, 2, 1, 20, 10)


class TestFixedTarget:
    def test_success_counting(self):
        traces = [hitting(5 * 60), hitting(15 * 60), hitting(25 * 60)]
        assert success_rate(traces, 0.0, 20 * 60) == pytest.approx(2 / 3)
        assert success_rate(traces, 0.0, 0) == 0.0
        assert success_rate(traces, math.inf, 1000 * 60) == 1.0

    def test_expected_time_formula(self):
        assert expected_time_from_taus([10, math.inf], 100) == 110.0
        traces = [hitting(10), trace([(50, 5.0), (200, 3.0)])]
        assert expected_time(traces, 0.0, 100) == 110.0

    def test_expected_time_limits(self):
        assert expected_time([hitting(10), hitting(30)], 0.0, 100) == 20.0
        assert math.isinf(expected_time([trace([(1, 1.0)])], 0.0, 100))

    def test_expected_time_at_least_success_mean(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            taus = rng.uniform(1, 150, 10)
            ok = taus <= 100
            if not ok.any():
                continue
            e = expected_time_from_taus(taus, 100)
            assert e >= taus[ok].mean() - 1e-9
            assert (abs(e - taus[ok].mean()) < 1e-9) == ok.all()

    def test_success_monotone(self):
        rng = np.random.default_rng(2)
        traces = [trace(list(zip(np.cumsum(rng.uniform(1, 5, 20)), rng.uniform(0, 1, 20))))
                  for _ in range(30)]
        ts = np.linspace(0, 120, 50)
        for c in (0.05, 0.2):
            s = [success_rate(traces, c, t) for t in ts]
            assert all(a <= b for a, b in zip(s, s[1:]))
        for t in ts:
            assert success_rate(traces, 0.05, t) <= success_rate(traces, 0.2, t)

    def test_normalized(self):
        assert normalized_expected_time(500, 500) == 100.0

    def test_budget(self):
        by_alg = {"a": [hitting(t) for t in range(1, 101)], "b": [hitting(2 * t) for t in range(1, 101)]}
        assert derive_budget(by_alg, 0.0, 1000) == 99
        assert derive_budget({"a": [trace([(1, 1.0)])]}, 0.0, 1000) == 1000


class TestAggregate:
    def test_symmetric_wins(self):
        out = aggregate({"x": {"t1": 1.0, "t2": 0.0}, "y": {"t1": 0.0, "t2": 1.0}})
        assert out["x"]["mean_rank"] == out["y"]["mean_rank"] == 1.5

    def test_ordering(self):
        r = ranks({"a": 0.2, "b": 0.9, "c": 0.5})
        assert r == {"b": 1.0, "c": 2.0, "a": 3.0}
        r = ranks({"a": 0.2, "b": 0.9, "c": 0.5}, higher_is_better=False)
        assert r == {"a": 1.0, "c": 2.0, "b": 3.0}

    def test_ties_average(self):
        assert ranks({"a": 1.0, "b": 1.0, "c": 0.0}) == {"a": 1.5, "b": 1.5, "c": 3.0}

    def test_mismatched_tasks(self):
        with pytest.raises(ValueError):
            aggregate({"x": {"t1": 1.0}, "y": {"t2": 1.0}})

    def test_mean_std(self):
        out = aggregate({"x": {"t1": 1.0, "t2": 3.0}})
        assert out["x"]["mean"] == 2.0 and out["x"]["std"] == 1.0


def test_trace_round_trip(tmp_path):
    tr = trace([(1.5, 0.3), (2.25, 0.1)])
    tr.save(tmp_path / "t.jsonl")
    back = RunTrace.load(tmp_path / "t.jsonl")
    assert back.events == tr.events


def test_regret_series():
    traces = [trace([(1, 3.0), (2, 1.0)]), trace([(1, 2.0), (3, 0.0)])]
    s = regret_series(traces, 0.0, [1, 2, 3])
    assert s["median"].tolist() == [2.5, 1.5, 0.5]
    assert s["mean"].tolist() == [2.5, 1.5, 0.5]
