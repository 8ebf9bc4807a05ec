import json

import pytest

from b2ea.bench import BenchmarkTable, Record, generate_synthetic
from b2ea.space import SearchSpace


def small_space(n_a=5, n_b=4, n_c=5):
    return SearchSpace.from_dict({"dims": [
        {"name": "a", "kind": "categorical", "values": [f"a{i}" for i in range(n_a)]},
        {"name": "b", "kind": "categorical", "values": [f"b{i}" for i in range(n_b)]},
        {"name": "c", "kind": "discrete", "lo": 0, "hi": n_c - 1},
    ]})


@pytest.fixture(scope="session")
def table100():
    return generate_synthetic(small_space(5, 4, 5), 100, seed=11)


@pytest.fixture(scope="session")
def table50():
    return generate_synthetic(small_space(5, 2, 5), 50, seed=3)


@pytest.fixture
def tiny_table():
    space = SearchSpace.from_dict({"dims": [
        {"name": "op", "kind": "categorical", "values": ["x", "y", "z"]},
    ]})
    recs = [
        Record(("x",), (3.0, 2.0, 1.0), 10.0),
        Record(("y",), (2.0, 1.0, 0.5), 20.0),
        Record(("z",), (4.0, 4.0, 3.5), 30.0),
    ]
    return BenchmarkTable(space, recs, 3)


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
