import numpy as np
import pytest

from trustnum.topology import Flow, Network, path_from_nodes

FIG5_NODES = ["s", "1", "2", "3", "4", "5", "6", "d"]
FIG5_LINKS = [("s", "1"), ("1", "2"), ("2", "d"), ("1", "4"), ("4", "d"), ("s", "3"),
              ("3", "2"), ("3", "4"), ("s", "5"), ("5", "6"), ("6", "d")]
FIG5_PATHS = [["s", "1", "2", "d"], ["s", "1", "4", "d"], ["s", "3", "2", "d"],
              ["s", "3", "4", "d"], ["s", "5", "6", "d"]]
# raw trust samples per update period, one column per node in FIG5_NODES
FIG5_TRUST = [
    [1, 1, 1, 0.7, 1, 0.7, 0.5, 1],
    [1, 0.9, 0.9, 0.5, 0.9, 0.2, 0.2, 1],
    [1, 0.9, 0.9, 0.3, 0.7, 0.1, 0.1, 1],
    [1, 0.9, 0.9, 0.2, 0.5, 0.1, 0.1, 1],
]


@pytest.fixture
def fig5_network():
    return Network.from_triples(FIG5_NODES, [(a, b, 10.0) for a, b in FIG5_LINKS])


@pytest.fixture
def fig5_flow():
    paths = tuple(path_from_nodes(p, f"s{i + 1}") for i, p in enumerate(FIG5_PATHS))
    return Flow("s", "d", paths, r_max=10.0, r_thres=0.0, d_max=2.0, name="s")


@pytest.fixture
def trust_row():
    def row(period):
        return dict(zip(FIG5_NODES, map(float, FIG5_TRUST[period - 1])))
    return row


@pytest.fixture
def chain():
    """s -> a -> b -> c with unit-ten capacities."""
    return Network.from_triples(["s", "a", "b", "c"], [("s", "a", 10), ("a", "b", 10), ("b", "c", 10)])


def rng_for(seed):
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def fig5_runs():
    """Bundled Fig. 5 scenario solved once per rate variant: {R_s: (trace, seconds, scenario)}."""
    import time

    from trustnum.sim.runner import run
    from trustnum.sim.scenario import bundled_path, load_scenario

    out = {}
    for sc in load_scenario(bundled_path("paper_fig5")).variants():
        t0 = time.perf_counter()
        trace = run(sc)
        out[sc.rate_variants[0]] = (trace, time.perf_counter() - t0, sc)
    return out


_CRITERIA = []


@pytest.fixture
def report():
    """Record one acceptance line: report(number, ok, detail)."""
    def record(number, ok, detail):
        _CRITERIA.append((number, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
