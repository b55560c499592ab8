"""Shared fixtures.

Every optimization run made anywhere in the suite goes through
``common.maximize``; the wrapper installed here asserts that its objective
trace never decreases and that every iterate is feasible, and counts the
runs it has checked.
"""
import numpy as np
import pytest

from multihop_cran import common, decentralized, dpr, mf
from multihop_cran.topology import CU, Edge, Node, RoutingPartition, Topology, active_edges

MM_SLACK = 1e-7
FEAS_TOL = 1e-6

MM_STATS = {"runs": 0, "steps": 0, "worst_drop": 0.0, "worst_residual": 0.0}

_original = common.maximize


def _checked_maximize(program, x0, opts):
    x, rec = _original(program, x0, opts)
    tr = np.asarray(rec.trace, dtype=float)
    drop = float(np.max(tr[:-1] - tr[1:], initial=0.0)) if tr.size > 1 else 0.0
    res = max(rec.residuals, default=0.0)
    MM_STATS["runs"] += 1
    MM_STATS["steps"] += max(tr.size - 1, 0)
    MM_STATS["worst_drop"] = max(MM_STATS["worst_drop"], drop)
    MM_STATS["worst_residual"] = max(MM_STATS["worst_residual"], res)
    if rec.status != "infeasible":
        assert drop <= MM_SLACK, f"MM objective decreased by {drop:.3e}: {tr}"
        assert res < FEAS_TOL, f"infeasible MM iterate (residual {res:.3e})"
    return x, rec


@pytest.fixture(autouse=True, scope="session")
def _enforce_mm_invariants():
    mods = (mf, dpr, decentralized)
    saved = [m.maximize for m in mods]
    for m in mods:
        m.maximize = _checked_maximize
    yield
    for m, f in zip(mods, saved):
        m.maximize = f


def two_layer_topology(capacity=1.0):
    """Five-node example: RUs 1-4 and the CU 5.

    Edges 1->3, 1->4, 1->5, 2->4, 3->5, 4->5.
    """
    nodes = [Node(i) for i in range(1, 5)] + [Node(5, CU)]
    pairs = [(1, 3), (1, 4), (1, 5), (2, 4), (3, 5), (4, 5)]
    return Topology(nodes, [Edge(t, h, capacity) for t, h in pairs])


STRATEGY_1 = [[1, 2], [3, 4], [5]]
STRATEGY_2 = [[1, 2, 3, 4], [5]]


@pytest.fixture
def example_topology():
    return two_layer_topology()


def chain(antennas=(1, 1), capacity=1.0):
    """RU 1 -> RU 2 -> CU 3."""
    nodes = [Node(1, antennas=antennas[0]), Node(2, antennas=antennas[1]), Node(3, CU)]
    topo = Topology(nodes, [Edge(1, 2, capacity), Edge(2, 3, capacity)])
    return active_edges(topo, RoutingPartition([[1], [2], [3]]))


def single_edge(antennas=1, capacity=1.0):
    topo = Topology([Node(1, antennas=antennas), Node(2, CU)], [Edge(1, 2, capacity)])
    return active_edges(topo, RoutingPartition([[1], [2]]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(line: str):
    """Record one acceptance verdict; all of them are repeated in the terminal summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"MM runs checked: {MM_STATS['runs']} ({MM_STATS['steps']} steps), largest objective drop "
        f"{MM_STATS['worst_drop']:.2e}, largest residual {MM_STATS['worst_residual']:.2e}")
