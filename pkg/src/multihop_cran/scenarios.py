"""Experiment scenarios, scheme dispatch and the cut-set upper bound."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelRealization, received_covariance, sample_channel
from .common import MMOptions
from .decentralized import optimize_dec_si, optimize_ff, optimize_ff_fb
from .dpr import dpr_not_opt, optimize_dpr_opt, optimize_dpr_rank
from .linalg import logdet
from .mf import optimize_mf
from .multicu import optimize_multi_cu
from .solver import INFEASIBLE
from .topology import (CU, ActiveEdgeSet, Edge, Node, RoutingPartition, Topology, TopologyError,
                       active_edges, effective_capacity, longest_path_partition)

BASE_SCHEMES = ("MF", "DPR-opt", "DPR-not-opt", "DPR-dec-FF", "DPR-dec-FF-FB", "DPR-dec-SI")
_RANK = re.compile(r"^DPR-rank-(\d+)$")


class ScenarioError(ValueError):
    pass


class UnsupportedError(ScenarioError):
    pass


def check_scheme(name: str) -> str:
    if name in BASE_SCHEMES:
        return name
    m = _RANK.match(name)
    if m and int(m.group(1)) >= 1:
        return name
    raise ScenarioError(f"unknown scheme {name!r}")


def db_to_linear(x_db: float) -> float:
    return float(10.0 ** (float(x_db) / 10.0))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce an experiment.

    ``p_tx`` is linear.  ``delay`` is the allowed delay ``T``; ``None``
    means ``T = D``.  ``groups`` maps every CU to the MSs it decodes and is
    required when there is more than one CU.  ``params`` records how the
    scenario was built (it does not change the computation).
    """

    topology: Topology
    partition: RoutingPartition
    ms_antennas: tuple
    p_tx: float
    schemes: tuple = ("MF", "DPR-opt")
    trials: int = 1
    seed: int = 0
    delay: float | None = None
    groups: Mapping | None = None
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ms_antennas", tuple(int(n) for n in self.ms_antennas))
        object.__setattr__(self, "schemes", tuple(check_scheme(s) for s in self.schemes))
        if not self.ms_antennas or min(self.ms_antennas) < 1:
            raise ScenarioError("every MS needs at least one antenna")
        if not self.p_tx >= 0:
            raise ScenarioError("transmit power must be non-negative")
        if int(self.trials) < 1:
            raise ScenarioError("trials must be at least 1")
        if self.delay is not None and not self.delay > 0:
            raise ScenarioError("delay must be positive")
        if any(e.capacity < 0 for e in self.topology.edges):
            raise ScenarioError("capacities must be non-negative")
        self.partition.validate(self.topology)
        if self.is_multi_cu:
            if self.groups is None:
                raise ScenarioError("a multi-CU scenario needs the decoded MS subsets")
            bad = [s for s in self.schemes if s != "DPR-opt"]
            if bad:
                raise UnsupportedError(f"schemes {bad} are defined for a single CU only")

    @property
    def is_multi_cu(self) -> bool:
        return len(self.topology.cu_ids) > 1

    @property
    def active(self) -> ActiveEdgeSet:
        return active_edges(self.topology, self.partition)

    def effective_capacities(self, active: ActiveEdgeSet | None = None) -> np.ndarray:
        return effective_capacity(active or self.active, self.delay)

    def channel(self, seed) -> ChannelRealization:
        return sample_channel(self.topology, self.ms_antennas, seed, self.p_tx)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def layer1_assignment(N: int) -> dict:
    """Round-robin parent of each layer-1 RU: ``i -> N + 1 + (i - 1) mod 3``."""
    return {i: N + 1 + (i - 1) % 3 for i in range(1, N + 1)}


def hierarchical_scenario(N: int, C: float, n_ms: int, p_tx_db: float, deactivated: Sequence[int] = (),
                          schemes: Sequence[str] = ("MF", "DPR-opt"), trials: int = 1, seed: int = 0,
                          delay: float | None = None) -> Scenario:
    """Three-layer network: ``N`` RUs, then RUs ``N+1..N+3``, then the CU ``N+4``.

    All RUs and MSs have one antenna and every edge has capacity ``C``.
    A deactivated RU keeps its place in the graph but its outgoing edges
    get capacity 0.
    """
    if int(N) != N or N < 3:
        raise ScenarioError("N must be an integer >= 3")
    if C < 0:
        raise ScenarioError("capacity must be non-negative")
    N = int(N)
    cu = N + 4
    off = set(int(v) for v in deactivated)
    unknown = off - set(range(1, N + 4))
    if unknown:
        raise ScenarioError(f"cannot deactivate unknown RUs {sorted(unknown)}")
    assign = layer1_assignment(N)
    nodes = [Node(i) for i in range(1, N + 4)] + [Node(cu, CU)]
    edges = [Edge(i, p, 0.0 if i in off else float(C)) for i, p in assign.items()]
    edges += [Edge(j, cu, 0.0 if j in off else float(C)) for j in (N + 1, N + 2, N + 3)]
    topo = Topology(nodes, edges)
    part = RoutingPartition([range(1, N + 1), [N + 1, N + 2, N + 3], [cu]])
    params = {"kind": "hierarchical", "N": N, "C": float(C), "n_ms": int(n_ms), "p_tx_db": float(p_tx_db),
              "deactivated": tuple(sorted(off)), "assignment": assign}
    return Scenario(topo, part, (1,) * int(n_ms), db_to_linear(p_tx_db), tuple(schemes), trials, seed, delay,
                    None, params)


def multi_cu_scenario(N: int, C_RU: float, C_CU: float, n_ms_per_cu: Sequence[int], p_tx_db: float,
                      trials: int = 1, seed: int = 0) -> Scenario:
    """Two CUs (``N+4``, ``N+5``) fed by the same three layer-2 RUs.

    Layer 1 attaches to layer 2 as in :func:`hierarchical_scenario`; every
    layer-2 RU has an edge to both CUs.  The CUs are joined by a duplex
    pair of links of capacity ``C_CU`` (left out when ``C_CU = 0``).  CU
    ``N+4`` decodes the first ``n_ms_per_cu[0]`` MSs, CU ``N+5`` the rest.
    """
    if int(N) != N or N < 1:
        raise ScenarioError("N must be a positive integer")
    if C_RU < 0 or C_CU < 0:
        raise ScenarioError("capacities must be non-negative")
    n1, n2 = (int(v) for v in n_ms_per_cu)
    if n1 < 0 or n2 < 0 or n1 + n2 == 0:
        raise ScenarioError("invalid MS split")
    N = int(N)
    c1, c2 = N + 4, N + 5
    assign = layer1_assignment(N)
    nodes = [Node(i) for i in range(1, N + 4)] + [Node(c1, CU), Node(c2, CU)]
    edges = [Edge(i, p, float(C_RU)) for i, p in assign.items()]
    edges += [Edge(j, c, float(C_RU)) for j in (N + 1, N + 2, N + 3) for c in (c1, c2)]
    if C_CU > 0:
        edges += [Edge(c1, c2, float(C_CU)), Edge(c2, c1, float(C_CU))]
    topo = Topology(nodes, edges)
    part = RoutingPartition([range(1, N + 1), [N + 1, N + 2, N + 3], [c1, c2]])
    groups = {c1: tuple(range(n1)), c2: tuple(range(n1, n1 + n2))}
    params = {"kind": "multi_cu", "N": N, "C_RU": float(C_RU), "C_CU": float(C_CU),
              "n_ms_per_cu": (n1, n2), "p_tx_db": float(p_tx_db), "assignment": assign}
    return Scenario(topo, part, (1,) * (n1 + n2), db_to_linear(p_tx_db), ("DPR-opt",), trials, seed, None,
                    groups, params)


def scenario_from_graph(nodes: Sequence[Node], edges: Sequence[Edge], ms_antennas, p_tx_db: float,
                        layers=None, **kwargs) -> Scenario:
    """Scenario on an explicit graph; the partition defaults to longest-path layers."""
    topo = Topology(nodes, edges)
    part = RoutingPartition(layers) if layers is not None else longest_path_partition(topo)
    if isinstance(ms_antennas, (int, np.integer)):
        ms_antennas = (1,) * int(ms_antennas)
    return Scenario(topo, part, tuple(ms_antennas), db_to_linear(p_tx_db), **kwargs)


# ---------------------------------------------------------------- schemes

@dataclass
class SchemeOutcome:
    scheme: str
    sum_rate: float
    residual: float
    outer_iters: int
    status: str
    monotone: bool = True
    solution: object = None


def run_scheme(scheme: str, scenario: Scenario, ch: ChannelRealization, options: MMOptions | None = None,
               active: ActiveEdgeSet | None = None, ceff=None) -> SchemeOutcome:
    """Optimize one scheme on a channel realization."""
    scheme = check_scheme(scheme)
    active = active or scenario.active
    ceff = scenario.effective_capacities(active) if ceff is None else ceff
    if scenario.is_multi_cu:
        if scheme != "DPR-opt":
            raise UnsupportedError(f"{scheme} is defined for a single CU only")
        sol = optimize_multi_cu(ch, active, ceff, scenario.groups, options=options)
    elif scheme == "MF":
        sol = optimize_mf(ch, active, ceff, options)
    elif scheme == "DPR-opt":
        sol = optimize_dpr_opt(ch, active, ceff, options)
    elif scheme == "DPR-not-opt":
        sol = dpr_not_opt(ch, active, ceff)
    elif scheme == "DPR-dec-FF":
        sol = optimize_ff(ch, active, ceff)
    elif scheme == "DPR-dec-FF-FB":
        sol = optimize_ff_fb(ch, active, ceff, options=options)
    elif scheme == "DPR-dec-SI":
        sol = optimize_dec_si(ch, active, ceff, options=options)
    else:
        sol = optimize_dpr_rank(ch, active, ceff, int(_RANK.match(scheme).group(1)), options)
    rec = sol.record
    return SchemeOutcome(scheme, float(sol.sum_rate), rec.residual, rec.outer_iters, rec.status, rec.monotone,
                         sol)


# ---------------------------------------------------------------- cut-set bound

def star_network(active: ActiveEdgeSet, ceff) -> tuple[ActiveEdgeSet, np.ndarray]:
    """Every RU wired straight to the CU with the sum of its outgoing capacities."""
    topo = active.topology
    cu = topo.cu_ids[0]
    ceff = np.asarray(ceff, dtype=float)
    out = {i: float(sum(ceff[k] for k in active.outgoing[i])) for i in topo.ru_ids}
    nodes = [topo.node(i) for i in topo.ru_ids] + [topo.node(cu)]
    star = Topology(nodes, [Edge(i, cu, out[i]) for i in topo.ru_ids])
    act = active_edges(star, RoutingPartition([topo.ru_ids, [cu]]))
    return act, act.capacities


def cutset_upper_bound(scenario: Scenario, ch: ChannelRealization, options: MMOptions | None = None) -> float:
    """``min(total effective capacity into the CU, R_direct)`` in bits.

    ``R_direct`` is the optimized rate of the star network of
    :func:`star_network`.  There it is a nonconvex problem, so both
    optimizers that solve it (joint and per-RU compression coincide on a
    star) are run and the larger rate is kept.
    """
    if scenario.is_multi_cu:
        raise UnsupportedError("the cut-set bound is defined for a single CU")
    active = scenario.active
    ceff = scenario.effective_capacities(active)
    cu = scenario.topology.cu_ids[0]
    into_cu = float(sum(ceff[k] for k in active.incoming[cu]))
    if into_cu <= 0:
        return 0.0
    star, c_star = star_network(active, ceff)
    direct = -np.inf
    for solve in (optimize_dpr_opt, optimize_mf):
        sol = solve(ch, star, c_star, options)
        if sol.record.status != INFEASIBLE:
            direct = max(direct, sol.sum_rate)
    if not np.isfinite(direct):
        direct = logdet(received_covariance(ch))
    return float(min(into_cu, direct))


def interference_free_rate(ch: ChannelRealization) -> float:
    """``log2 det(H Sigma_x H^H + I)``, the unlimited-backhaul rate."""
    return logdet(received_covariance(ch))


def check_topology(scenario: Scenario):
    """Raise unless every node with an active edge reaches a CU."""
    try:
        scenario.effective_capacities()
    except TopologyError as err:
        raise ScenarioError(str(err)) from err
