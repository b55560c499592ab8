"""Capacitated DAG of radio units (RUs) and control units (CUs).

A routing strategy is an ordered partition of the nodes into layers; only
edges that go from an earlier layer to a later one are *active*.  The
declaration order of the edges is kept everywhere downstream, so it fixes
the block layout of every stacked vector and matrix in the schemes.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class TopologyError(ValueError):
    """Invalid graph, partition or rank limits."""


class UnreachableNodeError(TopologyError):
    pass


RU = "RU"
CU = "CU"


@dataclass(frozen=True)
class Node:
    id: int
    kind: str = RU
    antennas: int = 1
    relay_only: bool = False


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    capacity: float


class Topology:
    """Nodes and capacitated edges.

    Links between two CUs (inter-CU cooperation links) are allowed to form
    duplex pairs; every other edge must respect a topological order.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise TopologyError("duplicate node ids")
        if not any(n.kind == CU for n in self.nodes):
            raise TopologyError("topology needs at least one CU")
        for n in self.nodes:
            if n.kind not in (RU, CU):
                raise TopologyError(f"unknown node kind {n.kind!r}")
            if n.antennas < 0:
                raise TopologyError(f"node {n.id}: negative antenna count")
        seen = set()
        for e in self.edges:
            if e.tail not in self._by_id or e.head not in self._by_id:
                raise TopologyError(f"edge {e.tail}->{e.head} references an unknown node")
            if e.tail == e.head:
                raise TopologyError(f"self-loop on node {e.tail}")
            if e.capacity < 0:
                raise TopologyError(f"edge {e.tail}->{e.head} has negative capacity")
            if (e.tail, e.head) in seen:
                raise TopologyError(f"duplicate edge {e.tail}->{e.head}")
            seen.add((e.tail, e.head))
        for e in self.routing_edges:
            if self._by_id[e.tail].kind == CU and len(self.cu_ids) == 1:
                raise TopologyError("the CU cannot have outgoing edges in a single-CU network")
        self._topo = self._topological_order()

    @property
    def ru_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.kind == RU)

    @property
    def cu_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.kind == CU)

    @property
    def routing_edges(self) -> tuple[Edge, ...]:
        """Edges except the inter-CU cooperation links."""
        return tuple(e for e in self.edges if not self.is_inter_cu(e))

    @property
    def inter_cu_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if self.is_inter_cu(e))

    def is_inter_cu(self, e: Edge) -> bool:
        return self._by_id[e.tail].kind == CU and self._by_id[e.head].kind == CU

    def node(self, node_id: int) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id}") from None

    def antennas(self, node_id: int) -> int:
        n = self.node(node_id)
        return 0 if n.kind == CU else n.antennas

    def topological_order(self) -> tuple[int, ...]:
        return self._topo

    def _topological_order(self):
        indeg = {n.id: 0 for n in self.nodes}
        succ = defaultdict(list)
        for e in self.routing_edges:
            indeg[e.head] += 1
            succ[e.tail].append(e.head)
        ready = [n.id for n in self.nodes if indeg[n.id] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in succ[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self.nodes):
            raise TopologyError("graph has a directed cycle")
        return tuple(order)

    def with_capacities(self, capacities: Mapping[tuple[int, int], float]) -> "Topology":
        edges = [Edge(e.tail, e.head, float(capacities.get((e.tail, e.head), e.capacity)))
                 for e in self.edges]
        return Topology(self.nodes, edges)

    def __repr__(self):
        return f"Topology({len(self.nodes)} nodes, {len(self.edges)} edges)"


@dataclass(frozen=True)
class RoutingPartition:
    layers: tuple[tuple[int, ...], ...]

    def __init__(self, layers: Sequence[Iterable[int]]):
        object.__setattr__(self, "layers", tuple(tuple(l) for l in layers))

    def layer_of(self) -> dict[int, int]:
        return {v: k for k, layer in enumerate(self.layers) for v in layer}

    def validate(self, topology: Topology):
        flat = [v for layer in self.layers for v in layer]
        if len(flat) != len(set(flat)):
            raise TopologyError("partition layers overlap")
        if set(flat) != {n.id for n in topology.nodes}:
            raise TopologyError("partition does not cover exactly the node set")
        if not self.layers:
            raise TopologyError("empty partition")
        last = set(self.layers[-1])
        for c in topology.cu_ids:
            if c not in last:
                raise TopologyError(f"CU {c} must be in the last layer")


@dataclass(frozen=True)
class ActiveEdgeSet:
    topology: Topology
    partition: RoutingPartition
    edges: tuple[Edge, ...]
    incoming: Mapping[int, tuple[int, ...]] = field(repr=False)
    outgoing: Mapping[int, tuple[int, ...]] = field(repr=False)
    sources: frozenset = field(repr=False)

    def __len__(self):
        return len(self.edges)

    def pairs(self) -> list[tuple[int, int]]:
        return [(e.tail, e.head) for e in self.edges]

    def index(self, tail: int, head: int) -> int:
        for k, e in enumerate(self.edges):
            if e.tail == tail and e.head == head:
                return k
        raise KeyError(f"edge {tail}->{head} is not active")

    @property
    def capacities(self) -> np.ndarray:
        return np.array([e.capacity for e in self.edges], dtype=float)

    def edge_topological_order(self) -> list[int]:
        """Active edge indices sorted by the topological position of their tail."""
        pos = {v: k for k, v in enumerate(self.topology.topological_order())}
        return sorted(range(len(self.edges)), key=lambda k: (pos[self.edges[k].tail], k))


def active_edges(topology: Topology, partition: RoutingPartition) -> ActiveEdgeSet:
    """Edges whose tail sits in a strictly earlier layer than their head."""
    partition.validate(topology)
    layer = partition.layer_of()
    act = tuple(e for e in topology.routing_edges if layer[e.tail] < layer[e.head])
    inc = {n.id: [] for n in topology.nodes}
    out = {n.id: [] for n in topology.nodes}
    for k, e in enumerate(act):
        inc[e.head].append(k)
        out[e.tail].append(k)
    sources = frozenset(v for v, lst in inc.items() if not lst)
    return ActiveEdgeSet(topology, partition, act,
                         {k: tuple(v) for k, v in inc.items()},
                         {k: tuple(v) for k, v in out.items()}, sources)


def longest_path_partition(topology: Topology) -> RoutingPartition:
    """Layering by longest distance from the sources; activates every edge.

    CUs are placed together in one final layer.
    """
    dist = {}
    for v in topology.topological_order():
        preds = [dist[e.tail] for e in topology.routing_edges if e.head == v]
        dist[v] = 1 + max(preds) if preds else 0
    cus = set(topology.cu_ids)
    top = max(dist.values()) + 1
    layers = defaultdict(list)
    for n in topology.nodes:
        layers[top if n.id in cus else dist[n.id]].append(n.id)
    return RoutingPartition([layers[k] for k in sorted(layers)])


def ascendants(active: ActiveEdgeSet, node: int) -> set[int]:
    """Nodes with a directed active path to ``node`` (excluding itself)."""
    active.topology.node(node)
    seen: set[int] = set()
    stack = [node]
    while stack:
        v = stack.pop()
        for k in active.incoming[v]:
            t = active.edges[k].tail
            if t not in seen:
                seen.add(t)
                stack.append(t)
    seen.discard(node)
    return seen


def depth(active: ActiveEdgeSet) -> tuple[int, dict[int, int]]:
    """Routing depth ``D`` and per-node longest path length to a CU.

    Nodes without any active edge take no part in the routing and are
    skipped.  A node that transmits but cannot reach a CU is an error.
    """
    topo = active.topology
    cus = set(topo.cu_ids)
    longest: dict[int, int | None] = {}
    for v in reversed(topo.topological_order()):
        if v in cus:
            longest[v] = 0
            continue
        best = None
        for k in active.outgoing[v]:
            h = longest[active.edges[k].head]
            if h is not None and (best is None or h + 1 > best):
                best = h + 1
        longest[v] = best
    per_node = {}
    for v in topo.topological_order():
        if v in cus:
            continue
        if not active.outgoing[v] and not active.incoming[v]:
            continue
        if longest[v] is None:
            raise UnreachableNodeError(f"node {v} has no active path to a CU")
        per_node[v] = longest[v]
    srcs = [per_node[v] for v in active.sources if v in per_node]
    if not srcs:
        raise UnreachableNodeError("no source node reaches a CU")
    return max(srcs), per_node


def effective_capacity(active: ActiveEdgeSet, delay: float | None = None) -> np.ndarray:
    """Per-active-edge capacity ``C_e * T / D`` (``T = D`` when omitted)."""
    D, _ = depth(active)
    T = float(D if delay is None else delay)
    if T <= 0:
        raise TopologyError("delay must be positive")
    return active.capacities * T / D


def signal_dimensions(active: ActiveEdgeSet, rank_limits: Mapping[int, int] | None = None):
    """Dimensions of the aggregated signals ``r_i`` and of every edge signal.

    Parameters
    ----------
    rank_limits : mapping active-edge index -> d_e, optional
        Edges without an entry carry the full dimension of their tail.

    Returns
    -------
    node_dims : dict node id -> d_i
    edge_dims : list of d_e in active-edge order
    """
    rank_limits = dict(rank_limits or {})
    topo = active.topology
    node_dims: dict[int, int] = {}
    edge_dims = [0] * len(active.edges)
    for v in topo.topological_order():
        d = topo.antennas(v) + sum(edge_dims[k] for k in active.incoming[v])
        node_dims[v] = d
        for k in active.outgoing[v]:
            de = rank_limits.get(k, d)
            if de > d or (de < 1 and d > 0):
                raise TopologyError(f"rank limit {de} on edge {k} outside [1, {d}]")
            edge_dims[k] = de
    return node_dims, edge_dims


def live_edges(active: ActiveEdgeSet, ceff: Sequence[float]) -> np.ndarray:
    """Mask of edges that have positive capacity and whose head still reaches a CU.

    Edges outside the mask cannot contribute to any CU's observation; the
    schemes give them an infinite (capped) quantization noise.
    """
    topo = active.topology
    cus = set(topo.cu_ids)
    alive = {c: True for c in cus}
    mask = np.zeros(len(active.edges), dtype=bool)
    for v in reversed(topo.topological_order()):
        if v in cus:
            continue
        ok = False
        for k in active.outgoing[v]:
            if ceff[k] > 0 and alive.get(active.edges[k].head, False):
                mask[k] = True
                ok = True
        alive[v] = ok
    return mask


def restrict_edges(active: ActiveEdgeSet, keep: Sequence[bool]) -> tuple[ActiveEdgeSet, np.ndarray]:
    """Active edge set reduced to the edges flagged in ``keep``.

    Returns the reduced set and the original index of each kept edge.
    """
    keep = np.asarray(keep, dtype=bool)
    idx = np.flatnonzero(keep)
    edges = tuple(active.edges[k] for k in idx)
    topo = active.topology
    inc = {n.id: [] for n in topo.nodes}
    out = {n.id: [] for n in topo.nodes}
    for k, e in enumerate(edges):
        inc[e.head].append(k)
        out[e.tail].append(k)
    sources = frozenset(v for v, lst in inc.items() if not lst)
    sub = ActiveEdgeSet(topo, active.partition, edges,
                        {k: tuple(v) for k, v in inc.items()},
                        {k: tuple(v) for k, v in out.items()}, sources)
    return sub, idx
