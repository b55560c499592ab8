"""Scenario files (TOML).

Example::

    [nodes]
    ru = [1, 2, 3, 4, 5, 6, 7]
    cu = [8]
    antennas = { 5 = 2 }        # optional, default 1
    relay_only = []             # RUs without antennas of their own

    [edges]
    edges = [[1, 5, 3.0], [2, 6, 3.0], [3, 7, 3.0], [4, 5, 3.0],
             [5, 8, 3.0], [6, 8, 0.0], [7, 8, 3.0]]    # tail, head, capacity
    delay = 2                   # optional; T = D when absent

    [partition]
    layers = [[1, 2, 3, 4], [5, 6, 7], [8]]    # optional

    [ms]
    ms_antennas = [1, 1, 1, 1]  # or an MS count
    p_tx_db = 0.0
    groups = { 8 = [0, 1, 2, 3] }              # CU -> decoded MSs, multi-CU only

    [schemes]
    schemes = ["MF", "DPR-opt"]

    [mc]
    trials = 100
    seed = 0
"""
from __future__ import annotations

import sys
from pathlib import Path

from .scenarios import Scenario, ScenarioError, db_to_linear
from .topology import CU, Edge, Node, RoutingPartition, Topology, TopologyError, longest_path_partition

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("nodes", "edges", "partition", "ms", "schemes", "mc")


class ConfigError(ValueError):
    pass


def _int_keys(table, what):
    try:
        return {int(k): v for k, v in dict(table).items()}
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: keys must be node ids") from None


def scenario_from_dict(cfg: dict) -> Scenario:
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    try:
        nodes_t, edges_t = cfg["nodes"], cfg["edges"]
        rus = [int(v) for v in nodes_t.get("ru", [])]
        cus = [int(v) for v in nodes_t["cu"]]
        ant = _int_keys(nodes_t.get("antennas", {}), "antennas")
        relay = {int(v) for v in nodes_t.get("relay_only", [])}
        nodes = [Node(i, antennas=int(ant.get(i, 1)), relay_only=i in relay) for i in rus]
        nodes += [Node(c, CU) for c in cus]
        edges = []
        for row in edges_t["edges"]:
            if len(row) != 3:
                raise ConfigError(f"edge {row!r} must be [tail, head, capacity]")
            edges.append(Edge(int(row[0]), int(row[1]), float(row[2])))
        topo = Topology(nodes, edges)
        layers = cfg.get("partition", {}).get("layers")
        part = RoutingPartition(layers) if layers is not None else longest_path_partition(topo)
        ms = cfg.get("ms", {})
        ms_ant = ms.get("ms_antennas", 1)
        ms_ant = (1,) * int(ms_ant) if isinstance(ms_ant, int) else tuple(int(v) for v in ms_ant)
        if "p_tx_db" in ms and "p_tx" in ms:
            raise ConfigError("give either p_tx_db or p_tx")
        p_tx = db_to_linear(ms["p_tx_db"]) if "p_tx_db" in ms else float(ms.get("p_tx", 1.0))
        groups = ms.get("groups")
        if groups is not None:
            groups = {c: tuple(int(m) for m in v) for c, v in _int_keys(groups, "groups").items()}
        schemes = tuple(cfg.get("schemes", {}).get("schemes", ("MF", "DPR-opt")))
        mc = cfg.get("mc", {})
        delay = edges_t.get("delay")
        return Scenario(topo, part, ms_ant, p_tx, schemes, int(mc.get("trials", 1)), int(mc.get("seed", 0)),
                        None if delay is None else float(delay), groups, {"kind": "config"})
    except KeyError as err:
        raise ConfigError(f"missing key {err}") from None
    except (TopologyError, ScenarioError) as err:
        raise ConfigError(str(err)) from err


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return scenario_from_dict(cfg)


SWEEPABLE = ("capacity", "p_tx_db", "delay", "trials", "seed", "inter_cu_capacity")


def apply_param(scenario: Scenario, name: str, value) -> Scenario:
    """Copy of ``scenario`` with one parameter changed.

    ``capacity`` sets every routing edge that has positive capacity (so
    deactivated edges stay off); ``inter_cu_capacity`` sets the CU-to-CU
    links; ``edge:T-H`` sets one edge.
    """
    topo = scenario.topology
    if name == "capacity":
        caps = {(e.tail, e.head): float(value) for e in topo.routing_edges if e.capacity > 0}
        return scenario.with_(topology=topo.with_capacities(caps))
    if name == "inter_cu_capacity":
        caps = {(e.tail, e.head): float(value) for e in topo.inter_cu_edges}
        return scenario.with_(topology=topo.with_capacities(caps))
    if name.startswith("edge:"):
        try:
            t, h = (int(v) for v in name[5:].split("-"))
        except ValueError:
            raise ConfigError(f"bad edge parameter {name!r}; use edge:TAIL-HEAD") from None
        if not any(e.tail == t and e.head == h for e in topo.edges):
            raise ConfigError(f"no edge {t}->{h}")
        return scenario.with_(topology=topo.with_capacities({(t, h): float(value)}))
    if name == "p_tx_db":
        return scenario.with_(p_tx=db_to_linear(float(value)))
    if name == "delay":
        return scenario.with_(delay=float(value))
    if name in ("trials", "seed"):
        return scenario.with_(**{name: int(value)})
    raise ConfigError(f"cannot sweep {name!r}; choose from {SWEEPABLE} or edge:TAIL-HEAD")
