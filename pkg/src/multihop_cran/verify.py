"""Invariant and property checks with independent reference computations.

The references here do not share code with the models they check: the
transfer matrices are compared with node-by-node propagation, the
water-filling solution with a generic constrained optimizer on the
per-eigendirection problem, and the side-information covariances with
sample covariances of propagated signals.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .channel import complex_gaussian, from_matrices, sample_channel
from .common import MMOptions
from .decentralized import EffectiveChannel, sideinfo_covariances, waterfill_ff
from .dpr import DprConfig, dpr_backhaul_rates, dpr_sum_rate, identity_transform, transfer_matrices
from .linalg import LN2, eig_hermitian_desc, hermitian, inv_sqrtm_pd
from .scenarios import cutset_upper_bound, hierarchical_scenario, run_scheme
from .topology import CU, ActiveEdgeSet, Edge, Node, RoutingPartition, Topology, active_edges


# ---------------------------------------------------------------- random instances

def random_dag(rng: np.random.Generator, max_nodes: int = 8, max_antennas: int = 2,
               n_cus: int = 1) -> ActiveEdgeSet:
    """Random layered network with every RU routed to a CU.

    Besides edges between layers it adds a few edges inside a layer,
    which the routing partition leaves inactive.
    """
    n = int(rng.integers(n_cus + 2, max_nodes + 1))
    n_ru = n - n_cus
    n_layers = int(rng.integers(1, min(n_ru, 3) + 1))
    layer = {i: int(rng.integers(0, n_layers)) for i in range(1, n_ru + 1)}
    cus = list(range(n_ru + 1, n + 1))
    for c in cus:
        layer[c] = n_layers
    nodes = [Node(i, antennas=int(rng.integers(0, max_antennas + 1))) for i in range(1, n_ru + 1)]
    if all(nd.antennas == 0 for nd in nodes):
        nodes[0] = Node(1, antennas=1)
    nodes += [Node(c, CU) for c in cus]
    edges = set()
    for i in range(1, n_ru + 1):
        for j in range(1, n + 1):
            if j in cus:
                continue
            if layer[i] < layer[j] and rng.random() < 0.4:
                edges.add((i, j))
            elif layer[i] == layer[j] and i < j and rng.random() < 0.15:
                edges.add((i, j))
        # every RU needs an onward edge
        if not any(t == i and layer[h] > layer[i] for t, h in edges):
            later = [j for j in range(1, n_ru + 1) if layer[j] > layer[i]]
            target = int(rng.choice(later)) if later and rng.random() < 0.5 else int(rng.choice(cus))
            edges.add((i, target))
        for c in cus:
            if layer[i] == n_layers - 1 and rng.random() < 0.5:
                edges.add((i, c))
    topo = Topology(nodes, [Edge(t, h, float(rng.uniform(0.5, 3.0))) for t, h in sorted(edges)])
    layers = [[i for i in range(1, n_ru + 1) if layer[i] == k] for k in range(n_layers)]
    layers = [lst for lst in layers if lst] + [cus]
    return active_edges(topo, RoutingPartition(layers))


def random_psd(rng: np.random.Generator, d: int, floor: float = 0.1) -> np.ndarray:
    A = complex_gaussian(rng, (d, d))
    return hermitian(A @ A.conj().T / max(d, 1) + floor * np.eye(d))


def random_maps(rng: np.random.Generator, active: ActiveEdgeSet, square: bool = False) -> list:
    """Random ``L_e`` of random (or full, with ``square``) row count."""
    topo = active.topology
    dims = {}
    L = [None] * len(active.edges)
    for v in topo.topological_order():
        d = topo.antennas(v) + sum(L[k].shape[0] for k in active.incoming[v])
        dims[v] = d
        for k in active.outgoing[v]:
            rows = d if square or d == 0 else int(rng.integers(1, d + 1))
            L[k] = complex_gaussian(rng, (rows, d))
    return L


# ---------------------------------------------------------------- references

def propagate(active: ActiveEdgeSet, L, y: dict, q: list) -> np.ndarray:
    """Signal at the CUs by direct node-by-node evaluation.

    ``y`` maps RU id to its received vector, ``q`` holds one noise vector
    per active edge.  Returns the CUs' incoming edge signals stacked in CU
    order, then incoming-edge order.
    """
    topo = active.topology
    u = [None] * len(active.edges)
    for v in topo.topological_order():
        parts = [np.asarray(y[v])] if topo.antennas(v) else []
        parts += [u[k] for k in active.incoming[v]]
        r = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
        for k in active.outgoing[v]:
            u[k] = L[k] @ r + q[k]
    out = [u[k] for c in topo.cu_ids for k in active.incoming[c]]
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def transfer_error(active: ActiveEdgeSet, L, rng: np.random.Generator, draws: int = 100) -> float:
    """Largest deviation between ``T y + Tt q`` and :func:`propagate`."""
    tm = transfer_matrices(active, L)
    topo = active.topology
    worst = 0.0
    for _ in range(draws):
        y = {i: complex_gaussian(rng, topo.antennas(i)) for i in topo.ru_ids}
        q = [complex_gaussian(rng, l.shape[0]) for l in L]
        ys = np.concatenate([y[i] for i in topo.ru_ids]) if topo.ru_ids else np.zeros(0)
        qs = np.concatenate(q) if q else np.zeros(0)
        direct = propagate(active, L, y, q)
        model = tm.T @ ys + tm.Tt @ qs
        scale = max(1.0, float(np.max(np.abs(direct), initial=0.0)))
        worst = max(worst, float(np.max(np.abs(direct - model), initial=0.0)) / scale)
    return worst


def waterfill_reference(eff: EffectiveChannel, sigma_x, capacity: float) -> float:
    """Optimal ``I(x; u)`` in bits from a generic constrained solver.

    In the whitened eigenbasis of the effective channel, with ``b_j`` the
    rate spent on direction ``j`` (eigenvalue ``l_j >= 1``), the problem is
    ``max sum b_j - log(1 + (exp(b_j) - 1) / l_j)`` subject to
    ``sum b_j <= C`` and ``b_j >= 0``: a concave objective over a simplex,
    solved with SLSQP.
    """
    Sn = hermitian(eff.noise)
    W = inv_sqrtm_pd(Sn)
    Ss = hermitian(eff.H @ np.atleast_2d(sigma_x) @ eff.H.conj().T)
    lam, _ = eig_hermitian_desc(hermitian(W @ Ss @ W) + np.eye(Sn.shape[0]))
    lam = np.maximum(lam, 1.0 + 1e-300)
    c = capacity * LN2

    def f(b):
        return -float(np.sum(b - np.log1p(np.expm1(b) / lam)))

    def g(b):
        return -(lam - 1.0) / (lam - 1.0 + np.exp(b))

    cons = {"type": "ineq", "fun": lambda b: c - float(np.sum(b)), "jac": lambda b: -np.ones_like(b)}
    res = minimize(f, np.full(lam.size, c / lam.size), jac=g, method="SLSQP",
                   bounds=[(0.0, c)] * lam.size, constraints=[cons], options={"ftol": 1e-15, "maxiter": 1000})
    b = np.clip(res.x, 0.0, None)
    b *= min(1.0, c / max(float(np.sum(b)), 1e-300))
    return -f(b) / LN2


def sample_sideinfo(node: int, side_edges, active: ActiveEdgeSet, omegas: dict, ch, n: int,
                    rng: np.random.Generator):
    """Sample versions of ``(Cov(x, v), Cov(n_node, v), Cov(v))``.

    Draws ``x``, the receiver noise and the quantization noises, propagates
    them through the network with ``L = I`` and forms sample covariances;
    ``n_node`` is ``r_node`` minus its noiseless part.
    """
    topo = active.topology
    L = [np.eye(np.shape(omegas[k])[0], dtype=complex) for k in range(len(active.edges))]
    nx = ch.sigma_x.shape[0]
    X = np.linalg.cholesky(ch.sigma_x) @ complex_gaussian(rng, (nx, n))
    Z = {i: complex_gaussian(rng, (topo.antennas(i), n)) for i in topo.ru_ids}
    Q = [np.linalg.cholesky(hermitian(omegas[k]) + 1e-300 * np.eye(L[k].shape[0])) @
         complex_gaussian(rng, (L[k].shape[0], n)) for k in range(len(L))]

    def run(with_x: bool, with_noise: bool):
        u = [None] * len(active.edges)
        r_node = None
        for v in topo.topological_order():
            parts = []
            if topo.antennas(v):
                s = ch.block(v) @ X if with_x else np.zeros((topo.antennas(v), n), dtype=complex)
                parts.append(s + Z[v] if with_noise else s)
            parts += [u[k] for k in active.incoming[v]]
            r = np.vstack(parts) if parts else np.zeros((0, n), dtype=complex)
            if v == node:
                r_node = r
            for k in active.outgoing[v]:
                u[k] = L[k] @ r + (Q[k] if with_noise else 0.0)
        return r_node, u

    r_full, u_full = run(True, True)
    r_sig, _ = run(True, False)
    noise = r_full - r_sig
    V = np.vstack([u_full[k] for k in side_edges]) if side_edges else np.zeros((0, n), dtype=complex)
    return X @ V.conj().T / n, noise @ V.conj().T / n, V @ V.conj().T / n


def relative_error(A, B) -> float:
    A, B = np.asarray(A), np.asarray(B)
    ref = np.linalg.norm(B)
    if ref == 0:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A - B) / ref)


# ---------------------------------------------------------------- checks

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def check_transfer(n_topologies: int = 20, draws: int = 20, seed: int = 0, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    worst = max(transfer_error(a, random_maps(rng, a), rng, draws)
                for a in (random_dag(rng) for _ in range(n_topologies)))
    return worst < tol, f"max deviation {worst:.2e} (tol {tol:g})"


def _random_dpr_instance(rng):
    active = random_dag(rng, max_nodes=7)
    L = random_maps(rng, active, square=True)
    omegas = [random_psd(rng, l.shape[0]) for l in L]
    topo = active.topology
    nx = int(rng.integers(1, 4))
    ch = from_matrices(topo.ru_ids, [complex_gaussian(rng, (topo.antennas(i), nx)) for i in topo.ru_ids],
                       np.eye(nx) * float(rng.uniform(0.5, 3.0)))
    return DprConfig(active, L, omegas), ch


def check_identity_transform(n: int = 20, seed: int = 1, tol: float = 1e-8):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        cfg, ch = _random_dpr_instance(rng)
        if not cfg.omegas:
            continue
        new = identity_transform(cfg)
        worst = max(worst, abs(dpr_sum_rate(new, ch) - dpr_sum_rate(cfg, ch)),
                    float(np.max(np.abs(dpr_backhaul_rates(new, ch) - dpr_backhaul_rates(cfg, ch)))))
    return worst < tol, f"max rate change {worst:.2e} (tol {tol:g})"


def random_effective_channel(rng: np.random.Generator):
    d = int(rng.integers(1, 5))
    nx = int(rng.integers(1, 5))
    p = float(10 ** rng.uniform(-1, 1.5))
    H = complex_gaussian(rng, (d, nx))
    return EffectiveChannel(H, random_psd(rng, d, floor=0.5)), p * np.eye(nx), float(rng.uniform(0.2, 6.0))


def waterfill_deviation(eff, Sx, C) -> tuple[float, float]:
    """``(|I(r; u) - C|, |I(x; u) - reference|)`` for the water-filling solution."""
    from .linalg import logdet
    om = waterfill_ff(eff, Sx, C)
    Sn = hermitian(eff.noise)
    Sr = hermitian(eff.H @ Sx @ eff.H.conj().T + Sn)
    rate = logdet(Sr + om) - logdet(om)
    obj = logdet(Sr + om) - logdet(Sn + om)
    return abs(rate - C), abs(obj - waterfill_reference(eff, Sx, C))


def check_waterfill(n: int = 20, seed: int = 2):
    rng = np.random.default_rng(seed)
    dev = np.array([waterfill_deviation(*random_effective_channel(rng)) for _ in range(n)])
    ok = dev[:, 0].max() < 1e-6 and dev[:, 1].max() < 1e-4
    return ok, f"max |rate - C| {dev[:, 0].max():.2e}, max objective gap {dev[:, 1].max():.2e}"


def check_schemes(seed: int = 3):
    """MM monotone and feasible, and every rate below the cut-set bound."""
    sc = hierarchical_scenario(3, 1.5, 3, 0.0, schemes=("MF", "DPR-opt", "DPR-rank-1", "DPR-not-opt",
                                                        "DPR-dec-FF", "DPR-dec-FF-FB", "DPR-dec-SI"))
    ch = sc.channel(seed)
    opts = MMOptions(max_iter=20)
    ub = cutset_upper_bound(sc, ch, opts)
    msgs, ok = [], True
    for s in sc.schemes:
        o = run_scheme(s, sc, ch, opts)
        good = o.monotone and o.residual < 1e-6 and o.sum_rate <= ub + 1e-6
        ok &= good
        if not good:
            msgs.append(f"{s}: rate {o.sum_rate:.6f} residual {o.residual:.1e} monotone {o.monotone}")
    return ok, "; ".join(msgs) or f"{len(sc.schemes)} schemes under bound {ub:.4f}"


def check_determinism(seed: int = 4):
    sc = hierarchical_scenario(3, 1.0, 2, 0.0)
    a = run_scheme("DPR-opt", sc, sample_channel(sc.topology, sc.ms_antennas, seed, sc.p_tx)).sum_rate
    b = run_scheme("DPR-opt", sc, sample_channel(sc.topology, sc.ms_antennas, seed, sc.p_tx)).sum_rate
    return a == b, f"rates {a!r} and {b!r}"


def check_sideinfo(n_topologies: int = 3, samples: int = 200_000, seed: int = 5, tol: float = 0.02):
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_topologies:
        active = random_dag(rng, max_nodes=6)
        topo = active.topology
        cands = [v for v in topo.ru_ids if active.outgoing[v]]
        if not cands:
            continue
        node = int(rng.choice(cands))
        head = active.edges[active.outgoing[node][0]].head
        side = [k for k in active.incoming[head] if active.edges[k].tail != node]
        if not side:
            side = [k for k in range(len(active.edges)) if active.edges[k].tail != node][:1]
        if not side:
            continue
        nx = int(rng.integers(1, 4))
        ch = from_matrices(topo.ru_ids, [complex_gaussian(rng, (topo.antennas(i), nx)) for i in topo.ru_ids],
                           np.eye(nx))
        dims = transfer_matrices(active).node_dims
        omegas = {k: random_psd(rng, dims[e.tail]) for k, e in enumerate(active.edges)}
        model = sideinfo_covariances(node, side, active, omegas, ch)
        sample = sample_sideinfo(node, side, active, omegas, ch, samples, rng)
        worst = max(worst, *(relative_error(s, m) for s, m in zip(sample, model)
                             if np.linalg.norm(m) > 1e-12))
        done += 1
    return worst < tol, f"max relative error {worst:.3%} (tol {tol:.0%})"


CHECKS: dict[str, Callable] = {
    "transfer matrices vs propagation": check_transfer,
    "identity transform keeps rates": check_identity_transform,
    "water-filling vs generic solver": check_waterfill,
    "schemes monotone, feasible, bounded": check_schemes,
    "seeded determinism": check_determinism,
    "side-information covariances vs sampling": check_sideinfo,
}


def run_checks(printer=print) -> list:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:
            ok, detail = False, f"{type(err).__name__}: {err}"
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
        printer(res.line())
        out.append(res)
    return out
