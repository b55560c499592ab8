"""Decompress-Process-and-Recompress: every node stacks its own signal with
the signals it receives, applies a linear map and recompresses the result
for each outgoing edge.

Signals are stacked in a fixed layout: ``y`` over the RUs in topology
order, and the edge signals ``u`` and noises ``q`` over the active edges in
declaration order.  The aggregated signal of node ``i`` is
``r_i = [y_i; u_e for e in incoming(i)]`` and edge ``e`` carries
``u_e = L_e r_tail(e) + q_e``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, received_covariance
from .common import MMOptions, OptimizationRecord, embedding, maximize, noise_cap
from .linalg import LN2, ShapeError, SingularMatrixError, block_diag, hermitian, logdet
from .solver import (INFEASIBLE, OK, Constraint, Linear, LogDetProgram, LogDetTerm, MatrixVar, Point,
                     feasible_init, minorize_maximize)
from .topology import ActiveEdgeSet, TopologyError, live_edges, restrict_edges, signal_dimensions

REG = 1e-12


@dataclass(frozen=True)
class TransferMatrices:
    """``r_CU = T y + Tt q`` together with the edge-level maps.

    ``A`` and ``B`` give every edge signal, ``u = A y + B q``.
    """

    T: np.ndarray
    Tt: np.ndarray
    C: np.ndarray
    F: np.ndarray
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    y_slices: dict
    edge_slices: list
    node_dims: dict

    def node_maps(self, active: ActiveEdgeSet, node: int):
        """``(Ky, Kq)`` with ``r_node = Ky y + Kq q``."""
        ny, nq = self.A.shape[1], self.B.shape[1]
        rows_y, rows_q = [], []
        if node in self.y_slices:
            s = self.y_slices[node]
            P = np.zeros((s.stop - s.start, ny), dtype=complex)
            P[:, s] = np.eye(s.stop - s.start)
            rows_y.append(P)
            rows_q.append(np.zeros((s.stop - s.start, nq), dtype=complex))
        for k in active.incoming[node]:
            s = self.edge_slices[k]
            rows_y.append(self.A[s])
            rows_q.append(self.B[s])
        if not rows_y:
            return np.zeros((0, ny), dtype=complex), np.zeros((0, nq), dtype=complex)
        return np.vstack(rows_y), np.vstack(rows_q)


def _y_layout(active: ActiveEdgeSet, antennas=None):
    topo = active.topology
    out, r = {}, 0
    for i in topo.ru_ids:
        n = topo.antennas(i) if antennas is None else int(antennas[i])
        out[i] = slice(r, r + n)
        r += n
    return out, r


def identity_maps(active: ActiveEdgeSet, antennas=None) -> list:
    """``L_e = I`` for every active edge."""
    node_dims, edge_dims = _dims(active, None, antennas)
    return [np.eye(d, dtype=complex) for d in edge_dims]


def _dims(active, L, antennas):
    topo = active.topology
    ant = (lambda v: topo.antennas(v)) if antennas is None else (lambda v: int(antennas.get(v, 0)))
    node_dims, edge_dims = {}, [0] * len(active.edges)
    for v in topo.topological_order():
        d = ant(v) + sum(edge_dims[k] for k in active.incoming[v])
        node_dims[v] = d
        for k in active.outgoing[v]:
            if L is None:
                edge_dims[k] = d
            else:
                if L[k].shape[1] != d:
                    raise ShapeError(f"L for edge {k} has {L[k].shape[1]} columns, tail signal has {d}")
                edge_dims[k] = L[k].shape[0]
    return node_dims, edge_dims


def transfer_matrices(active: ActiveEdgeSet, L=None, antennas=None) -> TransferMatrices:
    """Assemble the selector ``C``, edge coupling ``F`` and input ``E`` matrices.

    Parameters
    ----------
    L : list of per-edge matrices in active-edge order (identity if omitted)
    antennas : optional mapping node -> antenna count (topology values otherwise)
    """
    topo = active.topology
    if L is None:
        L = identity_maps(active, antennas)
    L = [np.atleast_2d(np.asarray(m, dtype=complex)) for m in L]
    if len(L) != len(active.edges):
        raise ShapeError("one L matrix per active edge is required")
    node_dims, edge_dims = _dims(active, L, antennas)
    y_sl, ny = _y_layout(active, antennas)
    offs = np.concatenate([[0], np.cumsum(edge_dims)]).astype(int)
    e_sl = [slice(offs[k], offs[k + 1]) for k in range(len(edge_dims))]
    nq = int(offs[-1])
    F = np.zeros((nq, nq), dtype=complex)
    E = np.zeros((nq, ny), dtype=complex)
    for k, e in enumerate(active.edges):
        i = e.tail
        c = 0
        if i in y_sl:
            n = y_sl[i].stop - y_sl[i].start
            E[e_sl[k], y_sl[i]] = L[k][:, :n]
            c = n
        for kp in active.incoming[i]:
            d = edge_dims[kp]
            F[e_sl[k], e_sl[kp]] = L[k][:, c:c + d]
            c += d
    # F is nilpotent (edges only feed later edges), so I - F is invertible
    B = np.linalg.inv(np.eye(nq) - F) if nq else np.zeros((0, 0), dtype=complex)
    A = B @ E
    cu_in = [k for c in topo.cu_ids for k in active.incoming[c]]
    C = np.zeros((sum(edge_dims[k] for k in cu_in), nq), dtype=complex)
    r = 0
    for k in cu_in:
        d = edge_dims[k]
        C[r:r + d, e_sl[k]] = np.eye(d)
        r += d
    return TransferMatrices(C @ A, C @ B, C, F, E, A, B, y_sl, e_sl, node_dims)


@dataclass
class DprConfig:
    """Per-edge linear maps and quantization covariances on an active edge set."""

    active: ActiveEdgeSet
    L: list
    omegas: list

    def __post_init__(self):
        if len(self.L) != len(self.active.edges) or len(self.omegas) != len(self.active.edges):
            raise ShapeError("one L and one omega per active edge are required")
        for k, (l, om) in enumerate(zip(self.L, self.omegas)):
            if om.shape != (l.shape[0], l.shape[0]):
                raise ShapeError(f"omega for edge {k} has shape {om.shape}, expected {(l.shape[0],) * 2}")

    @property
    def edge_dims(self) -> list:
        return [l.shape[0] for l in self.L]

    def omega(self) -> np.ndarray:
        return block_diag(self.omegas) if self.omegas else np.zeros((0, 0), dtype=complex)


def _check_channel(ch: ChannelRealization, active: ActiveEdgeSet):
    if tuple(ch.ru_ids) != tuple(active.topology.ru_ids):
        raise ShapeError("channel RU order differs from the topology")


def dpr_sum_rate(config: DprConfig, ch: ChannelRealization) -> float:
    """``I(x; r_CU)`` in bits."""
    _check_channel(ch, config.active)
    tm = transfer_matrices(config.active, config.L)
    T, Tt = tm.T, tm.Tt
    if T.shape[0] == 0:
        return 0.0
    H = ch.H
    noise = hermitian(T @ T.conj().T + Tt @ config.omega() @ Tt.conj().T) + REG * np.eye(T.shape[0])
    sig = hermitian(T @ H @ ch.sigma_x @ H.conj().T @ T.conj().T)
    return logdet(sig + noise) - logdet(noise)


def aggregated_covariance(config: DprConfig, ch: ChannelRealization, node: int,
                          tm: TransferMatrices | None = None) -> np.ndarray:
    """Covariance of the stacked signal ``r_node``."""
    tm = tm or transfer_matrices(config.active, config.L)
    Ky, Kq = tm.node_maps(config.active, node)
    Sy = received_covariance(ch)
    return hermitian(Ky @ Sy @ Ky.conj().T + Kq @ config.omega() @ Kq.conj().T)


def dpr_backhaul_rate(edge: int, config: DprConfig, ch: ChannelRealization,
                      tm: TransferMatrices | None = None) -> float:
    """``I(r_tail; u_e)`` in bits for active edge index ``edge``."""
    _check_channel(ch, config.active)
    e = config.active.edges[edge]
    Sr = aggregated_covariance(config, ch, e.tail, tm)
    Le, Om = config.L[edge], hermitian(config.omegas[edge])
    return logdet(Om + Le @ Sr @ Le.conj().T) - logdet(Om)


def dpr_backhaul_rates(config: DprConfig, ch: ChannelRealization) -> np.ndarray:
    tm = transfer_matrices(config.active, config.L)
    return np.array([dpr_backhaul_rate(k, config, ch, tm) for k in range(len(config.active.edges))])


# ---------------------------------------------------------------- identity transform

def identity_transform(config: DprConfig, cond_limit: float = 1e8, perturb: float = 1e-9,
                       rng: np.random.Generator | None = None) -> DprConfig:
    """Equivalent configuration with every ``L_e = I``.

    ``Omega_e'' = G_e Omega_e G_e^H`` with ``G_e = diag(I, G_in...) L_e^{-1}``,
    where the block-diagonal factor holds an identity for the tail's own
    antennas and the ``G`` of each incoming edge.  Maps with condition
    number above ``cond_limit`` are perturbed slightly first.
    """
    active = config.active
    topo = active.topology
    G = [None] * len(active.edges)
    rng = rng or np.random.default_rng(0)
    for k in active.edge_topological_order():
        Lk = np.asarray(config.L[k], dtype=complex)
        if Lk.shape[0] != Lk.shape[1]:
            raise ShapeError(f"L for edge {k} is not square; the identity transform needs full rank")
        if Lk.size == 0:
            G[k] = np.zeros((0, 0), dtype=complex)
            continue
        if np.linalg.cond(Lk) > cond_limit:
            Lk = Lk + perturb * np.linalg.norm(Lk, 2) * (rng.standard_normal(Lk.shape)
                                                      + 1j * rng.standard_normal(Lk.shape))
        tail = active.edges[k].tail
        blocks = [np.eye(topo.antennas(tail), dtype=complex)] if topo.antennas(tail) else []
        blocks += [G[kp] for kp in active.incoming[tail]]
        D = block_diag(blocks)
        G[k] = D @ np.linalg.inv(Lk)
    omegas = [hermitian(g @ om @ g.conj().T) for g, om in zip(G, config.omegas)]
    L = [np.eye(om.shape[0], dtype=complex) for om in omegas]
    return DprConfig(active, L, omegas)


# ---------------------------------------------------------------- optimization

@dataclass
class DprSolution:
    """Optimized configuration.

    ``config`` lives on the edges that can carry information (positive
    capacity and a path to a CU); ``dropped`` lists the original indices
    of the other active edges, which carry nothing (infinite noise).
    """

    config: DprConfig
    sum_rate: float
    record: OptimizationRecord = field(default_factory=OptimizationRecord)
    kept: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    backhaul_rates: np.ndarray | None = None

    def full_config(self, active: ActiveEdgeSet, ch: ChannelRealization) -> DprConfig:
        """Configuration on the complete active set, dropped edges at the noise cap.

        Only meaningful with identity maps, since the kept edges' maps
        change shape when upstream edges are removed.
        """
        L = identity_maps(active)
        om = []
        keep = {int(o): k for k, o in enumerate(self.kept)}
        for k, l in enumerate(L):
            d = l.shape[0]
            if k in keep and self.config.omegas[keep[k]].shape[0] == d:
                om.append(self.config.omegas[keep[k]])
            else:
                om.append(noise_cap(received_covariance(ch)) * np.eye(d, dtype=complex))
        return DprConfig(active, L, om)


@dataclass
class _Decoder:
    """A receiver observing ``P y + Q q``: rate ``logdet(sig + Q Om Q^H) - logdet(noise + Q Om Q^H)``."""

    sig: np.ndarray
    noise: np.ndarray
    Q: np.ndarray


@dataclass
class _EdgeRate:
    """Backhaul constraint ``logdet(psi + Om_k + G Om G^H) - logdet Om_k <= bound``."""

    edge: int
    psi: np.ndarray
    G: np.ndarray
    bound: float


def _scale(M) -> float:
    return max(1.0, float(np.linalg.norm(M, 2))) if M.size else 1.0


def _used(M, slices) -> list:
    return [k for k, s in enumerate(slices) if np.any(M[:, s] != 0)]


class _CompressionModel:
    """Log-det program over the edge noise covariances of a compression network.

    The variables are either the covariances ``Omega_e`` themselves or,
    when every constraint's ``psi`` is well conditioned, the precisions
    ``Theta_e = inv(Omega_e)``.  With
    ``logdet(N + G Om G^H) = logdet N + logdet Om + logdet(Theta + G^H N^-1 G)``
    each rate is a difference of concave functions of ``Theta`` and each
    backhaul rate is ``logdet(Theta_e,up + K_e) - sum_upstream logdet Theta_u``
    plus a constant.  Discarding a dimension is then the finite point
    ``Theta = 0``, which MM reaches far faster than ``Omega = cap``.  The
    precision form needs every ``psi`` and decoder noise well conditioned.
    """

    COND_LIMIT = 1e10

    def __init__(self, dims, slices, decoders, edges, cap: float, init_order=None, precision=None,
                 decoder_floor: float = 0.0):
        self.dims, self.slices, self.cap = list(dims), list(slices), cap
        if decoder_floor > 0:
            decoders = [_Decoder(d.sig + decoder_floor * _scale(d.noise) * np.eye(d.sig.shape[0]),
                                 d.noise + decoder_floor * _scale(d.noise) * np.eye(d.sig.shape[0]), d.Q)
                        for d in decoders]
        if precision is None:
            precision = (all(self._well_conditioned(e.psi) for e in edges)
                         and all(self._well_conditioned(d.noise) for d in decoders))
        self.precision = precision
        build = self._precision_terms if precision else self._covariance_terms
        obj, lin, cons = build(decoders, edges)
        vcap = 1e16 / cap if precision else cap
        name = "precision" if precision else "omega"
        variables = [MatrixVar(d, vcap, f"{name}_{k}") for k, d in enumerate(self.dims)]
        self.program = LogDetProgram(variables, 0, obj, lin, cons, init_order=init_order)

    def _well_conditioned(self, psi) -> bool:
        if not psi.size:
            return False
        w = np.linalg.eigvalsh(hermitian(psi))
        return w.min() > w.max() / self.COND_LIMIT

    def _maps(self, M, ks=None):
        ks = _used(M, self.slices) if ks is None else ks
        return [(k, M[:, self.slices[k]], 1.0) for k in ks]

    def _covariance_terms(self, decoders, edges):
        obj = []
        for dec in decoders:
            maps = self._maps(dec.Q)
            obj += [LogDetTerm(dec.sig, maps, 1.0), LogDetTerm(dec.noise, maps, -1.0)]
        cons = []
        for e in edges:
            d = self.dims[e.edge]
            I = np.eye(d, dtype=complex)
            cons.append(Constraint([LogDetTerm(e.psi, [(e.edge, I, 1.0)] + self._maps(e.G), 1.0),
                                    LogDetTerm(np.zeros((d, d)), [(e.edge, I, 1.0)], -1.0)],
                                   Linear(), float(e.bound), f"edge_{e.edge}"))
        return obj, Linear(), cons

    def _stack(self, ks):
        sizes = [self.dims[k] for k in ks]
        starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        n = int(starts[-1])
        return [(k, embedding(n, sz, st), 1.0) for k, sz, st in zip(ks, sizes, starts)]

    def _precision_terms(self, decoders, edges):
        obj, const = [], 0.0
        for dec in decoders:
            ks = _used(dec.Q, self.slices)
            const += logdet(dec.sig) - logdet(dec.noise)
            if not ks:
                continue
            Qs = np.hstack([dec.Q[:, self.slices[k]] for k in ks])
            Ks = hermitian(Qs.conj().T @ np.linalg.solve(dec.sig, Qs))
            Kn = hermitian(Qs.conj().T @ np.linalg.solve(dec.noise, Qs))
            maps = self._stack(ks)
            obj += [LogDetTerm(Ks, maps, 1.0), LogDetTerm(Kn, maps, -1.0)]
        cons = []
        for e in edges:
            up = [u for u in _used(e.G, self.slices) if u != e.edge]
            Gs = np.hstack([np.eye(self.dims[e.edge], dtype=complex)] + [e.G[:, self.slices[u]] for u in up])
            K = hermitian(Gs.conj().T @ np.linalg.solve(e.psi, Gs))
            terms = [LogDetTerm(K, self._stack([e.edge] + up), 1.0)]
            terms += [LogDetTerm(np.zeros((self.dims[u],) * 2), [(u, np.eye(self.dims[u]), 1.0)], -1.0) for u in up]
            cons.append(Constraint(terms, Linear(logdet(e.psi)), float(e.bound), f"edge_{e.edge}"))
        return obj, Linear(const), cons

    def to_point(self, omegas) -> Point:
        mats = [hermitian(np.asarray(o, dtype=complex)) for o in omegas]
        if self.precision:
            mats = [hermitian(np.linalg.inv(m)) for m in mats]
        return Point(mats, np.zeros(0))

    def omegas(self, x: Point) -> list:
        if self.precision:
            return [precision_to_noise(X, self.cap) for X in x.mats]
        return [hermitian(X) for X in x.mats]


def precision_to_noise(theta, cap: float) -> np.ndarray:
    """``inv(Theta)`` with eigenvalues clipped to ``cap``."""
    w, V = np.linalg.eigh(hermitian(theta))
    w = np.minimum(1.0 / np.maximum(w, 1.0 / cap), cap)
    return hermitian((V * w) @ V.conj().T)


class _DprModel(_CompressionModel):
    """The DPR program for fixed maps ``L`` on a single-CU active set."""

    def __init__(self, ch: ChannelRealization, active: ActiveEdgeSet, ceff, L=None, precision=None):
        self.ch, self.active = ch, active
        self.ceff = np.asarray(ceff, dtype=float)
        self.tm = tm = transfer_matrices(active, L)
        self.L = [np.eye(d, dtype=complex) for d in _dims(active, None, None)[1]] if L is None else list(L)
        Sy = received_covariance(ch)
        T, Tt = tm.T, tm.Tt
        self.m = m = T.shape[0]
        decoders = []
        if m:
            decoders.append(_Decoder(hermitian(T @ Sy @ T.conj().T) + REG * np.eye(m),
                                     hermitian(T @ T.conj().T) + REG * np.eye(m), Tt))
        edges = []
        for k, e in enumerate(active.edges):
            Ky, Kq = tm.node_maps(active, e.tail)
            Lk = self.L[k]
            edges.append(_EdgeRate(k, hermitian(Lk @ Ky @ Sy @ Ky.conj().T @ Lk.conj().T), Lk @ Kq,
                                   float(self.ceff[k])))
        super().__init__([l.shape[0] for l in self.L], tm.edge_slices, decoders, edges, noise_cap(Sy),
                         active.edge_topological_order(), precision)

    def config(self, x: Point) -> DprConfig:
        return DprConfig(self.active, self.L, self.omegas(x))


def _model(ch, active, ceff, L=None):
    return _DprModel(ch, active, ceff, L)


def _live_subset(active: ActiveEdgeSet, ceff):
    mask = live_edges(active, ceff)
    sub, kept = restrict_edges(active, mask)
    return sub, kept, np.flatnonzero(~mask), np.asarray(ceff, dtype=float)[kept]


def _run(model: _DprModel, x0: Point | None, opts: MMOptions):
    prog = model.program
    if not prog.variables:
        return Point([], np.zeros(0)), OptimizationRecord([0.0], [0.0], 0, OK)
    if x0 is None:
        init = feasible_init(prog)
        if init.status != OK:
            return init.point, OptimizationRecord([], [], 0, INFEASIBLE, True)
        x0 = init.point
    return maximize(prog, x0, opts)


def _strictly_feasible(prog: LogDetProgram, x: Point) -> bool:
    try:
        return prog.is_strictly_feasible(x)
    except (np.linalg.LinAlgError, SingularMatrixError):
        return False


def _solution(model: _DprModel, x: Point, record: OptimizationRecord, kept, dropped) -> DprSolution:
    cfg = model.config(x)
    rate = dpr_sum_rate(cfg, model.ch) if model.m and cfg.omegas else 0.0
    rates = dpr_backhaul_rates(cfg, model.ch) if cfg.omegas else np.zeros(0)
    return DprSolution(cfg, float(rate), record, kept, dropped, rates)


def optimize_dpr_opt(ch: ChannelRealization, active: ActiveEdgeSet, ceff, options: MMOptions | None = None,
                     warm_start: DprConfig | None = None) -> DprSolution:
    """Maximize the sum-rate over ``Omega_e`` with ``L_e = I``.

    Edges that cannot carry information are removed first (the exact
    infinite-noise limit).  ``warm_start`` must refer to the same live
    edge set and be strictly feasible, otherwise it is ignored.
    """
    _check_channel(ch, active)
    opts = options or MMOptions()
    sub, kept, dropped, c_sub = _live_subset(active, ceff)
    model = _model(ch, sub, c_sub)
    x0 = None
    if warm_start is not None and len(warm_start.omegas) == len(sub.edges) \
            and all(np.shape(o) == (v.dim, v.dim) for o, v in zip(warm_start.omegas, model.program.variables)):
        cand = model.to_point(warm_start.omegas)
        if _strictly_feasible(model.program, cand):
            x0 = cand
    x, rec = _run(model, x0, opts)
    return _solution(model, x, rec, kept, dropped)


def optimize_dpr_rank(ch: ChannelRealization, active: ActiveEdgeSet, ceff, rank_limits,
                      options: MMOptions | None = None) -> DprSolution:
    """Limited-rank DPR: optimize with ``L = I``, keep the ``d_e`` least noisy
    directions of each ``Omega_e`` and re-optimize with those maps fixed.

    Parameters
    ----------
    rank_limits : int or mapping active-edge index -> d_e
        An int applies to every edge.  Limits are clipped to the edge's
        input dimension.
    """
    _check_channel(ch, active)
    opts = options or MMOptions()
    sub, kept, dropped, c_sub = _live_subset(active, ceff)
    if isinstance(rank_limits, (int, np.integer)):
        limits = {k: int(rank_limits) for k in range(len(sub.edges))}
    else:
        pos = {int(o): k for k, o in enumerate(kept)}
        limits = {pos[int(k)]: int(v) for k, v in dict(rank_limits).items() if int(k) in pos}
    first = optimize_dpr_opt(ch, active, ceff, opts)
    if first.record.status == INFEASIBLE:
        return first
    # first.config lives on the same live edge set; project each step-1
    # covariance into the reduced coordinates of its tail signal
    full_om = first.config.omegas
    full_dims = first.config.edge_dims
    topo = sub.topology
    L, J = [None] * len(sub.edges), [None] * len(sub.edges)
    warm = [None] * len(sub.edges)
    for k in sub.edge_topological_order():
        tail = sub.edges[k].tail
        blocks = [np.eye(topo.antennas(tail), dtype=complex)] if topo.antennas(tail) else []
        blocks += [L[kp] for kp in sub.incoming[tail]]
        Jt = block_diag(blocks)
        Om = hermitian(Jt @ full_om[k] @ Jt.conj().T)
        d_in = Om.shape[0]
        d = limits.get(k, d_in)
        if not 1 <= d:
            raise TopologyError(f"rank limit {d} on edge {k} must be positive")
        d = min(d, d_in)
        w, V = np.linalg.eigh(Om)
        V = V[:, np.argsort(w)[:d]]
        L[k] = V.conj().T
        warm[k] = hermitian(L[k] @ Om @ L[k].conj().T)
        J[k] = Jt
    model = _model(ch, sub, c_sub, L)
    cand = model.to_point(warm)
    x0 = cand if _strictly_feasible(model.program, cand) else None
    x, rec = _run(model, x0, opts)
    return _solution(model, x, first.record.merge(rec), kept, dropped)


def _bisect_scale(g, target, lo=1e-12, hi=1e12, tol=1e-10, max_iter=200):
    """Smallest-noise ``c`` with ``g(c) <= target`` for decreasing ``g``."""
    if g(hi) > target:
        return hi
    if g(lo) <= target:
        return lo
    llo, lhi = np.log(lo), np.log(hi)
    for _ in range(max_iter):
        mid = 0.5 * (llo + lhi)
        if g(np.exp(mid)) > target:
            llo = mid
        else:
            lhi = mid
        if lhi - llo < tol:
            break
    return float(np.exp(lhi))


def dpr_not_opt(ch: ChannelRealization, active: ActiveEdgeSet, ceff) -> DprSolution:
    """Baseline with ``L_e = I`` and ``Omega_e = c_e I``, each ``c_e`` chosen so the
    edge exactly uses its capacity.  Edges with zero capacity get the cap."""
    _check_channel(ch, active)
    ceff = np.asarray(ceff, dtype=float)
    sub, kept, dropped, c_sub = _live_subset(active, ceff)
    L = identity_maps(sub)
    cap = noise_cap(received_covariance(ch))
    omegas = [cap * np.eye(l.shape[0], dtype=complex) for l in L]
    tm = transfer_matrices(sub, L)
    Sy = received_covariance(ch)
    for k in sub.edge_topological_order():
        tail = sub.edges[k].tail
        Ky, Kq = tm.node_maps(sub, tail)
        om = block_diag(omegas) if omegas else np.zeros((0, 0))
        Sr = hermitian(Ky @ Sy @ Ky.conj().T + Kq @ om @ Kq.conj().T)
        w = np.clip(np.linalg.eigvalsh(Sr), 0.0, None)
        g = lambda c: float(np.sum(np.log1p(w / c)) / LN2)
        c = _bisect_scale(g, c_sub[k], lo=1e-12 * max(1.0, w.max()), hi=cap)
        omegas[k] = c * np.eye(Sr.shape[0], dtype=complex)
    cfg = DprConfig(sub, L, omegas)
    rate = dpr_sum_rate(cfg, ch) if omegas else 0.0
    return DprSolution(cfg, float(rate), OptimizationRecord([float(rate)], [0.0], 0, OK), kept, dropped,
                       dpr_backhaul_rates(cfg, ch) if omegas else np.zeros(0))
