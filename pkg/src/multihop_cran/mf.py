"""Multiplex-and-forward: every RU compresses its own signal once and the
bit streams are routed unchanged to the CU as flows."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, ru_covariance
from .common import MMOptions, OptimizationRecord, embedding, maximize, noise_cap
from .linalg import ShapeError, block_diag, hermitian, logdet, sqrtm_psd
from .solver import (INFEASIBLE, OK, Constraint, Linear, LogDetProgram, LogDetTerm, MatrixVar, Point,
                     feasible_init, minorize_maximize)
from .topology import ActiveEdgeSet, live_edges
from .dpr import precision_to_noise


def mf_compression_rate(omega, sigma_y) -> float:
    """``I(y_i; y_i + q_i)`` in bits for quantization noise ``omega``."""
    omega = hermitian(np.atleast_2d(omega))
    return logdet(omega + hermitian(np.atleast_2d(sigma_y))) - logdet(omega)


def mf_sum_rate(omegas, ch: ChannelRealization) -> float:
    """Sum-rate when the CU jointly decodes from all compressed RU signals.

    ``omegas`` lists one block per RU in ``ch.ru_ids`` order.
    """
    H = ch.H
    n = H.shape[0]
    blocks = [np.atleast_2d(np.asarray(o, dtype=complex)) for o in omegas]
    if len(blocks) != len(ch.blocks) or any(b.shape[0] != h.shape[0] for b, h in zip(blocks, ch.blocks)):
        raise ShapeError("quantization blocks do not match the RU antenna counts")
    om = block_diag(blocks) if n else np.zeros((0, 0))
    noise = np.eye(n) + om
    return logdet(H @ ch.sigma_x @ H.conj().T + noise) - logdet(noise)


@dataclass
class FlowReport:
    outgoing: float
    incoming: float
    capacity: float
    conservation: float

    @property
    def max(self) -> float:
        return max(self.outgoing, self.incoming, self.capacity, self.conservation)


def check_flow_constraints(flows, rates, active: ActiveEdgeSet, ceff) -> FlowReport:
    """Largest violation of each routing constraint family (0 when satisfied).

    Parameters
    ----------
    flows : mapping ``(ru, active edge index) -> f`` (missing entries are 0)
    rates : mapping ``ru -> R``
    """
    f = lambda i, k: float(flows.get((i, k), 0.0))
    cus = set(active.topology.cu_ids)
    out = inc = cap = cons = 0.0
    for i, R in rates.items():
        for k in active.outgoing[i]:
            out = max(out, R - f(i, k))
        into_cu = sum(f(i, k) for c in cus for k in active.incoming[c])
        inc = max(inc, R - into_cu)
    for k in range(len(active.edges)):
        cap = max(cap, sum(f(i, k) for i in rates) - float(ceff[k]))
    for j in active.topology.ru_ids:
        for i in rates:
            if i == j:
                continue
            cons = max(cons, sum(f(i, k) for k in active.outgoing[j]) - sum(f(i, k) for k in active.incoming[j]))
    return FlowReport(out, inc, cap, cons)


@dataclass
class MfSolution:
    omegas: list
    rates: dict
    flows: dict
    sum_rate: float
    record: OptimizationRecord = field(default_factory=OptimizationRecord)
    flow_report: FlowReport | None = None


class _MfModel:
    """Variable layout and the signed log-det program of the MF problem."""

    def __init__(self, ch: ChannelRealization, active: ActiveEdgeSet, ceff):
        self.ch, self.active = ch, active
        self.ceff = np.asarray(ceff, dtype=float)
        topo = active.topology
        live = live_edges(active, self.ceff)
        self.live = live
        rows = ch.row_slices()
        self.live_rus = [i for i in ch.ru_ids
                         if ch.block(i).shape[0] > 0 and np.any(ch.block(i) != 0)
                         and any(live[k] for k in active.outgoing[i])]
        # flows: stream i on live edges reachable from i
        self.flow_index: dict[tuple[int, int], int] = {}
        n_rus = len(self.live_rus)
        for i in self.live_rus:
            reach, stack = {i}, [i]
            while stack:
                v = stack.pop()
                for k in active.outgoing[v]:
                    if live[k]:
                        self.flow_index[(i, k)] = n_rus + len(self.flow_index)
                        h = active.edges[k].head
                        if h not in reach:
                            reach.add(h)
                            stack.append(h)
        self.n_scal = n_rus + len(self.flow_index)
        self.rate_index = {i: r for r, i in enumerate(self.live_rus)}
        self.sigma_y = {i: ru_covariance(ch, i) for i in ch.ru_ids}
        self.caps = {i: noise_cap(self.sigma_y[i]) if self.sigma_y[i].size else 1.0 for i in ch.ru_ids}

        # precision variables Theta_i = inv(Omega_i): with S the live received covariance,
        # logdet(S + Omega) - logdet(I + Omega) = logdet(I + S^1/2 Theta S^1/2) - logdet(I + Theta)
        # and each compression rate is logdet(I + Sigma_i^1/2 Theta_i Sigma_i^1/2)
        H = ch.H
        keep = np.concatenate([np.arange(rows[i].start, rows[i].stop) for i in self.live_rus]) \
            if self.live_rus else np.zeros(0, int)
        Hl = H[keep]
        m = Hl.shape[0]
        s_half = sqrtm_psd(Hl @ ch.sigma_x @ Hl.conj().T + np.eye(m))
        variables, maps, off = [], [], 0
        obj = []
        for k, i in enumerate(self.live_rus):
            d = rows[i].stop - rows[i].start
            variables.append(MatrixVar(d, 1e16 / self.caps[i], f"precision_{i}"))
            maps.append((k, s_half @ embedding(m, d, off), 1.0))
            obj.append(LogDetTerm(np.eye(d), [(k, np.eye(d), 1.0)], -1.0))
            off += d
        obj.insert(0, LogDetTerm(np.eye(m), maps, 1.0))
        cons = []
        for k, i in enumerate(self.live_rus):
            d = variables[k].dim
            cons.append(Constraint([LogDetTerm(np.eye(d), [(k, sqrtm_psd(self.sigma_y[i]), 1.0)], 1.0)],
                                   Linear(0.0, {}, {self.rate_index[i]: -1.0}), 0.0, f"rate_{i}"))
        A, b = self._flow_rows(topo)
        self.program = LogDetProgram(variables, self.n_scal, obj, Linear(), cons, A, b)

    def _flow_rows(self, topo):
        act, fi, ri = self.active, self.flow_index, self.rate_index
        rows, bounds = [], []

        def row():
            r = np.zeros(self.n_scal)
            rows.append(r)
            return r

        cus = set(topo.cu_ids)
        for i in self.live_rus:
            for k in act.outgoing[i]:
                if (i, k) in fi:
                    r = row(); r[ri[i]] = 1.0; r[fi[(i, k)]] = -1.0; bounds.append(0.0)
            r = row(); r[ri[i]] = 1.0
            for c in cus:
                for k in act.incoming[c]:
                    if (i, k) in fi:
                        r[fi[(i, k)]] = -1.0
            bounds.append(0.0)
        for k in range(len(act.edges)):
            users = [fi[(i, k)] for i in self.live_rus if (i, k) in fi]
            if users:
                r = row(); r[users] = 1.0; bounds.append(float(self.ceff[k]))
        for j in topo.ru_ids:
            for i in self.live_rus:
                if i == j:
                    continue
                outs = [fi[(i, k)] for k in act.outgoing[j] if (i, k) in fi]
                if outs:
                    r = row(); r[outs] = 1.0
                    for k in act.incoming[j]:
                        if (i, k) in fi:
                            r[fi[(i, k)]] = -1.0
                    bounds.append(0.0)
        A = np.array(rows) if rows else np.zeros((0, self.n_scal))
        return A, np.array(bounds)

    def solution(self, x: Point, record: OptimizationRecord) -> MfSolution:
        omegas, rates = [], {}
        lk = {i: k for k, i in enumerate(self.live_rus)}
        for i in self.ch.ru_ids:
            d = self.ch.block(i).shape[0]
            if i in lk:
                omegas.append(precision_to_noise(x.mats[lk[i]], self.caps[i]))
                rates[i] = float(x.scalars[self.rate_index[i]])
            else:
                omegas.append(self.caps[i] * np.eye(d, dtype=complex))
                rates[i] = 0.0
        flows = {key: float(x.scalars[j]) for key, j in self.flow_index.items()}
        rate = mf_sum_rate(omegas, self.ch) if self.live_rus else 0.0
        rep = check_flow_constraints(flows, rates, self.active, self.ceff)
        return MfSolution(omegas, rates, flows, float(rate), record, rep)


def optimize_mf(ch: ChannelRealization, active: ActiveEdgeSet, ceff, options: MMOptions | None = None,
                warm_start: MfSolution | None = None) -> MfSolution:
    """Jointly optimize compression noise, compression rates and routing flows.

    RUs that cannot reach the CU through positive-capacity edges are
    discarded (infinite quantization noise); the reported sum-rate uses
    the exact infinite-noise limit for them.
    """
    opts = options or MMOptions()
    model = _MfModel(ch, active, ceff)
    prog = model.program
    if not model.live_rus:
        return model.solution(Point([], np.zeros(model.n_scal)), OptimizationRecord([0.0], [0.0], 0, OK))
    x0 = None
    if warm_start is not None:
        x0 = _warm_point(model, warm_start)
    if x0 is None:
        init = feasible_init(prog)
        if init.status != OK:
            rec = OptimizationRecord([], [], 0, INFEASIBLE, True)
            return model.solution(init.point, rec)
        x0 = init.point
    x, rec = maximize(prog, x0, opts)
    return model.solution(x, rec)


def _warm_point(model: _MfModel, sol: MfSolution) -> Point | None:
    idx = {i: k for k, i in enumerate(model.ch.ru_ids)}
    mats = [hermitian(np.linalg.inv(hermitian(np.asarray(sol.omegas[idx[i]], dtype=complex))))
            for i in model.live_rus]
    s = np.zeros(model.n_scal)
    for i, r in model.rate_index.items():
        s[r] = sol.rates.get(i, 0.0)
    for key, j in model.flow_index.items():
        s[j] = sol.flows.get(key, 0.0)
    x = Point(mats, s)
    prog = model.program
    return x if prog.is_strictly_feasible(x) else None
