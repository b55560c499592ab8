"""Layer-by-layer DPR optimization from local CSI.

Every node fixes the quantization noise of its outgoing edges once all
of its ascendants are done.  Three variants differ in what a node knows
and optimizes:

* ``ff``: water-filling for ``I(x; u_e)`` given the ascendants' CSI.
* ``ff_fb``: MM for ``I(x; u_e | v_e)`` where ``v_e`` are the edge signals
  the head already received from nodes processed earlier.
* ``si``: as ``ff_fb`` with the Wyner-Ziv rate ``I(r; u_e | v_e)`` in the
  backhaul constraint, ``v_e`` being the earlier signals in the head's
  decompression order.

All conditional quantities are exact Gaussian conditionals over the
joint vector ``w = [x; z; q]`` (transmit signals, receiver noise and
quantization noises), of which every signal in the network is a linear
map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelRealization
from .common import MMOptions, OptimizationRecord, maximize, noise_cap
from .dpr import REG, DprConfig, DprSolution, _check_channel, dpr_backhaul_rates, dpr_sum_rate, \
    identity_maps, transfer_matrices
from .linalg import LN2, block_diag, conditional_covariance, eig_hermitian_desc, hermitian, \
    inv_sqrtm_pd, logdet, sqrtm_psd
from .solver import (INFEASIBLE, OK, Constraint, Linear, LogDetProgram, LogDetTerm, MatrixVar, feasible_init,
                     minorize_maximize)
from .topology import ActiveEdgeSet, live_edges, restrict_edges


class SequencingError(RuntimeError):
    """A quantity was requested before the covariances it depends on were fixed."""


@dataclass(frozen=True)
class EffectiveChannel:
    """``r_i = H x + n`` with ``n ~ CN(0, noise)``."""

    H: np.ndarray
    noise: np.ndarray

    @property
    def dim(self) -> int:
        return self.H.shape[0]


class _JointModel:
    """Linear maps from ``w = [x; z; q]`` to node and edge signals (``L = I``)."""

    def __init__(self, active: ActiveEdgeSet, ch: ChannelRealization):
        self.active, self.ch = active, ch
        self.tm = transfer_matrices(active)
        H = ch.H
        self.nx, self.ny = H.shape[1], H.shape[0]
        self.nq = self.tm.B.shape[1]
        self.H = H

    def node_map(self, node: int) -> np.ndarray:
        Ky, Kq = self.tm.node_maps(self.active, node)
        return np.hstack([Ky @ self.H, Ky, Kq])

    def edge_map(self, edges: Sequence[int]) -> np.ndarray:
        if not edges:
            return np.zeros((0, self.nx + self.ny + self.nq), dtype=complex)
        rows = np.concatenate([np.arange(self.tm.edge_slices[k].start, self.tm.edge_slices[k].stop)
                               for k in edges])
        A, B = self.tm.A[rows], self.tm.B[rows]
        return np.hstack([A @ self.H, A, B])

    def cov_w(self, omegas: Mapping[int, np.ndarray]) -> np.ndarray:
        om = []
        for k, s in enumerate(self.tm.edge_slices):
            d = s.stop - s.start
            om.append(np.asarray(omegas[k], dtype=complex) if k in omegas else np.zeros((d, d), dtype=complex))
        return block_diag([self.ch.sigma_x, np.eye(self.ny, dtype=complex)] + om)

    def x_part(self, M: np.ndarray) -> np.ndarray:
        return M[:, :self.nx]

    def noise_part(self, M: np.ndarray) -> np.ndarray:
        out = M.copy()
        out[:, :self.nx] = 0
        return out

    def require(self, M: np.ndarray, omegas: Mapping[int, np.ndarray], what: str):
        """Raise if ``M`` depends on a quantization noise that is not fixed yet."""
        for k, s in enumerate(self.tm.edge_slices):
            if k in omegas:
                continue
            if np.any(M[:, self.nx + self.ny + s.start:self.nx + self.ny + s.stop] != 0):
                raise SequencingError(f"{what} depends on edge {k}, whose covariance is not fixed")


def effective_channel(node: int, active: ActiveEdgeSet, omegas: Mapping[int, np.ndarray],
                      ch: ChannelRealization) -> EffectiveChannel:
    """Effective channel and noise of ``r_node`` for fixed upstream covariances.

    ``omegas`` maps active-edge index to ``Omega_e``; every edge leaving
    an ascendant of ``node`` must be present.
    """
    _check_channel(ch, active)
    jm = _JointModel(active, ch)
    return _effective(jm, node, omegas)


def _effective(jm: _JointModel, node: int, omegas) -> EffectiveChannel:
    M = jm.node_map(node)
    jm.require(M, omegas, f"r_{node}")
    S = jm.cov_w(omegas)
    N = jm.noise_part(M)
    return EffectiveChannel(jm.x_part(M), hermitian(N @ S @ N.conj().T))


def sideinfo_covariances(node: int, side_edges: Sequence[int], active: ActiveEdgeSet,
                         omegas: Mapping[int, np.ndarray], ch: ChannelRealization):
    """Covariances between ``x``, the effective noise of ``r_node`` and ``v``.

    ``v`` stacks the signals ``u_e`` of ``side_edges`` in the given order.

    Returns
    -------
    sigma_xv : ``Cov(x, v)``
    sigma_nv : ``Cov(n_node, v)``
    sigma_v : ``Cov(v)``
    """
    _check_channel(ch, active)
    return _sideinfo(_JointModel(active, ch), node, side_edges, omegas)


def _sideinfo(jm: _JointModel, node, side_edges, omegas):
    Mv = jm.edge_map(list(side_edges))
    jm.require(Mv, omegas, "side information")
    Mr = jm.node_map(node)
    S = jm.cov_w(omegas)
    sigma_xv = jm.ch.sigma_x @ jm.x_part(Mv).conj().T
    sigma_nv = jm.noise_part(Mr) @ S @ Mv.conj().T
    sigma_v = hermitian(Mv @ S @ Mv.conj().T) if Mv.shape[0] else np.zeros((0, 0), dtype=complex)
    return sigma_xv, sigma_nv, sigma_v


@dataclass(frozen=True)
class EdgeStatistics:
    """Covariances of ``r = r_tail`` that define one edge's local problem.

    Attributes
    ----------
    sigma_r : ``Cov(r)``
    sigma_r_v : ``Cov(r | v)``
    sigma_r_vx : ``Cov(r | v, x)``
    """

    sigma_r: np.ndarray
    sigma_r_v: np.ndarray
    sigma_r_vx: np.ndarray


def _edge_statistics(jm: _JointModel, node: int, side_edges, omegas) -> EdgeStatistics:
    Mr = jm.node_map(node)
    jm.require(Mr, omegas, f"r_{node}")
    Mv = jm.edge_map(list(side_edges))
    jm.require(Mv, omegas, "side information")
    S = jm.cov_w(omegas)
    Sr = hermitian(Mr @ S @ Mr.conj().T)
    if not Mv.shape[0]:
        Nr = jm.noise_part(Mr)
        Sn = hermitian(Nr @ S @ Nr.conj().T)
        return EdgeStatistics(Sr, Sr, Sn)
    Sv = hermitian(Mv @ S @ Mv.conj().T)
    Srv = Mr @ S @ Mv.conj().T
    Sr_v = conditional_covariance(Sr, Srv, Sv)
    # given x as well: condition the noise parts on each other
    Nr, Nv = jm.noise_part(Mr), jm.noise_part(Mv)
    Sn = hermitian(Nr @ S @ Nr.conj().T)
    Snv = Nr @ S @ Nv.conj().T
    Snn = hermitian(Nv @ S @ Nv.conj().T)
    Sr_vx = conditional_covariance(Sn, Snv, Snn)
    return EdgeStatistics(Sr, Sr_v, Sr_vx)


# ---------------------------------------------------------------- water-filling

def waterfill_ff(eff: EffectiveChannel, sigma_x, capacity: float, cap: float | None = None,
                 tol: float = 1e-13) -> np.ndarray:
    """Optimal ``Omega_e`` for ``max I(x; u) s.t. I(r; u) <= capacity``.

    Directions that receive no rate get the noise ``cap`` (relative to the
    whitened signal), and the water level accounts for their tiny rate so
    the constraint holds with equality.
    """
    Sn = hermitian(eff.noise)
    d = Sn.shape[0]
    Sr = hermitian(eff.H @ np.atleast_2d(sigma_x) @ eff.H.conj().T + Sn)
    cap = noise_cap(Sr) if cap is None else cap
    if d == 0:
        return np.zeros((0, 0), dtype=complex)
    Sh = sqrtm_psd(Sn)
    W = inv_sqrtm_pd(Sn)
    lam, V = eig_hermitian_desc(hermitian(W @ (Sr - Sn) @ W) + np.eye(d))
    lam = np.maximum(lam, 1.0)
    a_min = 1.0 / cap

    def alphas(mu):
        return np.maximum((1.0 - 1.0 / lam) / mu - 1.0, a_min)

    def rate(mu):
        return float(np.sum(np.log1p(alphas(mu) * lam)) / LN2)

    if capacity <= rate(np.inf) or not np.any(lam > 1.0 + 1e-15):
        a = np.full(d, a_min)
    else:
        # rate(mu) decreases in mu; bracket and bisect on log mu
        hi = float(np.max(1.0 - 1.0 / lam))
        lo = hi
        while rate(lo) < capacity:
            lo *= 0.5
        llo, lhi = np.log(lo), np.log(hi)
        for _ in range(400):
            mid = 0.5 * (llo + lhi)
            if rate(np.exp(mid)) > capacity:
                llo = mid
            else:
                lhi = mid
            if lhi - llo < tol:
                break
        a = alphas(np.exp(0.5 * (llo + lhi)))
    return hermitian(Sh @ V @ np.diag(1.0 / a) @ V.conj().T @ Sh)


# ---------------------------------------------------------------- per-edge MM

def _edge_program(stats: EdgeStatistics, capacity: float, side_info_rate: bool) -> LogDetProgram:
    # precision form: logdet(S + inv(T)) - logdet(inv(T)) = logdet(I + S^1/2 T S^1/2), so
    # the objective is a difference of concave terms in T and the rate is concave in T
    d = stats.sigma_r.shape[0]
    I = np.eye(d)
    var = MatrixVar(d, None, "precision")
    obj = [LogDetTerm(I, [(0, sqrtm_psd(stats.sigma_r_v), 1.0)], 1.0),
           LogDetTerm(I, [(0, sqrtm_psd(stats.sigma_r_vx), 1.0)], -1.0)]
    rate = stats.sigma_r_v if side_info_rate else stats.sigma_r
    con = Constraint([LogDetTerm(I, [(0, sqrtm_psd(rate), 1.0)], 1.0)], Linear(), float(capacity), "backhaul")
    return LogDetProgram([var], 0, obj, Linear(), [con])


def _precision_to_noise(theta, cap: float) -> np.ndarray:
    w, V = np.linalg.eigh(hermitian(theta))
    w = np.minimum(1.0 / np.maximum(w, 1.0 / cap), cap)
    return hermitian((V * w) @ V.conj().T)


def edge_objective(stats: EdgeStatistics, omega) -> float:
    """``I(x; u_e | v_e)`` in bits."""
    om = hermitian(omega)
    return logdet(stats.sigma_r_v + om) - logdet(stats.sigma_r_vx + om)


def edge_rate(stats: EdgeStatistics, omega, side_info: bool = False) -> float:
    """``I(r; u_e)`` or, with ``side_info``, ``I(r; u_e | v_e)`` in bits."""
    om = hermitian(omega)
    return logdet((stats.sigma_r_v if side_info else stats.sigma_r) + om) - logdet(om)


def optimize_edge(stats: EdgeStatistics, capacity: float, side_info_rate: bool = False,
                  options: MMOptions | None = None):
    """MM solution of one edge's local problem; ``(omega, record)``.

    The iterations run on the precision ``inv(Omega)``, for which
    discarding a dimension is the finite point ``0``.
    """
    opts = options or MMOptions(max_iter=30)
    d = stats.sigma_r.shape[0]
    cap = noise_cap(stats.sigma_r)
    if capacity <= 0 or d == 0:
        return cap * np.eye(d, dtype=complex), OptimizationRecord([0.0], [0.0], 0, OK)
    prog = _edge_program(stats, capacity, side_info_rate)
    init = feasible_init(prog)
    if init.status != OK:
        return cap * np.eye(d, dtype=complex), OptimizationRecord([], [], 0, INFEASIBLE)
    x, rec = maximize(prog, init.point, opts)
    return _precision_to_noise(x.mats[0], cap), rec


# ---------------------------------------------------------------- orders and schemes

def default_layer_orders(active: ActiveEdgeSet) -> list:
    """Ascending node ids in every layer."""
    return [tuple(sorted(layer)) for layer in active.partition.layers]


def default_decompression_orders(active: ActiveEdgeSet) -> dict:
    """Ascending active-edge index at every node."""
    return {v: tuple(sorted(active.incoming[v])) for v in active.incoming}


def _processing_sequence(active: ActiveEdgeSet, layer_orders) -> list:
    cus = set(active.topology.cu_ids)
    seq = []
    for layer in layer_orders:
        for v in layer:
            if v in cus:
                continue
            seq.extend(active.outgoing[v])
    return seq


def _validate_orders(active, layer_orders, decompression_orders):
    layers = [set(l) for l in active.partition.layers]
    if len(layer_orders) != len(layers) or any(set(o) != l or len(o) != len(l)
                                               for o, l in zip(layer_orders, layers)):
        raise ValueError("layer orders must permute the partition layers")
    for v, order in decompression_orders.items():
        if sorted(order) != sorted(active.incoming[v]):
            raise ValueError(f"decompression order at node {v} must permute its incoming edges")


def optimize_decentralized(ch: ChannelRealization, active: ActiveEdgeSet, ceff, variant: str = "ff_fb",
                           layer_orders=None, decompression_orders=None,
                           options: MMOptions | None = None) -> DprSolution:
    """Run one decentralized DPR variant (``"ff"``, ``"ff_fb"`` or ``"si"``).

    Edges that cannot carry information (zero capacity or no path to a
    CU) are removed first.  The reported sum-rate is the end-to-end rate
    of the resulting configuration with ``L = I``.
    """
    if variant not in ("ff", "ff_fb", "si"):
        raise ValueError(f"unknown decentralized variant {variant!r}")
    _check_channel(ch, active)
    ceff = np.asarray(ceff, dtype=float)
    layer_orders = [tuple(o) for o in (layer_orders or default_layer_orders(active))]
    dec_orders = dict(decompression_orders or default_decompression_orders(active))
    _validate_orders(active, layer_orders, dec_orders)
    opts = options or MMOptions(max_iter=30)

    mask = live_edges(active, ceff)
    sub, kept = restrict_edges(active, mask)
    pos = {int(o): k for k, o in enumerate(kept)}
    c_sub = ceff[kept]
    # orders carried over to the reduced edge indices
    sub_dec = {v: tuple(pos[k] for k in order if k in pos) for v, order in dec_orders.items()}
    jm = _JointModel(sub, ch)
    omegas: dict[int, np.ndarray] = {}
    record = OptimizationRecord([], [], 0, OK)
    for k in _processing_sequence(sub, layer_orders):
        e = sub.edges[k]
        if variant == "ff":
            om = waterfill_ff(_effective(jm, e.tail, omegas), ch.sigma_x, c_sub[k])
        else:
            if variant == "ff_fb":
                side = [kp for kp in sub.incoming[e.head] if kp in omegas]
            else:
                order = sub_dec[e.head]
                side = list(order[:order.index(k)])
                missing = [kp for kp in side if kp not in omegas]
                if missing:
                    raise SequencingError(f"edge {k} decodes after edges {missing} that are not optimized yet")
            stats = _edge_statistics(jm, e.tail, side, omegas)
            om, rec = optimize_edge(stats, c_sub[k], variant == "si", opts)
            record = record.merge(rec) if record.trace else rec
        omegas[k] = om
    L = identity_maps(sub)
    cfg = DprConfig(sub, L, [omegas[k] for k in range(len(sub.edges))])
    rate = dpr_sum_rate(cfg, ch) if cfg.omegas else 0.0
    if record.status == INFEASIBLE:
        record.status = OK  # per-edge failures are capped and the run continues
    dropped = np.flatnonzero(~mask)
    return DprSolution(cfg, float(rate), record, kept, dropped,
                       dpr_backhaul_rates(cfg, ch) if cfg.omegas else np.zeros(0))


def optimize_ff(ch, active, ceff, layer_orders=None) -> DprSolution:
    """Water-filling at every node from feedforward CSI."""
    return optimize_decentralized(ch, active, ceff, "ff", layer_orders)


def optimize_ff_fb(ch, active, ceff, layer_orders=None, options=None) -> DprSolution:
    """Per-edge MM using CSI fed back by the head about already-received signals."""
    return optimize_decentralized(ch, active, ceff, "ff_fb", layer_orders, None, options)


def optimize_dec_si(ch, active, ceff, layer_orders=None, decompression_orders=None, options=None) -> DprSolution:
    """Per-edge MM with Wyner-Ziv backhaul accounting."""
    return optimize_decentralized(ch, active, ceff, "si", layer_orders, decompression_orders, options)
