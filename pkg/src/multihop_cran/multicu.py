"""DPR with several CUs that exchange compressed observations.

Each CU decodes its own subset of MSs and treats the others as noise.
A CU-to-CU link carries one compressed copy of the sender's aggregate
received signal ``u_jk = r_j + q_jk`` (a single round of exchange), and
the receiving CU decodes from ``[r_k; u_jk for all partners j]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelRealization, received_covariance
from .common import MMOptions, OptimizationRecord, noise_cap
from .dpr import (REG, DprConfig, _CompressionModel, _Decoder, _EdgeRate, _check_channel, _live_subset, _run,
                  _strictly_feasible, identity_maps, transfer_matrices)
from .linalg import ShapeError, block_diag, conditional_covariance, hermitian, logdet
from .solver import INFEASIBLE, OK, Point
from .topology import ActiveEdgeSet

DECODER_FLOOR = 1e-6


def _check_groups(groups: Mapping[int, Sequence[int]], cus, n_ms: int) -> dict:
    groups = {int(c): tuple(int(m) for m in ms) for c, ms in groups.items()}
    if set(groups) != set(cus):
        raise ValueError("every CU needs a decoded MS subset")
    flat = [m for ms in groups.values() for m in ms]
    if len(flat) != len(set(flat)):
        raise ValueError("decoded MS subsets overlap")
    if sorted(flat) != list(range(n_ms)):
        raise ValueError("decoded MS subsets must partition the MSs")
    return groups


@dataclass(frozen=True)
class _Layout:
    """Noise layout: active routing edges first, then the CU-to-CU links."""

    dims: list
    slices: list
    inter: list          # (tail CU, head CU) per inter-CU variable
    decoders: dict       # CU -> _Decoder
    edges: list          # _EdgeRate per variable


def _layout(active: ActiveEdgeSet, ch: ChannelRealization, groups: dict, inter_caps: Mapping, ceff,
            L=None) -> _Layout:
    topo = active.topology
    tm = transfer_matrices(active, L)
    L = identity_maps(active) if L is None else L
    Sy = received_covariance(ch)
    H = ch.H
    r_dims = [l.shape[0] for l in L]
    cus = topo.cu_ids
    nq_r = tm.B.shape[1]

    def rows(cu):
        ks = active.incoming[cu]
        if not ks:
            return np.zeros((0, tm.A.shape[1]), dtype=complex), np.zeros((0, nq_r), dtype=complex)
        idx = np.concatenate([np.arange(tm.edge_slices[k].start, tm.edge_slices[k].stop) for k in ks])
        return tm.A[idx], tm.B[idx]

    inter = [(j, k) for (j, k), c in sorted(inter_caps.items()) if c > 0]
    dims = list(r_dims) + [rows(j)[0].shape[0] for j, _ in inter]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    slices = [slice(offs[k], offs[k + 1]) for k in range(len(dims))]
    nq = int(offs[-1])

    def pad(B):
        out = np.zeros((B.shape[0], nq), dtype=complex)
        out[:, :nq_r] = B
        return out

    ms = ch.ms_slices()
    decoders = {}
    for c in cus:
        cols = np.concatenate([np.arange(ms[m].start, ms[m].stop) for m in groups[c]]) if groups[c] \
            else np.zeros(0, int)
        Sx = ch.sigma_x
        rest = np.setdiff1d(np.arange(Sx.shape[0]), cols)
        Sx_c = np.zeros_like(Sx)
        Sx_c[np.ix_(rest, rest)] = conditional_covariance(Sx[np.ix_(rest, rest)], Sx[np.ix_(rest, cols)],
                                                          Sx[np.ix_(cols, cols)])
        Sy_int = hermitian(H @ Sx_c @ H.conj().T) + np.eye(H.shape[0])
        P, Q = rows(c)
        P_blocks, Q_blocks = [P], [pad(Q)]
        for v, (j, k) in enumerate(inter):
            if k != c:
                continue
            Pj, Qj = rows(j)
            Qv = pad(Qj)
            Qv[:, slices[len(r_dims) + v]] += np.eye(Pj.shape[0])
            P_blocks.append(Pj)
            Q_blocks.append(Qv)
        P, Q = np.vstack(P_blocks), np.vstack(Q_blocks)
        m = P.shape[0]
        if m:
            decoders[c] = _Decoder(hermitian(P @ Sy @ P.conj().T) + REG * np.eye(m),
                                   hermitian(P @ Sy_int @ P.conj().T) + REG * np.eye(m), Q)
    edges = []
    for k, e in enumerate(active.edges):
        Ky, Kq = tm.node_maps(active, e.tail)
        Lk = L[k]
        edges.append(_EdgeRate(k, hermitian(Lk @ Ky @ Sy @ Ky.conj().T @ Lk.conj().T), pad(Lk @ Kq),
                               float(ceff[k])))
    for v, (j, k) in enumerate(inter):
        Pj, Qj = rows(j)
        edges.append(_EdgeRate(len(r_dims) + v, hermitian(Pj @ Sy @ Pj.conj().T), pad(Qj),
                               float(inter_caps[(j, k)])))
    return _Layout(dims, slices, inter, decoders, edges)


def _rates(lay: _Layout, omegas) -> dict:
    om = block_diag(omegas) if omegas else np.zeros((0, 0), dtype=complex)
    out = {}
    for c, dec in lay.decoders.items():
        extra = hermitian(dec.Q @ om @ dec.Q.conj().T)
        out[c] = logdet(dec.sig + extra) - logdet(dec.noise + extra)
    return out


@dataclass
class MultiCuSolution:
    """Optimized multi-CU configuration.

    ``config`` covers the routing edges that can carry information;
    ``inter_omegas`` maps ``(tail CU, head CU)`` to the exchange noise.
    """

    config: DprConfig
    inter_omegas: dict
    cu_rates: dict
    sum_rate: float
    record: OptimizationRecord = field(default_factory=OptimizationRecord)
    kept: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, int))


def inter_cu_capacities(active: ActiveEdgeSet, scale: float = 1.0) -> dict:
    """``(tail, head) -> capacity`` of the CU-to-CU links, times ``scale``."""
    return {(e.tail, e.head): scale * e.capacity for e in active.topology.inter_cu_edges}


def multi_cu_rates(config: DprConfig, inter_omegas: Mapping, ch: ChannelRealization,
                   groups: Mapping[int, Sequence[int]]) -> dict:
    """Per-CU rates ``I(x_group; observation)`` in bits for a fixed configuration.

    ``inter_omegas`` holds one covariance per active CU-to-CU link; links
    absent from it carry nothing.
    """
    _check_channel(ch, config.active)
    groups = _check_groups(groups, config.active.topology.cu_ids, len(ch.ms_antennas))
    caps = {key: 1.0 for key in inter_omegas}
    lay = _layout(config.active, ch, groups, caps, np.zeros(len(config.active.edges)), config.L)
    om = list(config.omegas) + [np.asarray(inter_omegas[key], dtype=complex) for key in lay.inter]
    for o, d in zip(om, lay.dims):
        if o.shape != (d, d):
            raise ShapeError("exchange covariance does not match the sender's aggregate signal")
    return _rates(lay, om)


class _MultiCuModel(_CompressionModel):
    def __init__(self, ch, active, ceff, groups, inter_caps):
        self.ch, self.active = ch, active
        self.lay = lay = _layout(active, ch, groups, inter_caps, ceff)
        order = active.edge_topological_order() + list(range(len(active.edges), len(lay.dims)))
        # a CU sees the relays' signals both directly and through its partner,
        # so the decoder covariances are singular; a relative floor of
        # DECODER_FLOOR (extra receiver noise far below the unit noise)
        # makes the fast precision form applicable; reported rates are exact
        super().__init__(lay.dims, lay.slices, list(lay.decoders.values()), lay.edges,
                         noise_cap(received_covariance(ch)), order, decoder_floor=DECODER_FLOOR)


def optimize_multi_cu(ch: ChannelRealization, active: ActiveEdgeSet, ceff, groups: Mapping[int, Sequence[int]],
                      inter_caps: Mapping | None = None, options: MMOptions | None = None) -> MultiCuSolution:
    """Maximize the sum of the CUs' rates over all quantization noises (``L = I``).

    Parameters
    ----------
    groups : CU id -> indices of the MSs it decodes (a partition of the MSs).
    inter_caps : ``(tail CU, head CU) -> capacity``; defaults to the
        topology's CU-to-CU links.  Zero-capacity links are left out.
    """
    _check_channel(ch, active)
    groups = _check_groups(groups, active.topology.cu_ids, len(ch.ms_antennas))
    inter_caps = inter_cu_capacities(active) if inter_caps is None else dict(inter_caps)
    opts = options or MMOptions()
    sub, kept, dropped, c_sub = _live_subset(active, ceff)
    model = _MultiCuModel(ch, sub, c_sub, groups, inter_caps)
    x, rec = _run(model, None, opts)
    om = model.omegas(x)
    n_r = len(sub.edges)
    cfg = DprConfig(sub, identity_maps(sub), om[:n_r])
    inter = {key: om[n_r + v] for v, key in enumerate(model.lay.inter)}
    rates = _rates(model.lay, om) if rec.status != INFEASIBLE else {c: 0.0 for c in model.lay.decoders}
    return MultiCuSolution(cfg, inter, rates, float(sum(rates.values())), rec, kept, dropped)
