"""Flat-fading uplink channel ``y = H x + z`` with seeded Rayleigh sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import ShapeError, hermitian
from .topology import Topology


@dataclass(frozen=True)
class ChannelRealization:
    """Per-RU channel blocks stacked in the topology's RU order.

    Attributes
    ----------
    ru_ids : RU ids, one row block each (CUs have no antennas).
    blocks : per-RU matrices ``H_i`` of shape ``(n_R,i, n_M)``.
    sigma_x : block-diagonal transmit covariance.
    ms_antennas : antenna count of every MS.
    """

    ru_ids: tuple[int, ...]
    blocks: tuple[np.ndarray, ...]
    sigma_x: np.ndarray
    ms_antennas: tuple[int, ...]

    def __post_init__(self):
        n = self.sigma_x.shape[0]
        if sum(self.ms_antennas) != n:
            raise ShapeError("MS antenna counts do not match the transmit covariance")
        for b in self.blocks:
            if b.shape[1] != n:
                raise ShapeError("channel block column count differs from the MS dimension")

    @property
    def n_tx(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def H(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, self.n_tx), dtype=complex)
        return np.vstack(self.blocks)

    def block(self, ru: int) -> np.ndarray:
        return self.blocks[self.ru_ids.index(ru)]

    def row_slices(self) -> dict[int, slice]:
        out, r = {}, 0
        for i, b in zip(self.ru_ids, self.blocks):
            out[i] = slice(r, r + b.shape[0])
            r += b.shape[0]
        return out

    def ms_slices(self) -> list[slice]:
        out, c = [], 0
        for n in self.ms_antennas:
            out.append(slice(c, c + n))
            c += n
        return out


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def sample_channel(topology: Topology, ms_antennas: Sequence[int] | int, seed,
                   p_tx: float = 1.0) -> ChannelRealization:
    """Draw i.i.d. CN(0,1) channel entries for every RU.

    Parameters
    ----------
    ms_antennas : antennas per MS, or an MS count (single-antenna MSs).
    seed : int or ``numpy.random.SeedSequence``
    p_tx : per-antenna transmit power; ``Sigma_x = p_tx I``.
    """
    if isinstance(ms_antennas, (int, np.integer)):
        ms_antennas = (1,) * int(ms_antennas)
    ms_antennas = tuple(int(n) for n in ms_antennas)
    if not ms_antennas or any(n <= 0 for n in ms_antennas):
        raise ValueError("MS antenna counts must be positive")
    rng = np.random.default_rng(_as_seed_sequence(seed))
    n_tx = sum(ms_antennas)
    ru_ids = topology.ru_ids
    rows = [topology.antennas(i) for i in ru_ids]
    draw = complex_gaussian(rng, (sum(rows), n_tx))
    blocks, r = [], 0
    for i, n in zip(ru_ids, rows):
        b = draw[r:r + n].copy()
        if topology.node(i).relay_only:
            b[:] = 0
        blocks.append(b)
        r += n
    sigma_x = float(p_tx) * np.eye(n_tx, dtype=complex)
    return ChannelRealization(ru_ids, tuple(blocks), sigma_x, ms_antennas)


def from_matrices(ru_ids: Sequence[int], blocks: Sequence, sigma_x, ms_antennas=None) -> ChannelRealization:
    """Wrap explicit channel blocks (tests and hand-built instances)."""
    sigma_x = hermitian(np.atleast_2d(sigma_x))
    blocks = tuple(np.atleast_2d(np.asarray(b, dtype=complex)).reshape(-1, sigma_x.shape[0]) for b in blocks)
    if ms_antennas is None:
        ms_antennas = (1,) * sigma_x.shape[0]
    return ChannelRealization(tuple(ru_ids), blocks, sigma_x, tuple(ms_antennas))


def received_covariance(ch: ChannelRealization) -> np.ndarray:
    """``H Sigma_x H^H + I`` over all RU antennas."""
    H = ch.H
    return hermitian(H @ ch.sigma_x @ H.conj().T + np.eye(H.shape[0]))


def ru_covariance(ch: ChannelRealization, ru: int) -> np.ndarray:
    """Marginal ``Sigma_{y_i}`` of one RU."""
    h = ch.block(ru)
    return hermitian(h @ ch.sigma_x @ h.conj().T + np.eye(h.shape[0]))
