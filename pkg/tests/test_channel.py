import numpy as np
import pytest

from multihop_cran.channel import from_matrices, received_covariance, ru_covariance, sample_channel
from multihop_cran.topology import CU, Edge, Node, Topology


def _topo(relay=()):
    nodes = [Node(1, antennas=2), Node(2, relay_only=2 in relay), Node(3, antennas=3), Node(4, CU)]
    return Topology(nodes, [Edge(1, 2, 1.0), Edge(2, 4, 1.0), Edge(3, 4, 1.0)])


def test_same_seed_same_channel():
    a = sample_channel(_topo(), 3, 42)
    b = sample_channel(_topo(), 3, 42)
    c = sample_channel(_topo(), 3, 43)
    assert np.array_equal(a.H, b.H)
    assert not np.allclose(a.H, c.H)


def test_shapes_and_power():
    ch = sample_channel(_topo(), (2, 1), 0, p_tx=10.0)
    assert ch.H.shape == (6, 3)
    assert [b.shape for b in ch.blocks] == [(2, 3), (1, 3), (3, 3)]
    assert np.allclose(ch.sigma_x, 10.0 * np.eye(3))
    assert ch.ms_slices() == [slice(0, 2), slice(2, 3)]


def test_entries_have_unit_variance():
    topo = Topology([Node(1, antennas=200), Node(2, CU)], [Edge(1, 2, 1.0)])
    H = sample_channel(topo, 200, 1).H
    assert abs(np.mean(np.abs(H) ** 2) - 1.0) < 0.02
    assert abs(np.mean(H)) < 0.02
    # circular symmetry: E[h^2] = 0
    assert abs(np.mean(H ** 2)) < 0.02


def test_relay_only_rows_are_zero():
    ch = sample_channel(_topo(relay=(2,)), 2, 5)
    assert np.all(ch.block(2) == 0)
    assert np.any(ch.block(1) != 0)


def test_received_covariance_examples():
    ch = from_matrices([1, 2], [[[1.0, 0.0]], [[1.0, 1.0]]], np.eye(2))
    assert np.allclose(received_covariance(ch), [[2, 1], [1, 3]])
    assert np.allclose(ru_covariance(ch, 2), [[3.0]])
    ch = from_matrices([1], [[[2.0]]], 0.5 * np.eye(1))
    assert received_covariance(ch)[0, 0] == pytest.approx(3.0)


def test_received_covariance_matches_sampling():
    ch = sample_channel(_topo(), 2, 9)
    rng = np.random.default_rng(0)
    n = 200_000
    x = (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))) * np.sqrt(0.5)
    z = (rng.standard_normal((6, n)) + 1j * rng.standard_normal((6, n))) * np.sqrt(0.5)
    y = ch.H @ x + z
    S = y @ y.conj().T / n
    ref = received_covariance(ch)
    assert np.linalg.norm(S - ref) / np.linalg.norm(ref) < 0.02


def test_invalid_ms_antennas():
    with pytest.raises(ValueError):
        sample_channel(_topo(), (1, 0), 0)
