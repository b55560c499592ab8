import numpy as np
import pytest

from multihop_cran.channel import complex_gaussian, from_matrices
from multihop_cran.common import MMOptions
from multihop_cran.dpr import (DprConfig, dpr_backhaul_rate, dpr_backhaul_rates, dpr_not_opt, dpr_sum_rate,
                               identity_maps, identity_transform, optimize_dpr_opt, optimize_dpr_rank,
                               transfer_matrices)
from multihop_cran.linalg import ShapeError
from multihop_cran.scenarios import hierarchical_scenario, interference_free_rate
from multihop_cran.verify import random_dag, random_maps, transfer_error

from conftest import chain, single_edge

OPTS = MMOptions(max_iter=20)


def test_transfer_single_edge():
    L = [np.array([[2.0, 1.0], [0.0, 1.0]], dtype=complex)]
    tm = transfer_matrices(single_edge(antennas=2), L)
    assert np.allclose(tm.T, L[0])
    assert np.allclose(tm.Tt, np.eye(2))


def test_transfer_chain_with_identity_maps():
    tm = transfer_matrices(chain())
    # u_2 = [y_2 + q_2a; y_1 + q_1 + q_2b]
    assert np.allclose(tm.T, [[0, 1], [1, 0]])
    assert np.allclose(tm.Tt, [[0, 1, 0], [1, 0, 1]])
    assert tm.node_dims == {1: 1, 2: 2, 3: 2}


def test_transfer_matches_propagation():
    rng = np.random.default_rng(21)
    for _ in range(10):
        act = random_dag(rng)
        assert transfer_error(act, random_maps(rng, act), rng, draws=5) < 1e-9


def _scalar_channel(h=1.0, P=1.0):
    return from_matrices([1], [[[h]]], P * np.eye(1))


def test_scalar_sum_rate_and_backhaul_rate():
    act = single_edge()
    ch = _scalar_channel()
    cfg = DprConfig(act, [np.eye(1)], [np.eye(1)])
    assert dpr_sum_rate(cfg, ch) == pytest.approx(np.log2(1.5), abs=1e-9)
    cfg = DprConfig(act, [np.eye(1)], [2 * np.eye(1)])
    assert dpr_backhaul_rate(0, cfg, ch) == pytest.approx(1.0, abs=1e-12)


def test_config_shape_checks():
    with pytest.raises(ShapeError):
        DprConfig(single_edge(), [np.eye(1)], [np.eye(2)])
    with pytest.raises(ShapeError):
        DprConfig(single_edge(), [], [])


def test_identity_transform_scalar():
    cfg = DprConfig(single_edge(), [2 * np.eye(1)], [np.eye(1)])
    new = identity_transform(cfg)
    assert new.omegas[0][0, 0].real == pytest.approx(0.25, abs=1e-14)
    assert np.allclose(new.L[0], np.eye(1))


def test_identity_transform_keeps_rates():
    rng = np.random.default_rng(22)
    act = chain(antennas=(2, 1))
    ch = from_matrices(act.topology.ru_ids, [complex_gaussian(rng, (2, 2)), complex_gaussian(rng, (1, 2))],
                       np.eye(2))
    L = random_maps(rng, act, square=True)
    om = [np.eye(l.shape[0]) * rng.uniform(0.5, 2) for l in L]
    cfg = DprConfig(act, L, om)
    new = identity_transform(cfg)
    assert abs(dpr_sum_rate(new, ch) - dpr_sum_rate(cfg, ch)) < 1e-8
    assert np.max(np.abs(dpr_backhaul_rates(new, ch) - dpr_backhaul_rates(cfg, ch))) < 1e-8


def test_unitary_rotation_of_the_last_edge():
    rng = np.random.default_rng(23)
    act = chain()
    ch = from_matrices([1, 2], [complex_gaussian(rng, (1, 2)), complex_gaussian(rng, (1, 2))], np.eye(2))
    L = identity_maps(act)
    om = [np.eye(1) * 0.7, np.diag([0.5, 2.0]).astype(complex)]
    U, _ = np.linalg.qr(complex_gaussian(rng, (2, 2)))
    base = DprConfig(act, L, om)
    rot = DprConfig(act, [L[0], U @ L[1]], [om[0], U @ om[1] @ U.conj().T])
    assert dpr_sum_rate(rot, ch) == pytest.approx(dpr_sum_rate(base, ch), abs=1e-10)
    assert np.allclose(dpr_backhaul_rates(rot, ch), dpr_backhaul_rates(base, ch), atol=1e-10)


def test_not_opt_uses_capacity_exactly():
    rng = np.random.default_rng(24)
    act = chain(capacity=2.0)
    ch = from_matrices([1, 2], [complex_gaussian(rng, (1, 2)), complex_gaussian(rng, (1, 2))], np.eye(2))
    sol = dpr_not_opt(ch, act, [2.0, 2.0])
    assert np.max(np.abs(sol.backhaul_rates - 2.0)) < 1e-8
    for om in sol.config.omegas:
        assert np.allclose(om, om[0, 0] * np.eye(om.shape[0]))


def test_single_edge_closed_form():
    h, P, C = 0.8, 3.0, 1.2
    ch = _scalar_channel(h, P)
    sol = optimize_dpr_opt(ch, single_edge(capacity=C), [C], OPTS)
    sy = h * h * P + 1.0
    om = sy / (2.0 ** C - 1.0)
    assert sol.sum_rate == pytest.approx(np.log2((sy + om) / (1.0 + om)), abs=1e-5)
    assert sol.backhaul_rates[0] <= C + 1e-6


def test_hierarchical_opt_beats_baseline_and_respects_capacities():
    sc = hierarchical_scenario(4, 1.0, 3, 0.0)
    act = sc.active
    ceff = sc.effective_capacities(act)
    ch = sc.channel(5)
    opt = optimize_dpr_opt(ch, act, ceff, OPTS)
    base = dpr_not_opt(ch, act, ceff)
    assert opt.sum_rate >= base.sum_rate - 1e-6
    assert np.all(opt.backhaul_rates <= ceff[opt.kept] * (1 + 1e-6) + 1e-6)
    assert opt.sum_rate <= interference_free_rate(ch) + 1e-9


def test_full_rank_is_no_worse_than_step_one():
    sc = hierarchical_scenario(3, 1.0, 2, 0.0)
    act = sc.active
    ceff = sc.effective_capacities(act)
    ch = sc.channel(6)
    first = optimize_dpr_opt(ch, act, ceff, OPTS)
    full = optimize_dpr_rank(ch, act, ceff, 10, OPTS)
    assert full.sum_rate >= first.sum_rate - 1e-6
    one = optimize_dpr_rank(ch, act, ceff, 1, OPTS)
    assert all(l.shape[0] == 1 for l in one.config.L)
    assert np.all(one.backhaul_rates <= ceff[one.kept] + 1e-6)


def test_large_capacity_reaches_interference_free_rate():
    sc = hierarchical_scenario(3, 40.0, 2, 0.0)
    ch = sc.channel(1)
    sol = optimize_dpr_opt(ch, sc.active, sc.effective_capacities())
    assert sol.sum_rate >= 0.99 * interference_free_rate(ch)


def test_zero_capacity_edges_are_dropped():
    sc = hierarchical_scenario(4, 1.0, 3, 0.0, deactivated=(6,))
    act = sc.active
    sol = optimize_dpr_opt(sc.channel(2), act, sc.effective_capacities(act), OPTS)
    dead = {act.index(6, 8), act.index(2, 6)}
    assert dead <= set(sol.dropped.tolist())
    full = sol.full_config(act, sc.channel(2))
    assert dpr_sum_rate(full, sc.channel(2)) == pytest.approx(sol.sum_rate, abs=1e-4)


def test_warm_start_does_not_lose_rate():
    sc = hierarchical_scenario(3, 1.0, 2, 0.0)
    act = sc.active
    ceff = sc.effective_capacities(act)
    ch = sc.channel(9)
    base = dpr_not_opt(ch, act, 0.9 * ceff)
    warm = optimize_dpr_opt(ch, act, ceff, OPTS, warm_start=base.config)
    assert warm.sum_rate >= base.sum_rate - 1e-9
