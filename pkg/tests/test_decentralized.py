import numpy as np
import pytest

from multihop_cran.channel import complex_gaussian, from_matrices
from multihop_cran.common import MMOptions
from multihop_cran.decentralized import (EdgeStatistics, EffectiveChannel, SequencingError, edge_objective,
                                         edge_rate, effective_channel, optimize_dec_si, optimize_decentralized,
                                         optimize_edge, optimize_ff, optimize_ff_fb, sideinfo_covariances,
                                         waterfill_ff)
from multihop_cran.dpr import optimize_dpr_opt
from multihop_cran.linalg import logdet
from multihop_cran.scenarios import hierarchical_scenario
from multihop_cran.topology import RoutingPartition, active_edges
from multihop_cran.verify import random_effective_channel, relative_error, sample_sideinfo, waterfill_deviation

from conftest import STRATEGY_2, chain, two_layer_topology

OPTS = MMOptions(max_iter=20)


def _chain_channel(rng):
    return from_matrices([1, 2], [complex_gaussian(rng, (1, 2)), complex_gaussian(rng, (1, 2))], np.eye(2))


def test_leaf_effective_channel(rng):
    act = chain()
    ch = _chain_channel(rng)
    eff = effective_channel(1, act, {}, ch)
    assert np.allclose(eff.H, ch.block(1))
    assert np.allclose(eff.noise, np.eye(1))


def test_chain_effective_channel(rng):
    act = chain()
    ch = _chain_channel(rng)
    eff = effective_channel(2, act, {0: 0.5 * np.eye(1)}, ch)
    assert np.allclose(eff.H, np.vstack([ch.block(2), ch.block(1)]))
    assert np.allclose(eff.noise, np.diag([1.0, 1.5]))


def test_effective_channel_needs_upstream_covariances(rng):
    with pytest.raises(SequencingError):
        effective_channel(2, chain(), {}, _chain_channel(rng))


def test_waterfill_scalar():
    eff = EffectiveChannel(np.eye(1), np.eye(1))
    om = waterfill_ff(eff, np.eye(1), 1.0)
    assert om[0, 0].real == pytest.approx(2.0, abs=1e-9)


def test_waterfill_skips_useless_dimension():
    eff = EffectiveChannel(np.array([[2.0], [0.0]]), np.eye(2))
    om = waterfill_ff(eff, np.eye(1), 1.0)
    assert om[1, 1].real > 1e5
    Sr = np.diag([5.0, 1.0])
    assert logdet(Sr + om) - logdet(om) == pytest.approx(1.0, abs=1e-9)


def test_waterfill_zero_capacity_discards_everything():
    eff = EffectiveChannel(np.eye(2), np.eye(2))
    om = waterfill_ff(eff, np.eye(2), 0.0)
    assert np.all(np.linalg.eigvalsh(om) > 1e5)


def test_waterfill_against_generic_solver():
    rng = np.random.default_rng(31)
    for _ in range(10):
        rate_err, obj_err = waterfill_deviation(*random_effective_channel(rng))
        assert rate_err < 1e-6 and obj_err < 1e-4


def _random_stats(rng, d=2):
    A = complex_gaussian(rng, (d, 2 * d))
    Sr = A @ A.conj().T + np.eye(d)
    Sr_v = 0.5 * Sr + 0.1 * np.eye(d)
    return EdgeStatistics(Sr, Sr_v, 0.3 * Sr_v)


def test_side_information_lowers_the_rate(rng):
    for _ in range(20):
        st = _random_stats(rng)
        om = np.eye(2) * rng.uniform(0.1, 3)
        assert edge_rate(st, om, side_info=True) <= edge_rate(st, om) + 1e-12


def test_chain_rule_of_side_information(rng):
    # joint Gaussian (r, v) with v = r + w:  I(r; u, v) = I(r; v) + I(r; u | v)
    for _ in range(10):
        d = 2
        A = complex_gaussian(rng, (d, d))
        Sr = A @ A.conj().T + np.eye(d)
        W = np.eye(d) * rng.uniform(0.2, 2)
        om = np.eye(d) * rng.uniform(0.2, 2)
        Sv = Sr + W
        Sr_v = Sr - Sr @ np.linalg.solve(Sv, Sr)
        st = EdgeStatistics(Sr, Sr_v, Sr_v)
        i_v = logdet(Sr) - logdet(Sr_v)
        J = np.block([[Sr + om, Sr], [Sr, Sv]])
        Ju = np.block([[om, np.zeros((d, d))], [np.zeros((d, d)), W]])
        i_uv = logdet(J) - logdet(Ju)
        assert abs(i_uv - (i_v + edge_rate(st, om, side_info=True))) < 1e-9


def test_optimize_edge_respects_capacity(rng):
    for _ in range(5):
        st = _random_stats(rng)
        om, rec = optimize_edge(st, 1.0, options=OPTS)
        assert edge_rate(st, om) <= 1.0 + 1e-6
        assert rec.monotone and rec.residual < 1e-6
        om_si, _ = optimize_edge(st, 1.0, side_info_rate=True, options=OPTS)
        assert edge_rate(st, om_si, side_info=True) <= 1.0 + 1e-6
        assert edge_objective(st, om_si) >= edge_objective(st, om) - 1e-6


def test_sideinfo_covariances_match_sampling(rng):
    act = _example(1.0)
    topo = act.topology
    ch = from_matrices(topo.ru_ids, [complex_gaussian(rng, (1, 2)) for _ in topo.ru_ids], np.eye(2))
    omegas = {k: np.eye(1) * (0.5 + k) for k in range(len(act.edges))}
    side = [act.index(3, 5), act.index(4, 5)]
    model = sideinfo_covariances(1, side, act, omegas, ch)
    sample = sample_sideinfo(1, side, act, omegas, ch, 200_000, rng)
    for s, m in zip(sample, model):
        if np.linalg.norm(m) > 1e-12:
            assert relative_error(s, m) < 0.02


def _example(cap):
    return active_edges(two_layer_topology(cap), RoutingPartition(STRATEGY_2))


def test_si_equals_ff_fb_without_side_information(rng):
    act = chain(capacity=1.0)
    ch = _chain_channel(rng)
    a = optimize_ff_fb(ch, act, [1.0, 1.0], options=OPTS)
    b = optimize_dec_si(ch, act, [1.0, 1.0], options=OPTS)
    assert a.sum_rate == pytest.approx(b.sum_rate, abs=1e-9)


def test_decompression_before_optimization_is_rejected(rng):
    act = _example(1.0)
    topo = act.topology
    ch = from_matrices(topo.ru_ids, [complex_gaussian(rng, (1, 2)) for _ in topo.ru_ids], np.eye(2))
    ceff = np.ones(len(act.edges))
    # edge 1->5 is optimized first but would decode after 4->5
    order = {5: (act.index(4, 5), act.index(1, 5), act.index(3, 5))}
    with pytest.raises(SequencingError):
        optimize_dec_si(ch, act, ceff, decompression_orders=order, options=OPTS)
    # the matching layer order makes it valid
    layers = [(4, 1, 3, 2), (5,)]
    ok = optimize_dec_si(ch, act, ceff, layer_orders=layers, decompression_orders=order, options=OPTS)
    assert np.all(ok.backhaul_rates >= 0)


def test_bad_orders_are_rejected(rng):
    act = _example(1.0)
    ch = from_matrices(act.topology.ru_ids, [complex_gaussian(rng, (1, 2)) for _ in range(4)], np.eye(2))
    with pytest.raises(ValueError):
        optimize_ff(ch, act, np.ones(3), layer_orders=[(1, 2, 3), (5,)])
    with pytest.raises(ValueError):
        optimize_decentralized(ch, act, np.ones(3), variant="bogus")


def test_ff_uses_capacity_and_variants_are_ordered():
    sc = hierarchical_scenario(4, 1.0, 4, 10.0)
    act = sc.active
    ceff = sc.effective_capacities(act)
    ch = sc.channel(11)
    ff = optimize_ff(ch, act, ceff)
    assert np.allclose(ff.backhaul_rates, ceff[ff.kept], atol=1e-6)
    fb = optimize_ff_fb(ch, act, ceff, options=OPTS)
    assert np.all(fb.backhaul_rates <= ceff[fb.kept] + 1e-6)


@pytest.mark.parametrize("variant", ["ff", "ff_fb"])
def test_decentralized_below_warm_started_joint_optimum(variant):
    sc = hierarchical_scenario(4, 1.0, 3, 0.0)
    act = sc.active
    ceff = sc.effective_capacities(act)
    for seed in range(3):
        ch = sc.channel(seed)
        # a hair below capacity so the decentralized point is strictly feasible
        dec = optimize_decentralized(ch, act, ceff * (1 - 1e-6), variant, options=OPTS)
        opt = optimize_dpr_opt(ch, act, ceff, OPTS, warm_start=dec.config)
        assert dec.sum_rate <= opt.sum_rate + 1e-6
