import numpy as np
import pytest

from multihop_cran.channel import from_matrices, sample_channel
from multihop_cran.common import CAP_FACTOR, MMOptions
from multihop_cran.mf import check_flow_constraints, mf_compression_rate, mf_sum_rate, optimize_mf
from multihop_cran.scenarios import hierarchical_scenario, interference_free_rate

from conftest import chain, single_edge


def test_compression_rate_example():
    assert mf_compression_rate(1.0, 2.0) == pytest.approx(np.log2(3.0), abs=1e-12)
    assert mf_compression_rate(np.eye(2), 3 * np.eye(2)) == pytest.approx(4.0, abs=1e-12)


def test_sum_rate_example():
    ch = from_matrices([1], [[[1.0]]], np.eye(1))
    # y = x + z, omega = 1: log2((1 + 1 + 1) / 2)
    assert mf_sum_rate([np.eye(1)], ch) == pytest.approx(np.log2(1.5), abs=1e-12)


def test_flow_report():
    act = chain()
    ok = check_flow_constraints({(1, 0): 1.0, (1, 1): 1.0}, {1: 1.0}, act, [1.0, 1.0])
    assert ok.max == 0.0
    leak = check_flow_constraints({(1, 0): 1.0}, {1: 1.0}, act, [1.0, 1.0])
    assert leak.conservation == pytest.approx(0.0)
    assert leak.incoming == pytest.approx(1.0)
    over = check_flow_constraints({(1, 0): 2.0, (1, 1): 2.0}, {1: 2.0}, act, [1.0, 1.0])
    assert over.capacity == pytest.approx(1.0)


def test_single_edge_closed_form():
    # scalar y = h x + z over one edge of capacity C
    h, P, C = 1.3, 2.0, 1.5
    ch = from_matrices([1], [[[h]]], P * np.eye(1))
    sol = optimize_mf(ch, single_edge(capacity=C), [C])
    sy = h * h * P + 1.0
    om = sy / (2.0 ** C - 1.0)
    ref = np.log2((sy + om) / (1.0 + om))
    assert sol.sum_rate == pytest.approx(ref, abs=1e-5)
    assert sol.rates[1] == pytest.approx(C, abs=1e-5)


def test_relay_flows_respect_routing():
    sc = hierarchical_scenario(4, 1.0, 3, 0.0)
    ch = sc.channel(3)
    act = sc.active
    sol = optimize_mf(ch, act, sc.effective_capacities(act), MMOptions(max_iter=20))
    assert sol.flow_report.max < 1e-6
    sig = {i: ch.block(i) @ ch.sigma_x @ ch.block(i).conj().T + np.eye(1) for i in ch.ru_ids}
    # a discarded RU sits at the noise cap, which leaks log2(1 + 1/CAP_FACTOR) bits
    leak = np.log2(1.0 + 1.0 / CAP_FACTOR)
    for i, om in zip(ch.ru_ids, sol.omegas):
        assert mf_compression_rate(om, sig[i]) <= sol.rates[i] + 1e-6 + leak


def test_large_capacity_reaches_interference_free_rate():
    sc = hierarchical_scenario(3, 40.0, 2, 0.0)
    ch = sc.channel(1)
    sol = optimize_mf(ch, sc.active, sc.effective_capacities())
    ref = interference_free_rate(ch)
    assert sol.sum_rate <= ref + 1e-6
    assert sol.sum_rate >= 0.99 * ref


def test_zero_capacity_gives_zero_rate():
    sc = hierarchical_scenario(3, 0.0, 2, 0.0)
    sol = optimize_mf(sc.channel(0), sc.active, sc.effective_capacities())
    assert sol.sum_rate <= 1e-3


def test_dead_ru_is_discarded():
    # an RU whose only edge has no capacity contributes nothing
    sc = hierarchical_scenario(3, 1.0, 2, 0.0, deactivated=(1,))
    ch = sc.channel(2)
    sol = optimize_mf(ch, sc.active, sc.effective_capacities())
    assert sol.rates[1] == 0.0
    assert all(f == 0.0 for (i, _), f in sol.flows.items() if i == 1)


def test_warm_start_at_larger_capacity_does_not_lose_rate():
    sc = hierarchical_scenario(3, 1.0, 2, 0.0)
    ch = sc.channel(4)
    act = sc.active
    opts = MMOptions(max_iter=20)
    low = optimize_mf(ch, act, sc.effective_capacities(act), opts)
    high = optimize_mf(ch, act, 1.5 * sc.effective_capacities(act), opts, warm_start=low)
    assert high.sum_rate >= low.sum_rate - 1e-7


def test_deterministic():
    sc = hierarchical_scenario(3, 1.0, 2, 0.0)
    a = optimize_mf(sample_channel(sc.topology, 2, 7), sc.active, sc.effective_capacities())
    b = optimize_mf(sample_channel(sc.topology, 2, 7), sc.active, sc.effective_capacities())
    assert a.sum_rate == b.sum_rate
