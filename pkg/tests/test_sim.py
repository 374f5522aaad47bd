import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graph_from_edges
from whittlenet.dynamics import UserParams, energy_cost
from whittlenet.policies import AlohaPolicy, IdlePolicy, MWSPolicy, SlotDecision, WhittlePolicy
from whittlenet.sim import (SimConfig, build_arrival_regime, build_psi_regime, run_simulation,
                            seed_streams)
from whittlenet.topology import generate_geometric_graph


class AlwaysActive:
    name = "always"

    def scheduler(self, g, users, rng=None):
        return lambda q, t: SlotDecision.of(i for i in range(g.n_users) if q[i] > 0)


def test_zero_horizon():
    g = graph_from_edges(2, [])
    m = run_simulation(g, [UserParams()] * 2, IdlePolicy(), SimConfig(horizon=0, warmup=0))
    assert m.avg_cost_per_slot == 0 and m.avg_drops_per_slot == 0
    assert not m.per_user_cost.any()


def test_no_arrivals_costs_nothing():
    g = generate_geometric_graph(5, 0.6, seed=0)
    users = [UserParams(arrival_mean=0.0)] * 5
    for pol in (WhittlePolicy(), AlohaPolicy(), MWSPolicy(), IdlePolicy()):
        m = run_simulation(g, users, pol, SimConfig(horizon=50, warmup=5))
        assert m.avg_cost_per_slot == 0 and m.avg_drops_per_slot == 0


def test_scripted_single_user_trace():
    p = UserParams(holding_cost=2.0, buffer_cap=6, tx_cap=3, energy_linear=1.0,
                   energy_quadratic=0.5)
    arrivals = np.array([4, 0, 5, 2, 7, 1, 0, 3, 3, 0])
    g = graph_from_edges(1, [])
    m = run_simulation(g, [p], AlwaysActive(), SimConfig(horizon=10, warmup=0, trace=True),
                       arrivals=arrivals[:, None])
    # hand-rolled evolution
    x, costs, drops = 0, [], []
    for a in arrivals:
        z = min(x, 3)
        costs.append(2.0 * x + (z + 0.5 * z * z if x > 0 else 0.0))
        pre = x - z + a
        drops.append(max(pre - 6, 0))
        x = min(pre, 6)
    np.testing.assert_array_equal(m.cost_series, costs)
    np.testing.assert_array_equal(m.drop_series, drops)
    assert m.avg_cost_per_slot == pytest.approx(np.mean(costs))
    assert m.final_queues[0] == x


def test_warmup_excluded():
    g = graph_from_edges(1, [])
    p = UserParams(holding_cost=1.0, buffer_cap=5)
    arrivals = np.array([[5], [0], [0], [0]])
    m = run_simulation(g, [p], IdlePolicy(), SimConfig(horizon=4, warmup=1, trace=True),
                       arrivals=arrivals)
    np.testing.assert_array_equal(m.cost_series, [5, 5, 5])


def test_deterministic_and_paired_arrivals():
    g = generate_geometric_graph(8, 0.5, seed=4)
    users = [UserParams(buffer_cap=30, arrival_mean=1.5, tx_cap=4)] * 8
    cfg = SimConfig(horizon=300, warmup=20, master_seed=11, trace=True)
    a = run_simulation(g, users, AlohaPolicy(0.4), cfg)
    b = run_simulation(g, users, AlohaPolicy(0.4), cfg)
    assert np.array_equal(a.cost_series, b.cost_series)
    assert a.avg_cost_per_slot == b.avg_cost_per_slot
    c = run_simulation(g, users, MWSPolicy(), cfg)
    assert np.array_equal(a.arrivals_total, c.arrivals_total)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), pol=st.sampled_from(["aloha", "mws", "whittle", "idle"]))
def test_conservation_and_decomposition(seed, pol):
    g = generate_geometric_graph(6, 0.5, seed=seed)
    rng = np.random.default_rng(seed)
    users = [UserParams(buffer_cap=15, tx_cap=int(rng.integers(1, 6)),
                        arrival_mean=float(rng.uniform(0.2, 3))) for _ in range(6)]
    policy = {"aloha": AlohaPolicy(0.5), "mws": MWSPolicy(), "whittle": WhittlePolicy(),
              "idle": IdlePolicy()}[pol]
    cfg = SimConfig(horizon=200, warmup=10, master_seed=seed,
                    initial_queues=tuple(int(v) for v in rng.integers(0, 16, 6)), trace=True)
    m = run_simulation(g, users, policy, cfg)
    np.testing.assert_array_equal(m.arrivals_total,
                                  m.served_total + m.dropped_total
                                  + m.final_queues - m.initial_queues)
    assert (m.final_queues >= 0).all() and (m.final_queues <= 15).all()
    assert m.avg_cost_per_slot == pytest.approx(m.avg_holding_per_slot + m.avg_energy_per_slot)
    assert m.avg_cost_per_slot == pytest.approx(m.cost_series.mean())
    assert min(m.avg_holding_per_slot, m.avg_energy_per_slot, m.avg_drops_per_slot) >= 0
    assert m.per_user_cost.sum() == pytest.approx(m.avg_cost_per_slot)


def test_idle_policy_drops_match_arrivals():
    g = graph_from_edges(2, [])
    users = [UserParams(buffer_cap=10, arrival_mean=m) for m in (1.0, 2.5)]
    m = run_simulation(g, users, IdlePolicy(), SimConfig(horizon=20_000, warmup=200))
    assert m.avg_energy_per_slot == 0
    sigma = np.sqrt(3.5 / 19_800)
    assert abs(m.avg_drops_per_slot - 3.5) <= 3 * sigma


def test_collision_energy_flag():
    g = graph_from_edges(2, [(0, 1)])
    users = [UserParams(buffer_cap=10, energy_linear=2.0)] * 2
    arrivals = np.zeros((5, 2), dtype=int)
    init = (4, 4)
    on = run_simulation(g, users, AlohaPolicy(1.0),
                        SimConfig(horizon=5, warmup=0, initial_queues=init), arrivals)
    off = run_simulation(g, users, AlohaPolicy(1.0),
                         SimConfig(horizon=5, warmup=0, initial_queues=init,
                                   collision_energy=False), arrivals)
    # p = 1 on an edge: every slot collides, no service
    assert (on.final_queues == 4).all() and on.served_total.sum() == 0
    assert on.avg_energy_per_slot == pytest.approx(2 * float(energy_cost(users[0], 4)))
    assert off.avg_energy_per_slot == 0


def test_input_validation():
    g = graph_from_edges(2, [])
    with pytest.raises(ValueError):
        run_simulation(g, [UserParams()], IdlePolicy(), SimConfig(horizon=5, warmup=0))
    with pytest.raises(ValueError):
        SimConfig(horizon=5, warmup=6)
    with pytest.raises(ValueError):
        SimConfig(horizon=-1, warmup=0)
    with pytest.raises(ValueError):
        run_simulation(g, [UserParams(buffer_cap=3)] * 2, IdlePolicy(),
                       SimConfig(horizon=5, warmup=0, initial_queues=(4, 0)))


def test_arrival_regimes():
    rng = np.random.default_rng(0)
    for regime, k in (("default", 10), ("small", 15), ("large", 6)):
        draws = [build_arrival_regime(regime, 100, rng) for _ in range(500)]
        assert min(draws) >= 1 and max(draws) <= 100 / k
        assert max(draws) - min(draws) > 0.5 * (100 / k - 1)
    ints = {build_arrival_regime("small", 100, rng, integer=True) for _ in range(300)}
    assert ints == {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}
    with pytest.raises(ValueError):
        build_arrival_regime("huge", 100, rng)
    a = build_arrival_regime("default", 100, np.random.default_rng(5))
    assert a == build_arrival_regime("default", 100, np.random.default_rng(5))


def test_psi_regimes():
    rng = np.random.default_rng(1)
    caps = {build_psi_regime("restricted", 100, rng) for _ in range(2000)}
    assert caps == set(range(1, 21))
    assert build_psi_regime("unrestricted", 100, rng) is None
    # the unrestricted draw consumes the same randomness as the restricted one
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    build_psi_regime("restricted", 100, r1)
    build_psi_regime("unrestricted", 100, r2)
    assert r1.random() == r2.random()
    with pytest.raises(ValueError):
        build_psi_regime("partial", 100, rng)


def test_seed_streams_independent_of_policy_count():
    a = seed_streams(3, 4)["arrivals"]
    b = seed_streams(3, 4)["arrivals"]
    assert [s.entropy for s in a] == [s.entropy for s in b]
    assert np.random.default_rng(a[0]).random() != np.random.default_rng(a[1]).random()
