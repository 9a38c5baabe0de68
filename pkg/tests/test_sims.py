"""Simulation models: construction rules and derived oracle checks."""

import numpy as np
import pytest

from modelkit import (DataSet, ModelError, Params, RandomStream,
                      DemandConfig, NetworkSimConfig, SearchConfig,
                      demand_model, estimate, fuzz_weibull_posterior,
                      network_sim_model, pmf_model, search_model,
                      weibull_model)
from modelkit import model as core
from modelkit.data import EMPTY_PARAMS
from modelkit.sims import consumption


def test_network_two_agent_link_probability():
    # P(link) = E[1/(1 + |x1 - x2|)], x_i ~ N(0,1): 0.543631 by quadrature
    m = network_sim_model(NetworkSimConfig(n_agents=2))
    rows = core.draw(m, EMPTY_PARAMS, RandomStream(41), 30000)
    assert set(map(tuple, np.unique(rows, axis=0))) <= {(0.0, 0.0), (1.0, 1.0)}
    p = float(np.mean(rows[:, 0] == 1.0))
    assert p == pytest.approx(0.5436307758279354, abs=0.02)


def test_network_output_sorted_and_bounded():
    m = network_sim_model()
    rows = core.draw(m, EMPTY_PARAMS, RandomStream(42), 200)
    assert np.all(np.diff(rows, axis=1) <= 0)
    assert rows.max() <= 9 and rows.min() >= 0


def test_network_total_links_even():
    m = network_sim_model()
    rows = core.draw(m, EMPTY_PARAMS, RandomStream(43), 500)
    assert np.all(rows.sum(axis=1) % 2 == 0)


def test_network_sigma_free_parameter():
    m = network_sim_model(sigma_free=True)
    assert m.param_shape.labels() == ["sigma"]
    sparse = core.draw(m, Params.scalars(sigma=40.0), RandomStream(44), 200)
    dense = core.draw(m, Params.scalars(sigma=0.05), RandomStream(44), 200)
    assert sparse.mean() < dense.mean()


def test_network_config_validation():
    with pytest.raises(ModelError):
        NetworkSimConfig(n_agents=1)
    with pytest.raises(ModelError):
        NetworkSimConfig(sigma=0.0)


def test_consumption_printed_optimum():
    q1, q2 = consumption(0.5, 5.0, 1.0)
    assert (q1, q2) == (4.0, 1.0)


def test_consumption_affordability_clamp():
    # interior optimum 16 is unaffordable at b=3, p=2
    q1, q2 = consumption(0.5, 3.0, 2.0)
    assert (q1, q2) == (1.5, 0.0)


def test_consumption_never_overspends():
    rng = np.random.default_rng(9)
    alpha = rng.uniform(0.01, 0.99, size=500)
    b = rng.uniform(0.0, 10.0, size=500)
    q1, q2 = consumption(alpha, b, 0.7)
    assert np.all(0.7 * q1 + q2 <= b + 1e-9)
    assert np.all(q1 >= 0) and np.all(q2 >= 0)


def test_demand_draw_shape_and_determinism():
    m = demand_model(DemandConfig(n_agents=50))
    a = core.draw(m, m.param_shape, RandomStream(4), 3)
    b = core.draw(m, m.param_shape, RandomStream(4), 3)
    assert a.shape == (3, 2)
    assert np.array_equal(a, b)


def test_search_forced_adjacency():
    m = search_model(SearchConfig(grid_w=2, grid_h=1, n_pairs=1))
    rows = core.draw(m, EMPTY_PARAMS, RandomStream(5), 10)
    assert np.all(rows == 1.0)


def test_search_sparser_grid_pairs_slower():
    crowded = search_model(SearchConfig(grid_w=8, grid_h=8, n_pairs=20))
    sparse = search_model(SearchConfig(grid_w=30, grid_h=30, n_pairs=20))
    means = []
    for m in (crowded, sparse):
        t = core.draw(m, EMPTY_PARAMS, RandomStream(51), 3)
        means.append(t.mean())
    assert means[1] > means[0]


def test_search_times_positive_integers():
    m = search_model(SearchConfig(grid_w=10, grid_h=10, n_pairs=5))
    t = core.draw(m, EMPTY_PARAMS, RandomStream(52), 5)
    assert np.all(t >= 1)
    assert np.all(t == np.round(t))


def test_search_capacity_validation():
    with pytest.raises(ModelError, match="grid too small"):
        SearchConfig(grid_w=2, grid_h=2, n_pairs=3)


def test_fuzz_point_mass_priors():
    side = pmf_model(DataSet(np.array([[8.0]])))
    pairs = pmf_model(DataSet(np.array([[4.0]])))
    cloud = fuzz_weibull_posterior(side, pairs, reps=5, s=RandomStream(6))
    sup = cloud.settings["pmf_support"]
    assert sup.rows.shape == (5, 2)
    assert np.all(sup.rows > 0)
    assert sup.names == ["lambda", "k"]
