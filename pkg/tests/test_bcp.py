import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ndslab.bcp import (DiscretePath, RbmParams, batch_means, lower_bound_estimate, simulate_rbm,
                        simulate_rbm_refinement, skorohod_map, trapezoid)
from ndslab.cost import CostSpec, Minimizer, c_star, nonconvex_example


def test_skorohod_identity_on_nonnegative_ramp():
    z = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(skorohod_map(z), z)


def test_skorohod_full_reflection():
    z = -np.linspace(0, 1, 11)
    np.testing.assert_allclose(skorohod_map(z), 0.0, atol=0)


def test_skorohod_example():
    z, expected = oracles.FROZEN_SKOROHOD_EXAMPLE
    assert list(skorohod_map(np.array(z))) == list(expected)
    path = skorohod_map(DiscretePath(0.5, np.array(z)))
    assert isinstance(path, DiscretePath) and path.horizon == 1.5


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=60))
def test_skorohod_properties(z):
    z = np.array(z)
    g = skorohod_map(z)
    push = g - z
    assert (g >= -1e-12).all()
    assert (np.diff(push) >= -1e-12).all()
    assert push[0] == pytest.approx(max(-z[0], 0.0))
    # the push only grows at steps where the reflected path touches zero
    grow = np.flatnonzero(np.diff(push) > 1e-12) + 1
    assert np.all(np.abs(g[grow]) <= 1e-9)
    np.testing.assert_allclose(g, oracles.skorohod_double_loop(z), atol=1e-12)


def test_rbm_params_validation():
    with pytest.raises(ValueError):
        RbmParams(0.0, 0.0)
    with pytest.raises(ValueError):
        RbmParams(0.0, 1.0, u=1.0, dt=0.1)
    with pytest.raises(ValueError):
        RbmParams(0.0, 1.0, x0=-1.0)


def test_rbm_degenerate_diffusion():
    p = simulate_rbm(RbmParams(-1.0, 1e-12, 0.0, 10.0, 1e-2), seed=0)
    assert np.abs(p.values).max() < 1e-4


def test_rbm_deterministic_and_nonnegative():
    params = RbmParams(0.3, 2.0, 1.0, 5.0, 1e-3)
    a, b = simulate_rbm(params, 4), simulate_rbm(params, 4)
    np.testing.assert_array_equal(a.values, b.values)
    assert (a.values >= 0).all()
    assert a.values[0] == 1.0


def test_rbm_refinement_shares_the_path():
    coarse, fine = simulate_rbm_refinement(RbmParams(-1.0, 1.0, 0.0, 10.0, 0.01), 2)
    assert coarse.dt == 0.01 and fine.dt == 0.005
    # the coarse path at grid points is the fine path there, up to the finer push
    assert np.all(fine.values[::2] >= coarse.values - 1e-12)
    assert np.abs(fine.values[::2] - coarse.values).max() < 0.2


def test_rbm_stationary_mean_short():
    p = simulate_rbm(RbmParams(-1.0, 1.0, 0.0, 2000.0, 1e-2), 5)
    bm = batch_means(p.values, p.dt, 40)
    assert abs(bm["mean"] - oracles.rbm_stationary_mean(-1.0, 1.0)) < 4 * bm["se"] + 0.01


def test_trapezoid():
    assert trapezoid(np.array([0.0, 1.0, 2.0]), 0.5) == pytest.approx(1.0)


def test_lower_bound_constant_cost():
    const = CostSpec.custom(lambda q: 2.5, name="const")
    est = lower_bound_estimate(const, (0.6, 0.8), RbmParams(0.0, 1.0, 0.0, 3.0, 0.03), reps=5)
    assert est["mean"] == pytest.approx(7.5, rel=1e-12)
    assert est["sd"] == pytest.approx(0.0, abs=1e-12)


def test_lower_bound_linear_stationary():
    theta = (2 / math.sqrt(5), 1 / math.sqrt(5))
    cost = CostSpec.linear([1.0, 1.0])
    slope = c_star(cost, theta, 1.0)
    u = 1000.0
    est = lower_bound_estimate(cost, theta, RbmParams(-1.0, 1.0, 0.0, u, 0.02), reps=20, seed=3)
    assert abs(est["mean"] / u - slope * 0.5) < 3 * est["se"] / u


def test_lower_bound_dt_halving_stable():
    theta = (2 / math.sqrt(5), 1 / math.sqrt(5))
    cost = CostSpec.power([1.0, 1.0])
    a = lower_bound_estimate(cost, theta, RbmParams(0.0, 2.56, 0.0, 10.0, 2e-3), reps=400, seed=1)
    b = lower_bound_estimate(cost, theta, RbmParams(0.0, 2.56, 0.0, 10.0, 1e-3), reps=400, seed=1)
    assert abs(a["mean"] - b["mean"]) < max(a["se"], b["se"])


def test_explicit_solution_consistency():
    theta = (1 / math.sqrt(2), 1 / math.sqrt(2))
    q = simulate_rbm(RbmParams(0.0, 1.0, 0.0, 1.0, 1e-2), 9).values
    for cost in (CostSpec.linear([1.0, 2.0]), CostSpec.power([1.0, 3.0]), CostSpec.custom(nonconvex_example)):
        f = Minimizer(cost, theta)
        for a in q[::10]:
            x = f(a)
            assert np.dot(theta, x) == pytest.approx(a, abs=1e-8)
            assert cost(x) == pytest.approx(c_star(cost, theta, a), abs=1e-8)
