import math

import numpy as np
import pytest
from scipy.optimize import linprog

import oracles
from ndslab.errors import AssumptionError, InfeasibleError
from ndslab.fluid import analyze, compute_theta, solve_static_lp, z_star
from ndslab.model import BaseParameters, Topology
from ndslab.simplex import UnboundedError, solve_lp


def test_simplex_small_lp():
    # min -x - y s.t. x + y + s = 4, x + 3y + t = 6
    c = np.array([-1.0, -1.0, 0.0, 0.0])
    A = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 3.0, 0.0, 1.0]])
    res = solve_lp(c, A, np.array([4.0, 6.0]))
    assert res.fun == pytest.approx(-4.0)


def test_simplex_infeasible_and_unbounded():
    with pytest.raises(InfeasibleError):
        solve_lp(np.array([1.0, 0.0]), np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))
    with pytest.raises(UnboundedError):
        solve_lp(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([1.0]))


def test_simplex_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    res = solve_lp(np.array([1.0, 2.0, 0.0]), A, np.array([1.0, 2.0, 3.0]))
    assert res.fun == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(20))
def test_simplex_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    m, k = 3, 7
    A = rng.uniform(0, 1, (m, k))
    x0 = rng.uniform(0, 1, k)
    b = A @ x0
    c = rng.uniform(-1, 1, k)
    # keep it bounded
    A = np.vstack([A, np.ones(k)])
    A = np.hstack([A, np.eye(m + 1)[:, -1:]])
    b = np.append(b, x0.sum() + 1.0)
    c = np.append(c, 0.0)
    ours = solve_lp(c, A, b)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ours.fun == pytest.approx(ref.fun, abs=1e-8)


def test_nmodel_fluid(nmodel_fluid):
    fl = nmodel_fluid
    for (i, j), v in oracles.FROZEN_NMODEL_XI.items():
        assert fl.xi[i, j] == pytest.approx(v, abs=1e-9)
    assert fl.rho == pytest.approx(1.0, abs=1e-9)
    assert fl.ht and fl.crp and fl.tree.is_tree and fl.tree.uniqueness_certified
    np.testing.assert_allclose(fl.theta, oracles.FROZEN_NMODEL_THETA, atol=1e-9)
    np.testing.assert_allclose(fl.z, oracles.FROZEN_NMODEL_Z, atol=1e-9)
    np.testing.assert_allclose(fl.sigma ** 2, oracles.FROZEN_NMODEL_SIGMA2, atol=1e-9)
    assert fl.variance == pytest.approx(oracles.FROZEN_NMODEL_VARIANCE, abs=1e-9)
    assert fl.drift == pytest.approx(0.0, abs=1e-12)


def test_nmodel_static_lp_matches_scipy(nmodel):
    topo, params = nmodel
    xi, rho = solve_static_lp(topo, params.lam, params.mu_bar)
    # scipy over (xi11, xi12, xi22, rho)
    A_eq = [[1, 1, 0, 0], [0, 0, 2, 0]]
    A_ub = [[1, 0, 0, -1], [0, 1, 1, -1], [1, 0, 0, 0], [0, 1, 1, 0]]
    ref = linprog([0, 0, 0, 1], A_ub=A_ub, b_ub=[0, 0, 1, 1], A_eq=A_eq, b_eq=[1.2, 1.6], method="highs")
    assert rho == pytest.approx(ref.fun, abs=1e-9)


def test_underloaded_is_not_heavy_traffic():
    topo = Topology(2, 2, ((0, 0), (0, 1), (1, 1)))
    params = BaseParameters.create([1.0, 1.0], [[1.0, 1.0], [0.0, 2.0]])
    fl = analyze(topo, params)
    assert fl.rho == pytest.approx(0.75, abs=1e-9)
    assert not fl.ht
    with pytest.raises(AssumptionError):
        fl.require_assumptions()


def test_overloaded_is_infeasible():
    topo = Topology(1, 1, ((0, 0),))
    params = BaseParameters.create([2.0], [[1.0]])
    with pytest.raises(InfeasibleError, match="overloaded"):
        analyze(topo, params)


def test_disjoint_system_fails_resource_pooling():
    topo = Topology(2, 2, ((0, 0), (1, 1)))
    params = BaseParameters.create([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    fl = analyze(topo, params)
    assert fl.ht and not fl.crp and fl.theta is None


def test_theta_tree_relations(nmodel_fluid, nmodel):
    _, params = nmodel
    fl = nmodel_fluid
    for i, j in fl.basic_edges:
        assert fl.theta[i] * params.mu_bar[i, j] == pytest.approx(fl.z[j], abs=1e-12)
    assert np.linalg.norm(fl.theta) == pytest.approx(1.0)
    np.testing.assert_allclose(z_star(fl.theta, params.mu_bar), fl.z, atol=1e-12)


def test_theta_is_normal_to_capacity_region(nmodel_fluid, nmodel):
    # theta' mu_bar(xi) <= theta' lambda for every feasible allocation
    topo, params = nmodel
    rng = np.random.default_rng(0)
    for _ in range(200):
        x11 = rng.uniform()
        x12 = rng.uniform()
        x22 = rng.uniform(0, 1 - x12)
        rate = np.array([x11 + x12, 2 * x22])
        assert nmodel_fluid.theta @ rate <= nmodel_fluid.theta @ params.lam + 1e-12


def test_star_topology_theta():
    topo = Topology(3, 1, ((0, 0), (1, 0), (2, 0)))
    mu = [[1.0], [2.0], [4.0]]
    params = BaseParameters.create([0.25, 0.5, 1.0], mu)
    fl = analyze(topo, params)
    assert fl.rho == pytest.approx(0.75)
    theta, z = compute_theta(topo.edges, np.array(mu), 3, 1)
    v = np.array([1.0, 0.5, 0.25])
    np.testing.assert_allclose(theta, v / np.linalg.norm(v))
    assert z[0] == pytest.approx(1 / np.linalg.norm(v))


def test_to_dict_is_one_based(nmodel_fluid, nmodel):
    d = nmodel_fluid.to_dict(nmodel[0])
    assert set(d["xi"]) == {"1,1", "1,2", "2,2"}
    assert [1, 1] in d["basic_edges"]
    assert math.isclose(d["theta"][0], 2 / math.sqrt(5))
