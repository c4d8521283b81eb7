import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ndslab.cost import (CostSpec, Minimizer, MinimizerParams, PerturbedMinimizer, c_star,
                         check_cost, default_root, linear_root, minimizer_f, nonconvex_example,
                         numeric_minimizer)
from ndslab.errors import ConfigError

THETA_N = (2 / math.sqrt(5), 1 / math.sqrt(5))
THETA_EQ = (1 / math.sqrt(2), 1 / math.sqrt(2))


def test_constructors_validate():
    with pytest.raises(ConfigError):
        CostSpec.linear([-1.0, 1.0])
    with pytest.raises(ConfigError):
        CostSpec.power([1.0, 1.0], 1.0)
    with pytest.raises(ConfigError):
        CostSpec("nonsense", (1.0,))


def test_scaled_evaluator_matches_call():
    for cost in (CostSpec.linear([1.0, 3.0]), CostSpec.power([2.0, 1.0], 2.0),
                 CostSpec.power([2.0, 1.0], 3.0), CostSpec.linear([1.0, 2.0, 3.0]),
                 CostSpec.custom(nonconvex_example)):
        ev = cost.scaled_evaluator(0.1)
        for q in ([0, 0], [3, 7], [10, 1]):
            q = q + [2] * (len(cost.coefficients) - 2) if len(cost.coefficients) > 2 else q
            assert ev(q) == pytest.approx(cost([0.1 * v for v in q]), rel=1e-12)


def test_linear_reduced_cost_and_root():
    c = CostSpec.linear([1.0, 1.0])
    assert linear_root(c.coefficients, THETA_N) == 0
    assert c_star(c, THETA_N, 2.0) == pytest.approx(2.0 * math.sqrt(5) / 2)
    q = minimizer_f(c, THETA_N, 2.0)
    assert q[1] == 0.0 and np.dot(THETA_N, q) == pytest.approx(2.0)


def test_linear_root_ties_to_higher_index():
    assert linear_root([1.0, 1.0], THETA_EQ) == 1


def test_quadratic_closed_form():
    c = CostSpec.power([1.0, 1.0], 2.0)
    # f(a) = a theta / |theta|^2, C*(a) = a^2
    for a in (0.3, 1.0, 4.0):
        np.testing.assert_allclose(minimizer_f(c, THETA_N, a), a * np.array(THETA_N), rtol=1e-12)
        assert c_star(c, THETA_N, a) == pytest.approx(a * a)


def test_numeric_minimizer_matches_closed_forms():
    for cost in (CostSpec.linear([1.0, 2.0]), CostSpec.power([1.0, 3.0], 2.0)):
        for a in np.linspace(0.05, 5.0, 10):
            _, v = numeric_minimizer(cost, THETA_N, a)
            assert v == pytest.approx(c_star(cost, THETA_N, a), rel=1e-6, abs=1e-9)


def test_nonconvex_example_reduced_cost_is_2a2():
    cost = CostSpec.custom(nonconvex_example)
    for a in (0.5, 1.0, 2.0):
        assert c_star(cost, THETA_EQ, a) == pytest.approx(oracles.c_star_grid(nonconvex_example, THETA_EQ, a),
                                                          rel=1e-8)
        assert c_star(cost, THETA_EQ, a) == pytest.approx(2 * a * a, rel=1e-8)


def test_check_cost_accepts_convex_reduced_cost():
    assert check_cost(CostSpec.custom(nonconvex_example), THETA_EQ, points=40) == []
    assert check_cost(CostSpec.power([1.0, 2.0]), THETA_N) == []


def test_check_cost_flags_concave_reduced_cost():
    concave = CostSpec.custom(lambda q: math.sqrt(max(q[0], 0) + max(q[1], 0)))
    assert any("convex" in f for f in check_cost(concave, THETA_EQ, points=30))


def test_minimizer_homogeneous_direction():
    c = CostSpec.power([1.0, 2.0], 3.0)
    f = Minimizer(c, THETA_N)
    for a in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(f(a), minimizer_f(c, THETA_N, a), rtol=1e-9)
    assert f(-1.0) == [0.0, 0.0]


def test_perturbed_minimizer_pieces():
    c = CostSpec.linear([1.0, 1.0])
    params = MinimizerParams(THETA_N, 0, 0.1, 0.5)
    fn = PerturbedMinimizer(Minimizer(c, THETA_N, 0), params)
    t2 = THETA_N[1]
    # below kappa: non-root grows linearly
    assert fn(0.05)[1] == pytest.approx(0.05 / (2 * t2))
    # plateau
    assert fn(0.3)[1] == pytest.approx(0.1 / (2 * t2))
    # above kappa_bar: linear f has zero non-root part, so only the floor remains
    assert fn(3.0)[1] == pytest.approx(0.1 / (2 * t2))
    for x in (0.05, 0.3, 3.0):
        assert np.dot(THETA_N, fn(x)) == pytest.approx(x)
    assert fn(0.0) == [0.0, 0.0]


def test_for_scale_defaults():
    p = MinimizerParams.for_scale(THETA_N, 0, 10 ** 4)
    assert p.kappa == pytest.approx(10 ** (-4 / 20))
    assert p.kappa_bar == pytest.approx(10 ** (-4 / 100))
    with pytest.raises(ConfigError):
        MinimizerParams(THETA_N, 0, 0.5, 0.1)


def test_default_root():
    assert default_root(CostSpec.linear([1.0, 1.0]), THETA_N) == 0
    assert default_root(CostSpec.linear([5.0, 1.0]), THETA_N) == 1
    assert default_root(CostSpec.power([1.0, 1.0]), THETA_N) == 1


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0.0, 20.0), kappa=st.floats(0.01, 0.4), gap=st.floats(0.05, 0.5),
       p=st.sampled_from([2.0, 3.0]))
def test_perturbed_minimizer_properties(x, kappa, gap, p):
    c = CostSpec.power([1.0, 2.0], p)
    params = MinimizerParams(THETA_N, 1, kappa, kappa + gap)
    out = PerturbedMinimizer(Minimizer(c, THETA_N), params)(x)
    assert np.dot(THETA_N, out) == pytest.approx(x, abs=1e-9)
    assert min(out) >= -1e-12
    if 0 < x:
        assert out[0] > 0


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.0, 10.0), b=st.floats(0.0, 10.0))
def test_linear_and_power_cstar_midpoint_convex(a, b):
    for cost in (CostSpec.linear([1.0, 3.0]), CostSpec.power([2.0, 1.0], 2.5)):
        mid = c_star(cost, THETA_N, (a + b) / 2)
        assert mid <= (c_star(cost, THETA_N, a) + c_star(cost, THETA_N, b)) / 2 + 1e-9
