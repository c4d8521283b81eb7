"""The frozen reference values still follow from their oracles."""
import math

import pytest

import oracles as o


def test_lp_grid_reproduces_frozen_allocation():
    x11, x12, x22, rho = o.nmodel_lp_grid(0.005)
    assert (x11, x12, x22) == pytest.approx((1.0, 0.2, 0.8), abs=1e-9)
    assert rho == pytest.approx(o.FROZEN_NMODEL_RHO, abs=1e-9)


def test_erlang_c_frozen():
    assert o.erlang_c_queue(50, 40.0) == pytest.approx(o.FROZEN_ERLANG_C_50_40, rel=1e-14)


def test_erlang_c_single_server_is_mm1():
    rho = 0.5
    assert o.erlang_c_queue(1, rho) == pytest.approx(rho ** 2 / (1 - rho), rel=1e-12)


def test_skorohod_oracle_example():
    z, expected = o.FROZEN_SKOROHOD_EXAMPLE
    assert o.skorohod_double_loop(z) == list(expected)


def test_nonconvex_reduced_cost_grid():
    theta = (1 / math.sqrt(2), 1 / math.sqrt(2))
    for a in (0.25, 1.0, 3.0):
        assert o.c_star_grid(o.nonconvex_cost, theta, a) == pytest.approx(
            o.FROZEN_NONCONVEX_CSTAR_COEF * a * a, rel=1e-9)


def test_apportion_brute_examples():
    assert o.apportion_brute([87.5, 12.5], 100) == [88, 12]
    assert o.apportion_brute([2.0, 8.0], 10) == [2, 8]
