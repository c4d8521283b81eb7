import math
from pathlib import Path

import numpy as np
import pytest

from ndslab.config import load_model
from ndslab.cost import CostSpec
from ndslab.fluid import analyze
from ndslab.model import BaseParameters, Topology, build_instance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def nmodel():
    topo = Topology(2, 2, ((0, 0), (0, 1), (1, 1)))
    params = BaseParameters.create([1.2, 1.6], [[1.0, 1.0], [0.0, 2.0]], nu=[1.0, 1.0])
    return topo, params


@pytest.fixture(scope="session")
def nmodel_fluid(nmodel):
    topo, params = nmodel
    return analyze(topo, params)


@pytest.fixture(scope="session")
def nmodel_config():
    return load_model(CONFIGS / "nmodel.toml")


@pytest.fixture
def nmodel_instance(nmodel):
    def make(n):
        topo, params = nmodel
        return build_instance(params, topo, n)
    return make


@pytest.fixture(scope="session")
def theta_n():
    return (2 / math.sqrt(5), 1 / math.sqrt(5))


@pytest.fixture(scope="session")
def linear_cost():
    return CostSpec.linear([1.0, 1.0])


@pytest.fixture(scope="session")
def quadratic_cost():
    return CostSpec.power([1.0, 1.0], 2.0)


def single_server_model(lam=1.0, mu=1.0, nu=1.0, family="exponential", cv=1.0):
    topo = Topology(1, 1, ((0, 0),))
    params = BaseParameters.create([lam], [[mu]], nu=[nu], cv=[cv], families=(family,))
    return topo, params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
