import numpy as np
import pytest
from scipy import stats

from ndslab.errors import ConfigError
from ndslab.rng import (ARRIVAL, Buffered, exponential_stream, interarrival_stream, sample_interarrival,
                        substream)


def test_deterministic_is_one(rng):
    assert sample_interarrival("deterministic", 0.0, rng) == 1.0
    s = interarrival_stream(1, 0, "deterministic", 0.0)
    assert {s.draw() for _ in range(100)} == {1.0}


def _moments(family, cv, k=10 ** 6):
    s = interarrival_stream(7, 0, family, cv)
    x = np.array([s.draw() for _ in range(k)])
    return x


@pytest.mark.parametrize("family,cv", [("exponential", 1.0), ("gamma", 0.5), ("lognormal", 0.7), ("gamma", 1.5)])
def test_unit_mean_and_variance(family, cv):
    x = _moments(family, cv)
    k = len(x)
    var = cv ** 2
    assert abs(x.mean() - 1.0) <= 3 * np.sqrt(var / k)
    # standard error of the sample variance from the fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var() - var) <= 3 * np.sqrt((m4 - var ** 2) / k)


def test_gamma_parameterization(rng):
    draws = [sample_interarrival("gamma", 0.5, rng) for _ in range(2000)]
    shape, _, scale = stats.gamma.fit(draws, floc=0)
    assert shape == pytest.approx(4.0, rel=0.15)
    assert scale == pytest.approx(0.25, rel=0.15)


@pytest.mark.parametrize("family,cv", [("exponential", 0.5), ("deterministic", 1.0), ("gamma", 0.0), ("weibull", 1.0)])
def test_inconsistent_family(family, cv, rng):
    with pytest.raises(ConfigError):
        sample_interarrival(family, cv, rng)


def test_substreams_independent_of_usage():
    a = exponential_stream(5, ARRIVAL, 0)
    b = exponential_stream(5, ARRIVAL, 1)
    first = [a.draw() for _ in range(10)]
    for _ in range(10000):
        b.draw()
    a2 = exponential_stream(5, ARRIVAL, 0)
    assert [a2.draw() for _ in range(10)] == first
    assert first != [exponential_stream(5, ARRIVAL, 1).draw() for _ in range(10)]


def test_buffer_refill_continues_sequence():
    g = substream(9, 1, 0)
    ref = g.standard_exponential(10000)
    s = Buffered(substream(9, 1, 0), lambda gen, k: gen.standard_exponential(k))
    got = np.array([s.draw() for _ in range(4096)])
    np.testing.assert_array_equal(got, ref[:4096])


def test_poisson_counts_chi_square():
    s = interarrival_stream(11, 0, "exponential", 1.0)
    # arrivals of a rate-5 process, counted on 10^4 unit intervals
    rate, k = 5.0, 10 ** 4
    t, counts = 0.0, np.zeros(k, dtype=int)
    while True:
        t += s.draw() / rate
        if t >= k:
            break
        counts[int(t)] += 1
    top = 14
    obs = np.bincount(np.minimum(counts, top), minlength=top + 1)
    p = stats.poisson.pmf(np.arange(top), rate)
    p = np.append(p, 1 - p.sum())
    _, pval = stats.chisquare(obs, k * p)
    assert pval > 0.001
    # disjoint intervals uncorrelated
    assert abs(np.corrcoef(counts[:-1], counts[1:])[0, 1]) < 4 / np.sqrt(k)
