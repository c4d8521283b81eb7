"""Named random substreams derived from one replication seed.

Each substream is a Philox (counter-based) generator keyed by
``(seed, purpose, index)`` through :class:`numpy.random.SeedSequence`, so the
draws of one stream never depend on how often another stream was used. This
is what makes arrival sequences identical across policies for a given seed.
"""
from __future__ import annotations

import math

import numpy as np

ARRIVAL, ACTIVITY, POLICY, CUSTOMER = 0, 1, 2, 3
BLOCK = 4096


def substream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


class Buffered:
    """Block-buffered draws of one distribution from one substream.

    ``draw`` is a zero-argument method returning a Python float; refills
    consume the generator in fixed-size blocks so the sequence of values is a
    function of the seed alone.
    """

    __slots__ = ("_gen", "_sampler", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator, sampler):
        self._gen = gen
        self._sampler = sampler
        self._buf: list[float] = []
        self._pos = 0

    def draw(self) -> float:
        pos = self._pos
        buf = self._buf
        if pos >= len(buf):
            buf = self._buf = self._sampler(self._gen, BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return buf[pos]


def exponential_stream(seed: int, purpose: int, index: int = 0) -> Buffered:
    return Buffered(substream(seed, purpose, index), lambda g, k: g.standard_exponential(k))


def uniform_stream(seed: int, purpose: int, index: int = 0) -> Buffered:
    return Buffered(substream(seed, purpose, index), lambda g, k: g.random(k))


def interarrival_sampler(family: str, cv: float):
    """Block sampler of unit-mean interarrival times with coefficient of variation ``cv``."""
    from .errors import ConfigError

    if family == "deterministic":
        if cv != 0:
            raise ConfigError("deterministic interarrivals need C_IA = 0")
        return lambda g, k: np.ones(k)
    if cv <= 0:
        raise ConfigError(f"{family} interarrivals need C_IA > 0")
    if family == "exponential":
        if cv != 1:
            raise ConfigError("exponential interarrivals have C_IA = 1")
        return lambda g, k: g.standard_exponential(k)
    if family == "gamma":
        shape = 1.0 / cv ** 2
        scale = cv ** 2
        return lambda g, k: g.gamma(shape, scale, k)
    if family == "lognormal":
        s2 = math.log1p(cv ** 2)
        mu = -0.5 * s2
        s = math.sqrt(s2)
        return lambda g, k: g.lognormal(mu, s, k)
    raise ConfigError(f"unknown interarrival family {family!r}")


def interarrival_stream(seed: int, index: int, family: str, cv: float) -> Buffered:
    return Buffered(substream(seed, ARRIVAL, index), interarrival_sampler(family, cv))


def sample_interarrival(family: str, cv: float, rng: np.random.Generator) -> float:
    """One unit-mean interarrival time; divide by the arrival rate to get real time."""
    return float(interarrival_sampler(family, cv)(rng, 1)[0])
