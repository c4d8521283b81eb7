"""Network topology, first/second-order parameters and the n-th scaled system.

Indices are 0-based everywhere in the code. Config files use 1-based indices
and are translated by :mod:`ndslab.config`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError

INTERARRIVAL_FAMILIES = ("exponential", "deterministic", "gamma", "lognormal")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Topology:
    """Bipartite compatibility graph between ``n_classes`` classes and ``n_pools`` pools.

    ``edges`` is kept in the order given; duplicates and out-of-range indices
    are reported by :func:`validate_topology` rather than rejected here.
    """

    n_classes: int
    n_pools: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(i), int(j)) for i, j in self.edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edge_index()

    def class_pools(self, i: int) -> list[int]:
        return sorted(j for (k, j) in self.edges if k == i)

    def pool_classes(self, j: int) -> list[int]:
        return sorted(i for (i, k) in self.edges if k == j)


@dataclass(frozen=True)
class BaseParameters:
    """First- and second-order parameters of the scaled family.

    Attributes
    ----------
    lam : (I,) first-order arrival rates.
    lam_hat : (I,) second-order arrival perturbation.
    nu : (J,) pool size coefficients, ``N_j ~ nu_j sqrt(n)``.
    mu_bar : (I, J) aggregate first-order service rates, zero off the edge set.
    mu_hat : (I, J) second-order perturbation of ``mu_bar``.
    cv : (I,) interarrival coefficients of variation.
    families : interarrival distribution tag per class.
    """

    lam: np.ndarray
    lam_hat: np.ndarray
    nu: np.ndarray
    mu_bar: np.ndarray
    mu_hat: np.ndarray
    cv: np.ndarray
    families: tuple[str, ...]

    def __post_init__(self):
        for name in ("lam", "lam_hat", "nu", "mu_bar", "mu_hat", "cv"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "families", tuple(self.families))

    @classmethod
    def create(cls, lam, mu_bar, nu=None, lam_hat=None, mu_hat=None, cv=None, families=None):
        """Build parameters with Poisson arrivals and zero perturbations by default."""
        lam = np.asarray(lam, dtype=float)
        mu_bar = np.asarray(mu_bar, dtype=float)
        n_classes, n_pools = mu_bar.shape
        return cls(
            lam=lam,
            lam_hat=np.zeros(n_classes) if lam_hat is None else lam_hat,
            nu=np.ones(n_pools) if nu is None else nu,
            mu_bar=mu_bar,
            mu_hat=np.zeros_like(mu_bar) if mu_hat is None else mu_hat,
            cv=np.ones(n_classes) if cv is None else cv,
            families=("exponential",) * n_classes if families is None else families,
        )

    @property
    def mu(self) -> np.ndarray:
        """Per-server diffusion-scale rates ``mu_bar_ij / nu_j``."""
        return self.mu_bar / self.nu[None, :]

    def balance(self, xi) -> np.ndarray:
        """Processing rate vector ``sum_j mu_bar_ij xi_ij``."""
        return (self.mu_bar * np.asarray(xi, dtype=float)).sum(axis=1)


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def __bool__(self) -> bool:
        return self.ok


def validate_topology(topology: Topology, params: BaseParameters) -> ValidationReport:
    """Collect structural problems of a model definition. An empty report means valid."""
    out: list[str] = []
    n_i, n_j = topology.n_classes, topology.n_pools
    if n_i < 1 or n_j < 1:
        out.append("empty topology: need at least one class and one pool")
        return ValidationReport(tuple(out))

    seen = set()
    for i, j in topology.edges:
        if not (0 <= i < n_i and 0 <= j < n_j):
            out.append(f"edge ({i + 1},{j + 1}) index out of range")
            continue
        if (i, j) in seen:
            out.append(f"duplicate edge ({i + 1},{j + 1})")
        seen.add((i, j))

    for i in range(n_i):
        if not any(e[0] == i for e in seen):
            out.append(f"isolated class {i + 1}")
    for j in range(n_j):
        if not any(e[1] == j for e in seen):
            out.append(f"isolated pool {j + 1}")

    shapes = {
        "lam": (n_i,), "lam_hat": (n_i,), "cv": (n_i,), "nu": (n_j,),
        "mu_bar": (n_i, n_j), "mu_hat": (n_i, n_j),
    }
    bad_shape = False
    for name, shape in shapes.items():
        if getattr(params, name).shape != shape:
            out.append(f"{name} has shape {getattr(params, name).shape}, expected {shape}")
            bad_shape = True
    if len(params.families) != n_i:
        out.append(f"families has {len(params.families)} entries, expected {n_i}")
        bad_shape = True
    if bad_shape:
        return ValidationReport(tuple(out))

    for i in range(n_i):
        if not params.lam[i] > 0:
            out.append(f"negative or zero arrival rate for class {i + 1}")
        if params.cv[i] < 0:
            out.append(f"negative coefficient of variation for class {i + 1}")
        fam = params.families[i]
        if fam not in INTERARRIVAL_FAMILIES:
            out.append(f"unknown interarrival family {fam!r} for class {i + 1}")
        elif (fam == "deterministic") != (params.cv[i] == 0):
            out.append(f"family {fam!r} inconsistent with C_IA={params.cv[i]} for class {i + 1}")
        elif fam == "exponential" and params.cv[i] != 1:
            out.append(f"exponential family requires C_IA=1 for class {i + 1}")
    for j in range(n_j):
        if not params.nu[j] > 0:
            out.append(f"negative or zero pool size coefficient for pool {j + 1}")
    for i in range(n_i):
        for j in range(n_j):
            rate = params.mu_bar[i, j]
            if (i, j) in seen:
                if rate == 0:
                    out.append(f"zero rate on edge ({i + 1},{j + 1})")
                elif rate < 0:
                    out.append(f"negative rate on edge ({i + 1},{j + 1})")
            else:
                if rate != 0:
                    out.append(f"rate on non-edge ({i + 1},{j + 1})")
                if params.mu_hat[i, j] != 0:
                    out.append(f"perturbation on non-edge ({i + 1},{j + 1})")
    return ValidationReport(tuple(out))


def pool_size(nu: float, n: int) -> int:
    # half-up rounding; Python's round() is banker's rounding
    return int(math.floor(nu * math.sqrt(n) + 0.5))


@dataclass(frozen=True)
class SystemInstance:
    """Concrete rates and pool sizes of the n-th system."""

    n: int
    topology: Topology
    params: BaseParameters
    lam_n: np.ndarray   # (I,) arrivals per unit time
    N: np.ndarray       # (J,) integer server counts
    mu_n: np.ndarray    # (I, J) per-server service rates
    eps: np.ndarray     # (I, J) n^{-1/2} mu_n - mu

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)


def build_instance(params: BaseParameters, topology: Topology, n: int) -> SystemInstance:
    """Scale the base parameters to the n-th system.

    ``lam_n = n lam + sqrt(n) lam_hat``, ``N_j = round(nu_j sqrt(n))`` and
    ``mu_n_ij = (n mu_bar_ij + sqrt(n) mu_hat_ij) / N_j`` so that the aggregate
    pool rate matches its first/second-order expansion exactly.
    """
    if int(n) != n or n < 1:
        raise ModelError(f"scale index must be a positive integer, got {n!r}")
    n = int(n)
    report = validate_topology(topology, params)
    if not report.ok:
        raise ModelError("invalid model: " + "; ".join(report.findings))
    rn = math.sqrt(n)
    N = np.array([pool_size(v, n) for v in params.nu], dtype=np.int64)
    if (N < 1).any():
        j = int(np.flatnonzero(N < 1)[0])
        raise ModelError(f"pool vanishes at this n: pool {j + 1} has N={N[j]} at n={n}")
    lam_n = n * params.lam + rn * params.lam_hat
    mu_n = (n * params.mu_bar + rn * params.mu_hat) / N[None, :]
    mask = np.zeros_like(mu_n, dtype=bool)
    for i, j in topology.edges:
        mask[i, j] = True
    mu_n = np.where(mask, mu_n, 0.0)
    if (mu_n[mask] <= 0).any():
        raise ModelError(f"nonpositive per-server service rate at n={n}")
    if (lam_n <= 0).any():
        raise ModelError(f"nonpositive arrival rate at n={n}")
    eps = np.where(mask, mu_n / rn - params.mu, 0.0)
    return SystemInstance(
        n=n, topology=topology, params=params,
        lam_n=_frozen(lam_n), N=_frozen(N, np.int64), mu_n=_frozen(mu_n), eps=_frozen(eps),
    )


def largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    """Integer apportionment of ``total`` following ``quotas``.

    Floors first, then hands the remaining units to the largest fractional
    parts; ties go to the lower index.
    """
    floors = [int(math.floor(q)) for q in quotas]
    left = total - sum(floors)
    if not 0 <= left <= len(quotas):
        raise ValueError(f"quotas sum to {sum(quotas)}, cannot apportion {total}")
    # round remainders so that representation noise does not break ties
    order = sorted(range(len(quotas)), key=lambda k: (-round(quotas[k] - floors[k], 12), k))
    for k in order[:left]:
        floors[k] += 1
    return floors


def initial_busy(instance: SystemInstance, xi_star) -> list[int]:
    """Per-edge busy-server counts at time zero, closest to ``xi*_ij N_j``."""
    topo = instance.topology
    xi_star = np.asarray(xi_star, dtype=float)
    B = [0] * topo.n_edges
    idx = topo.edge_index()
    for j in range(topo.n_pools):
        classes = topo.pool_classes(j)
        quotas = [xi_star[i, j] * instance.N[j] for i in classes]
        total = int(instance.N[j])
        if sum(quotas) > total + 1e-6:
            raise ModelError(f"allocation exceeds pool {j + 1} capacity")
        # a pool that is not saturated in the fluid optimum starts with idle servers
        if sum(quotas) < total - 0.5:
            total = int(math.floor(sum(quotas) + 0.5))
        for i, b in zip(classes, largest_remainder(quotas, total)):
            B[idx[(i, j)]] = b
    return B


def initial_state(instance: SystemInstance, fluid):
    """Empty queues, fluid-proportional busy servers, no idleness."""
    from .state import SimState

    B = initial_busy(instance, fluid.xi)
    return SimState.from_counts(instance, B)
