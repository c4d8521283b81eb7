"""One-sided Skorohod reflection, reflected Brownian motion, and the lower-bound cost."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostSpec, c_star

CHUNK_REPS = 64


@dataclass(frozen=True)
class DiscretePath:
    """Values on the uniform grid ``0, dt, 2 dt, ...`` covering ``[0, u]``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("grid step must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.values) - 1)


def skorohod_map(zeta):
    """``Gamma[zeta](t) = zeta(t) + max_{s <= t} (-zeta(s))^+``.

    Accepts a :class:`DiscretePath` or an array whose last axis is time.
    """
    if isinstance(zeta, DiscretePath):
        return DiscretePath(zeta.dt, skorohod_map(zeta.values))
    z = np.asarray(zeta, dtype=float)
    push = np.maximum.accumulate(np.maximum(-z, 0.0), axis=-1)
    return z + push


@dataclass(frozen=True)
class RbmParams:
    """Drift ``m`` and variance ``s2`` per unit time of the free workload."""

    m: float
    s2: float
    x0: float = 0.0
    u: float = 10.0
    dt: float = 1e-4

    def __post_init__(self):
        if not self.s2 > 0:
            raise ValueError("variance must be positive")
        if self.x0 < 0:
            raise ValueError("initial workload must be nonnegative")
        if not (self.dt > 0 and self.dt <= self.u / 100 * (1 + 1e-12)):
            raise ValueError("need 0 < dt <= u/100")

    @property
    def steps(self) -> int:
        return int(round(self.u / self.dt))

    @classmethod
    def from_fluid(cls, fluid, x0: float = 0.0, u: float = 10.0, dt=None) -> "RbmParams":
        return cls(m=fluid.drift, s2=fluid.variance, x0=x0, u=u, dt=u / 1e5 if dt is None else dt)


def _bridge_minima(zeta: np.ndarray, s2: float, dt: float, uniforms: np.ndarray) -> np.ndarray:
    """Exact samples of the minimum of a Brownian bridge over each grid interval."""
    a, b = zeta[..., :-1], zeta[..., 1:]
    return 0.5 * (a + b - np.sqrt((b - a) ** 2 - 2.0 * s2 * dt * np.log(uniforms)))


def _reflect_with_minima(zeta: np.ndarray, minima: np.ndarray) -> np.ndarray:
    push = np.empty_like(zeta)
    push[..., 0] = np.maximum(-zeta[..., 0], 0.0)
    push[..., 1:] = np.maximum(-minima, 0.0)
    np.maximum.accumulate(push, axis=-1, out=push)
    return zeta + push


def _free_path(params: RbmParams, rng: np.random.Generator, reps: int):
    k = params.steps
    inc = rng.standard_normal((reps, k))
    inc *= np.sqrt(params.s2 * params.dt)
    inc += params.m * params.dt
    zeta = np.empty((reps, k + 1))
    zeta[:, 0] = params.x0
    np.cumsum(inc, axis=1, out=zeta[:, 1:])
    zeta[:, 1:] += params.x0
    # 1 - U lies in (0, 1], keeping the logarithm finite
    uniforms = 1.0 - rng.random((reps, k))
    return zeta, uniforms


def _rbm_block(params: RbmParams, rng: np.random.Generator, reps: int) -> np.ndarray:
    """Reflected paths whose grid values are exact in law.

    The reflection uses the minimum of the free path over each grid interval,
    sampled from the Brownian-bridge law given the endpoints, so the push
    term is the continuous-time one rather than its grid approximation.
    """
    zeta, uniforms = _free_path(params, rng, reps)
    return _reflect_with_minima(zeta, _bridge_minima(zeta, params.s2, params.dt, uniforms))


def simulate_rbm(params: RbmParams, seed: int) -> DiscretePath:
    """Reflected Brownian motion on the grid, from exact Gaussian increments."""
    rng = np.random.default_rng(seed)
    return DiscretePath(params.dt, _rbm_block(params, rng, 1)[0])


def coarsen(path: np.ndarray, minima: np.ndarray, factor: int = 2):
    """Free path and interval minima on a grid ``factor`` times coarser."""
    k = minima.shape[-1] - minima.shape[-1] % factor
    coarse_min = minima[..., :k].reshape(*minima.shape[:-1], k // factor, factor).min(axis=-1)
    return path[..., :k + 1:factor], coarse_min


def simulate_rbm_refinement(params: RbmParams, seed: int) -> tuple[DiscretePath, DiscretePath]:
    """The same reflected Brownian path on grids of step ``dt`` and ``dt / 2``.

    Both are built from one fine free path, so their difference isolates the
    effect of the grid and carries no Monte Carlo noise of its own.
    """
    half = RbmParams(params.m, params.s2, params.x0, params.u, params.dt / 2)
    rng = np.random.default_rng(seed)
    zeta, uniforms = _free_path(half, rng, 1)
    minima = _bridge_minima(zeta, half.s2, half.dt, uniforms)
    fine = _reflect_with_minima(zeta, minima)[0]
    zc, mc = coarsen(zeta, minima)
    coarse = _reflect_with_minima(zc, mc)[0]
    return DiscretePath(params.dt, coarse), DiscretePath(half.dt, fine)


def batch_means(values: np.ndarray, dt: float, batches: int = 50) -> dict:
    """Time average of a grid path with a batch-means standard error."""
    v = np.asarray(values, dtype=float)
    k = (len(v) - 1) // batches
    per = np.array([trapezoid(v[b * k:(b + 1) * k + 1], dt) / (k * dt) for b in range(batches)])
    mean = float(trapezoid(v, dt) / (dt * (len(v) - 1)))
    return {"mean": mean, "se": float(per.std(ddof=1) / np.sqrt(batches)), "batches": batches}


def trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return dt * (v[..., 1:].sum(axis=-1) + v[..., :-1].sum(axis=-1)) / 2.0


TABLE_POINTS = 1025


def reduced_cost_vectorized(cost: CostSpec, theta):
    """``a -> C*(a)`` acting on arrays.

    Linear and homogeneous costs reduce to ``C*(1) a^p``. Other costs are
    tabulated on a uniform grid over the range of the argument and
    interpolated linearly, which overestimates a convex ``C*`` by at most the
    grid's second-difference error.
    """
    if cost.kind == "linear":
        slope = c_star(cost, theta, 1.0)
        return lambda a: slope * np.maximum(a, 0.0)
    if cost.homogeneous:
        unit = c_star(cost, theta, 1.0)
        p = cost.exponent
        return lambda a: unit * np.maximum(a, 0.0) ** p

    def tabulated(a):
        a = np.maximum(a, 0.0)
        top = float(a.max())
        grid = np.linspace(0.0, top if top > 0 else 1.0, TABLE_POINTS)
        table = np.array([c_star(cost, theta, float(x)) for x in grid])
        return np.interp(a, grid, table)

    return tabulated


def lower_bound_estimate(cost: CostSpec, theta, rbm: RbmParams, u=None, reps: int = 200,
                         seed: int = 0) -> dict:
    """Monte Carlo estimate of ``E int_0^u C*(Q*(t)) dt``.

    Returns mean, sample sd, standard error and the 5/50/95% quantiles of the
    per-path integrals.
    """
    if reps < 2:
        raise ValueError("need at least two replications")
    if u is not None and abs(u - rbm.u) > 1e-12:
        rbm = RbmParams(rbm.m, rbm.s2, rbm.x0, u, min(rbm.dt, u / 100))
    cstar = reduced_cost_vectorized(cost, theta)
    rng = np.random.default_rng(seed)
    out = np.empty(reps)
    per_chunk = max(1, min(CHUNK_REPS, int(4e6 // (rbm.steps + 1))))
    done = 0
    while done < reps:
        k = min(per_chunk, reps - done)
        paths = _rbm_block(rbm, rng, k)
        out[done:done + k] = trapezoid(cstar(paths), rbm.dt)
        done += k
    return summarize(out)


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    q05, q50, q95 = np.quantile(v, [0.05, 0.5, 0.95])
    return {"mean": float(v.mean()), "sd": sd, "se": float(sd / np.sqrt(len(v))), "reps": int(len(v)),
            "q05": float(q05), "q50": float(q50), "q95": float(q95)}
