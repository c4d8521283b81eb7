"""Queue-length cost functions, the reduced cost along the workload, and its minimizers.

The reduced cost is ``C*(a) = inf{C(q) : q >= 0, theta'q = a}``; ``f(a)`` is a
minimizer attaining it and ``f^n`` is the perturbed selection the tracking
policy steers towards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, MinimizerError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CostSpec:
    """A continuous cost on the nonnegative orthant, nondecreasing in each coordinate.

    ``kind`` is ``"linear"`` (``sum c_i q_i``), ``"separable_power"``
    (``sum c_i q_i^p`` with ``p > 1``) or ``"custom"`` (``evaluator`` given,
    optionally with a closed-form ``minimizer(theta, a)``).
    """

    kind: str
    coefficients: tuple[float, ...] = ()
    exponent: float = 1.0
    evaluator: Optional[Callable[[Sequence[float]], float]] = field(default=None, compare=False)
    minimizer: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.kind == "linear":
            if any(c < 0 for c in self.coefficients) or not self.coefficients:
                raise ConfigError("linear cost needs nonnegative coefficients")
        elif self.kind == "separable_power":
            if any(c <= 0 for c in self.coefficients) or not self.coefficients:
                raise ConfigError("separable power cost needs positive coefficients")
            if not self.exponent > 1:
                raise ConfigError("separable power cost needs exponent > 1")
        elif self.kind == "custom":
            if self.evaluator is None:
                raise ConfigError("custom cost needs an evaluator")
        else:
            raise ConfigError(f"unknown cost kind {self.kind!r}")

    @classmethod
    def linear(cls, c) -> "CostSpec":
        return cls("linear", tuple(c))

    @classmethod
    def power(cls, c, p: float = 2.0) -> "CostSpec":
        return cls("separable_power", tuple(c), float(p))

    @classmethod
    def custom(cls, evaluator, minimizer=None, name="custom") -> "CostSpec":
        return cls("custom", (), 1.0, evaluator, minimizer, name)

    @property
    def homogeneous(self) -> bool:
        """True when ``f(ca) = c f(a)``, so one direction describes the whole minimizer."""
        return self.kind in ("linear", "separable_power")

    def __call__(self, q) -> float:
        if self.kind == "linear":
            return float(sum(c * x for c, x in zip(self.coefficients, q)))
        if self.kind == "separable_power":
            p = self.exponent
            return float(sum(c * max(x, 0.0) ** p for c, x in zip(self.coefficients, q)))
        return float(self.evaluator(q))

    def scaled_evaluator(self, scale: float) -> Callable[[Sequence[int]], float]:
        """Fast ``counts -> C(scale * counts)`` for the simulation hot loop."""
        c = self.coefficients
        if self.kind == "linear":
            cs = tuple(v * scale for v in c)
            if len(cs) == 2:
                c0, c1 = cs
                return lambda q: c0 * q[0] + c1 * q[1]
            return lambda q: sum(a * b for a, b in zip(cs, q))
        if self.kind == "separable_power":
            p = self.exponent
            if p == 2.0:
                cs = tuple(v * scale * scale for v in c)
                return lambda q: sum(a * b * b for a, b in zip(cs, q))
            return lambda q: sum(a * (b * scale) ** p for a, b in zip(c, q))
        ev = self.evaluator
        return lambda q: float(ev([scale * v for v in q]))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind != "custom":
            d["coefficients"] = list(self.coefficients)
        if self.kind == "separable_power":
            d["exponent"] = self.exponent
        if self.name:
            d["name"] = self.name
        return d


def nonconvex_example(q) -> float:
    """``2(q1+q2)^2 - (q1-q2)^2``: not convex, yet its reduced cost is."""
    return 2.0 * (q[0] + q[1]) ** 2 - (q[0] - q[1]) ** 2


CUSTOM_COSTS = {"nonconvex_example": nonconvex_example}


def linear_root(c, theta) -> int:
    """Cheapest class per unit workload, ties to the higher index."""
    ratios = [ci / ti for ci, ti in zip(c, theta)]
    best = min(ratios)
    return max(i for i, r in enumerate(ratios) if r == best)


# -- numeric minimization on the slice {q >= 0, theta'q = a} -------------------------


def _golden(fun, lo, hi, tol=1e-13, max_iter=200):
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fun(x2)
    best = min(((fun(lo), lo), (fun(hi), hi), (f1, x1), (f2, x2)))
    return best[1], best[0]


def _coordinate_descent(cost, theta, a, w, sweeps=200, tol=1e-15):
    """Pairwise mass exchange on simplex weights ``w`` (``q_i = a w_i / theta_i``)."""
    n = len(theta)
    w = list(w)

    def q_of(ww):
        return [a * wi / ti for wi, ti in zip(ww, theta)]

    val = cost(q_of(w))
    for _ in range(sweeps):
        before = val
        for i in range(n):
            for k in range(i + 1, n):

                def along(d, i=i, k=k):
                    ww = list(w)
                    ww[i] += d
                    ww[k] -= d
                    return cost(q_of(ww))

                d, v = _golden(along, -w[i], w[k])
                if v < val:
                    w[i] += d
                    w[k] -= d
                    w[i], w[k] = max(w[i], 0.0), max(w[k], 0.0)
                    val = cost(q_of(w))
        if before - val <= tol * max(1.0, abs(val)):
            break
    s = sum(w)
    w = [v / s for v in w]
    return q_of(w), cost(q_of(w))


def numeric_minimizer(cost: CostSpec, theta, a: float, restarts: int = 16, seed: int = 0):
    """Coordinate descent from ``a theta / |theta|^2`` plus random restarts.

    Returns ``(q, value)``. Deterministic for a fixed ``seed``.
    """
    theta = [float(t) for t in theta]
    if a <= 0.0:
        q = [0.0] * len(theta)
        return q, cost(q)
    norm2 = sum(t * t for t in theta)
    starts = [[t * t / norm2 for t in theta]]
    n = len(theta)
    for i in range(n):
        starts.append([1.0 if k == i else 0.0 for k in range(n)])
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(list(rng.dirichlet(np.ones(n))))
    best = None
    for w in starts:
        q, v = _coordinate_descent(cost, theta, a, w)
        if best is None or v < best[1]:
            best = (q, v)
    return best


def c_star(cost: CostSpec, theta, a: float) -> float:
    """Reduced cost at workload ``a``; negative workloads evaluate as ``a = 0``."""
    theta = np.asarray(theta, dtype=float)
    a = max(float(a), 0.0)
    if cost.kind == "linear":
        return a * min(c / t for c, t in zip(cost.coefficients, theta))
    if cost.kind == "separable_power":
        return cost(_power_closed_form(cost, theta, a))
    if cost.minimizer is not None:
        return cost(cost.minimizer(theta, a))
    return numeric_minimizer(cost, theta, a)[1]


def _power_closed_form(cost: CostSpec, theta, a: float) -> list[float]:
    r = 1.0 / (cost.exponent - 1.0)
    w = [(t / c) ** r for c, t in zip(cost.coefficients, theta)]
    s = sum(t * v for t, v in zip(theta, w))
    return [a * v / s for v in w]


def _power_bisection(cost: CostSpec, theta, a: float, tol: float = 1e-15) -> list[float]:
    """Solve ``C_i'(f_i) = y theta_i`` for the multiplier ``y`` with ``theta'f = a``."""
    p, c = cost.exponent, cost.coefficients
    r = 1.0 / (p - 1.0)

    def q_of(y):
        return [(y * t / (p * ci)) ** r for ci, t in zip(c, theta)]

    def load(y):
        return sum(t * v for t, v in zip(theta, q_of(y)))

    lo, hi = 0.0, 1.0
    while load(hi) < a:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if load(mid) < a:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    q = q_of(0.5 * (lo + hi))
    s = sum(t * v for t, v in zip(theta, q))
    # remove the last bisection residue so that theta'q = a to rounding
    return [v * a / s for v in q]


def minimizer_f(cost: CostSpec, theta, a: float, root: Optional[int] = None) -> np.ndarray:
    """A minimizer ``f(a)`` of the cost on the workload slice; zero for ``a <= 0``.

    For linear costs all mass goes to ``root`` (default: cheapest class per
    unit workload); separable power costs use bisection on the Lagrange
    multiplier; custom costs use their closed form or the numeric search.
    """
    theta = np.asarray(theta, dtype=float)
    a = float(a)
    if a <= 0.0:
        return np.zeros(len(theta))
    if cost.kind == "linear":
        i0 = linear_root(cost.coefficients, theta) if root is None else root
        q = np.zeros(len(theta))
        q[i0] = a / theta[i0]
        return q
    if cost.kind == "separable_power":
        return np.array(_power_bisection(cost, list(theta), a))
    if cost.minimizer is not None:
        return np.asarray(cost.minimizer(theta, a), dtype=float)
    q, v = numeric_minimizer(cost, theta, a)
    resid = abs(float(np.dot(theta, q)) - a)
    if resid > 1e-8 * max(1.0, a):
        raise MinimizerError(f"numeric minimizer did not converge: |theta'q - a| = {resid:.3g}")
    return np.asarray(q)


class Minimizer:
    """Callable ``a -> f(a)`` returning lists, tuned for repeated evaluation."""

    def __init__(self, cost: CostSpec, theta, root: Optional[int] = None):
        self.cost = cost
        self.theta = [float(t) for t in theta]
        self.root = root
        self.direction = None
        if cost.homogeneous:
            self.direction = [float(v) for v in minimizer_f(cost, self.theta, 1.0, root)]
        else:
            self._cached = lru_cache(maxsize=1 << 16)(self._eval)

    def _eval(self, a: float):
        return tuple(float(v) for v in minimizer_f(self.cost, self.theta, a, self.root))

    def __call__(self, a: float) -> list[float]:
        if a <= 0.0:
            return [0.0] * len(self.theta)
        if self.direction is not None:
            return [a * d for d in self.direction]
        return list(self._cached(a))


@dataclass(frozen=True)
class MinimizerParams:
    theta: tuple[float, ...]
    root: int
    kappa: float
    kappa_bar: float

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        if not 0 < self.kappa < self.kappa_bar:
            raise ConfigError("need 0 < kappa < kappa_bar")

    @classmethod
    def for_scale(cls, theta, root: int, n: int, kappa_exp: float = 1 / 20, kappa_bar_exp: float = 1 / 100):
        """Thresholds ``kappa = n^-kappa_exp`` and ``kappa_bar = n^-kappa_bar_exp``."""
        return cls(tuple(theta), root, n ** -kappa_exp, n ** -kappa_bar_exp)


class PerturbedMinimizer:
    """``x -> f^n(x)``: non-root classes held strictly positive near zero workload."""

    def __init__(self, f: Callable[[float], Sequence[float]], params: MinimizerParams):
        self.f = f
        self.params = params
        theta = params.theta
        n = len(theta)
        self.n = n
        self.root = params.root
        self.theta = theta
        self.inv = [1.0 / (n * t) for t in theta]  # (I theta_i)^{-1}
        self.floor = [params.kappa * v for v in self.inv]
        self.others = [i for i in range(n) if i != params.root]

    def __call__(self, x: float) -> list[float]:
        p = self.params
        theta, root = self.theta, self.root
        out = [0.0] * self.n
        if x <= 0.0:
            return out
        if x < p.kappa:
            for i in self.others:
                out[i] = self.inv[i] * x
        elif x < p.kappa_bar:
            for i in self.others:
                out[i] = self.floor[i]
        else:
            fx = self.f(x)
            shrink = 1.0 - p.kappa_bar / x
            for i in self.others:
                out[i] = fx[i] * shrink + self.floor[i]
        rest = x
        for i in self.others:
            rest -= theta[i] * out[i]
        out[root] = rest / theta[root]
        return out


def perturbed_f_n(f, params: MinimizerParams, x: float) -> np.ndarray:
    return np.array(PerturbedMinimizer(f, params)(x))


def default_root(cost: CostSpec, theta) -> int:
    """Cheapest class for linear costs, otherwise the class with the largest index."""
    if cost.kind == "linear":
        return linear_root(cost.coefficients, theta)
    return len(theta) - 1


def check_cost(cost: CostSpec, theta, a_max: float = 5.0, points: int = 200, pairs: int = 500,
               seed: int = 0) -> list[str]:
    """Spot-check monotonicity of ``C`` and midpoint convexity of ``C*``."""
    findings = []
    rng = np.random.default_rng(seed)
    n = len(theta)
    if cost([0.0] * n) < 0:
        findings.append("C(0) < 0")
    for _ in range(pairs):
        q = rng.uniform(0, a_max, n)
        q2 = q + rng.uniform(0, a_max, n) * (rng.random(n) < 0.5)
        if cost(list(q2)) < cost(list(q)) - 1e-12:
            findings.append("cost is not nondecreasing")
            break
    grid = np.linspace(0.0, a_max, points)
    vals = np.array([c_star(cost, theta, a) for a in grid])
    for k in range(points):
        for l in range(k + 2, points, 2):
            if vals[(k + l) // 2] > 0.5 * (vals[k] + vals[l]) + 1e-7:
                findings.append(f"C* not midpoint convex near a={grid[(k + l) // 2]:.4g}")
                return findings
    return findings
