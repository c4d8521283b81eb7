"""Static fluid analysis: balanced allocation, basic-activity tree, workload direction."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AssumptionError, InfeasibleError, NdsLabError
from .model import BaseParameters, Topology
from .simplex import solve_lp

BASIC_TOL = 1e-9


def solve_static_lp(topology: Topology, lam, mu_bar) -> tuple[np.ndarray, float]:
    """Minimize the maximal pool utilization subject to the balance equation.

    Variables are the per-edge allocations and the utilization bound ``rho``;
    pool capacities ``sum_i xi_ij <= 1`` are part of the feasible set.

    Returns
    -------
    xi : (I, J) allocation matrix, zero off the edge set.
    rho : optimal utilization.
    """
    lam = np.asarray(lam, dtype=float)
    mu_bar = np.asarray(mu_bar, dtype=float)
    n_i, n_j, edges = topology.n_classes, topology.n_pools, topology.edges
    k = len(edges)
    n_var = k + 1 + 2 * n_j  # xi, rho, utilization slacks, capacity slacks
    rho_col = k
    A = np.zeros((n_i + 2 * n_j, n_var))
    b = np.zeros(n_i + 2 * n_j)
    for e, (i, j) in enumerate(edges):
        A[i, e] = mu_bar[i, j]
        A[n_i + j, e] = 1.0
        A[n_i + n_j + j, e] = 1.0
    b[:n_i] = lam
    for j in range(n_j):
        A[n_i + j, rho_col] = -1.0
        A[n_i + j, k + 1 + j] = 1.0
        A[n_i + n_j + j, k + 1 + n_j + j] = 1.0
        b[n_i + n_j + j] = 1.0
    c = np.zeros(n_var)
    c[rho_col] = 1.0
    try:
        res = solve_lp(c, A, b)
    except InfeasibleError as exc:
        raise InfeasibleError("overloaded: no balanced allocation") from exc
    xi = np.zeros((n_i, n_j))
    for e, (i, j) in enumerate(edges):
        xi[i, j] = res.x[e]
    return xi, float(res.x[rho_col])


def _components(n_i: int, n_j: int, edges) -> int:
    parent = list(range(n_i + n_j))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ra, rb = find(i), find(n_i + j)
        if ra != rb:
            parent[ra] = rb
    return len({find(v) for v in range(n_i + n_j)})


@dataclass(frozen=True)
class BasicTree:
    edges: tuple[tuple[int, int], ...]
    ht: bool
    crp: bool
    is_tree: bool
    uniqueness_certified: bool
    findings: tuple[str, ...] = ()


def extract_basic_tree(xi, rho, topology: Topology, mu_bar, lam, tol: float = BASIC_TOL) -> BasicTree:
    """Basic activities of the fluid optimum and the HT / CRP verdicts."""
    xi = np.asarray(xi, dtype=float)
    mu_bar = np.asarray(mu_bar, dtype=float)
    n_i, n_j = topology.n_classes, topology.n_pools
    basic = tuple((i, j) for (i, j) in topology.edges if xi[i, j] > tol)
    findings = []

    # uniqueness proxy: the tree flow equations pin xi down
    certified = False
    if len(basic) > n_i + n_j - 1:
        findings.append("uniqueness not certified: basic activities contain a cycle")
    else:
        M = np.zeros((n_i + n_j, len(basic)))
        rhs = np.concatenate([np.asarray(lam, dtype=float), np.ones(n_j)])
        for e, (i, j) in enumerate(basic):
            M[i, e] = mu_bar[i, j]
            M[n_i + j, e] = 1.0
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        rank = np.linalg.matrix_rank(M)
        target = np.array([xi[i, j] for i, j in basic])
        if rank == len(basic) and np.allclose(sol, target, rtol=0.0, atol=1e-9) \
                and np.allclose(M @ sol, rhs, rtol=0.0, atol=1e-9):
            certified = True
        else:
            findings.append("uniqueness not certified: flow equations do not reproduce the allocation")

    loads = xi.sum(axis=0)
    saturated = bool(np.all(np.abs(loads - 1.0) <= tol))
    critical = abs(rho - 1.0) <= tol
    if not critical:
        findings.append(f"not critically loaded: rho*={rho:.12g}")
    if not saturated:
        findings.append("some pool is not saturated by the fluid allocation")
    ht = critical and saturated and certified

    n_comp = _components(n_i, n_j, basic)
    crp = n_comp == 1
    if not crp:
        findings.append(f"basic-activity graph has {n_comp} components")
    is_tree = crp and len(basic) == n_i + n_j - 1
    return BasicTree(basic, ht, crp, is_tree, certified, tuple(findings))


def compute_theta(basic_edges, mu_bar, n_classes: int, n_pools: int) -> tuple[np.ndarray, np.ndarray]:
    """Workload direction from the tree relations ``theta_i mu_bar_ij = z_j``.

    Propagates from class 0 seeded with 1 and normalizes in the Euclidean norm.
    """
    basic_edges = list(basic_edges)
    mu_bar = np.asarray(mu_bar, dtype=float)
    if len(basic_edges) != n_classes + n_pools - 1 or _components(n_classes, n_pools, basic_edges) != 1:
        raise NdsLabError("basic activities do not form a spanning tree")
    theta = np.full(n_classes, np.nan)
    z = np.full(n_pools, np.nan)
    theta[0] = 1.0
    frontier = deque([("class", 0)])
    while frontier:
        kind, v = frontier.popleft()
        for i, j in basic_edges:
            if kind == "class" and i == v and np.isnan(z[j]):
                z[j] = theta[i] * mu_bar[i, j]
                frontier.append(("pool", j))
            elif kind == "pool" and j == v and np.isnan(theta[i]):
                theta[i] = z[j] / mu_bar[i, j]
                frontier.append(("class", i))
    norm = float(np.sqrt(theta @ theta))
    return theta / norm, z / norm


def z_star(theta, mu_bar) -> np.ndarray:
    """``max_k theta_k mu_bar_kj`` per pool."""
    return (np.asarray(theta)[:, None] * np.asarray(mu_bar)).max(axis=0)


def compute_diffusion_params(params: BaseParameters, xi) -> tuple[np.ndarray, np.ndarray]:
    """Per-class drift and diffusion coefficient of the limiting Brownian motion."""
    xi = np.asarray(xi, dtype=float)
    ell = params.lam_hat - (params.mu_hat * xi).sum(axis=1)
    sigma = np.sqrt(params.lam * params.cv ** 2 + (params.mu_bar * xi).sum(axis=1))
    return ell, sigma


@dataclass(frozen=True)
class FluidSolution:
    xi: np.ndarray
    rho: float
    tree: BasicTree
    theta: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    ell: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    @property
    def basic_edges(self):
        return self.tree.edges

    @property
    def ht(self) -> bool:
        return self.tree.ht

    @property
    def crp(self) -> bool:
        return self.tree.crp

    @property
    def drift(self) -> float:
        """Drift of the one-dimensional workload, ``theta' ell``."""
        return float(self.theta @ self.ell)

    @property
    def variance(self) -> float:
        """Variance rate of the workload, ``sum_i theta_i^2 sigma_i^2`` (independent components)."""
        return float((self.theta ** 2) @ (self.sigma ** 2))

    def require_assumptions(self) -> None:
        if not (self.tree.ht and self.tree.crp and self.tree.is_tree):
            raise AssumptionError("; ".join(self.tree.findings) or "fluid assumptions fail")

    def to_dict(self, topology: Topology) -> dict:
        def lst(a):
            return None if a is None else [float(v) for v in a]

        return {
            "xi": {f"{i + 1},{j + 1}": float(self.xi[i, j]) for i, j in topology.edges},
            "rho": float(self.rho),
            "basic_edges": [[i + 1, j + 1] for i, j in self.tree.edges],
            "theta": lst(self.theta),
            "z_star": lst(self.z),
            "ell": lst(self.ell),
            "sigma": lst(self.sigma),
            "heavy_traffic": self.tree.ht,
            "resource_pooling": self.tree.crp,
            "tree": self.tree.is_tree,
            "uniqueness_certified": self.tree.uniqueness_certified,
            "findings": list(self.tree.findings),
        }


def analyze(topology: Topology, params: BaseParameters, tol: float = BASIC_TOL) -> FluidSolution:
    """Solve the static LP and derive everything downstream of it.

    The workload quantities are filled in only when the basic activities form
    a spanning tree; the verdicts are always reported.
    """
    xi, rho = solve_static_lp(topology, params.lam, params.mu_bar)
    tree = extract_basic_tree(xi, rho, topology, params.mu_bar, params.lam, tol)
    ell, sigma = compute_diffusion_params(params, xi)
    theta = z = None
    if tree.is_tree:
        theta, z = compute_theta(tree.edges, params.mu_bar, topology.n_classes, topology.n_pools)
    return FluidSolution(xi=xi, rho=rho, tree=tree, theta=theta, z=z, ell=ell, sigma=sigma)
