"""Routing/assignment policies: the tree-based tracking policy and baselines.

Policies expose two hooks used by the simulation engine:

``route(state, i) -> j or -1``
    an arriving class-``i`` customer goes to pool ``j`` or joins the queue;
``admit(state, j) -> i or -1``
    a server freed in pool ``j`` takes the head of queue ``i`` or idles.

Both read the state at ``t-`` (before the event is applied) and never mutate it.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from .cost import CostSpec, Minimizer, MinimizerParams, PerturbedMinimizer, default_root
from .errors import ConfigError, NdsLabError
from .rng import POLICY, uniform_stream

POLICY_NAMES = ("tracking", "greedy", "random", "fifo")


@dataclass(frozen=True)
class Decision:
    kind: str  # route_to_pool | queue | admit_class | stay_idle
    target: Optional[int] = None

    @classmethod
    def from_route(cls, j: int) -> "Decision":
        return cls("queue") if j < 0 else cls("route_to_pool", j)

    @classmethod
    def from_admit(cls, i: int) -> "Decision":
        return cls("stay_idle") if i < 0 else cls("admit_class", i)


@dataclass(frozen=True)
class TreeLabeling:
    """Rooted labeling of the basic-activity tree.

    Labels are 1-based: classes get ``1..I`` and pools ``I+1..I+J``, nodes
    farther from the root getting smaller labels. ``below`` and ``children``
    are sorted by label.
    """

    root: int
    class_label: tuple[int, ...]
    pool_label: tuple[int, ...]
    j0: int
    below: tuple[tuple[int, ...], ...]      # J(i): pools under class i
    above: tuple[Optional[int], ...]        # jbar(i): pool over class i (None at root)
    children: tuple[tuple[int, ...], ...]   # I(j): classes under pool j
    parent: tuple[int, ...]                 # ibar(j): class over pool j
    class_dist: tuple[int, ...]
    pool_dist: tuple[int, ...]


def label_tree(basic_edges, n_classes: int, n_pools: int, root: int) -> TreeLabeling:
    edges = list(basic_edges)
    if len(edges) != n_classes + n_pools - 1:
        raise NdsLabError("basic activities do not form a spanning tree")
    adj_c = [[] for _ in range(n_classes)]
    adj_p = [[] for _ in range(n_pools)]
    for i, j in edges:
        adj_c[i].append(j)
        adj_p[j].append(i)
    cd = [-1] * n_classes
    pd = [-1] * n_pools
    cd[root] = 0
    frontier = deque([("c", root)])
    while frontier:
        kind, v = frontier.popleft()
        if kind == "c":
            for j in adj_c[v]:
                if pd[j] < 0:
                    pd[j] = cd[v] + 1
                    frontier.append(("p", j))
        else:
            for i in adj_p[v]:
                if cd[i] < 0:
                    cd[i] = pd[v] + 1
                    frontier.append(("c", i))
    if min(cd) < 0 or min(pd) < 0:
        raise NdsLabError("basic activities do not form a spanning tree")

    class_order = sorted(range(n_classes), key=lambda i: (-cd[i], i))
    pool_order = sorted(range(n_pools), key=lambda j: (-pd[j], j))
    class_label = [0] * n_classes
    pool_label = [0] * n_pools
    for rank, i in enumerate(class_order):
        class_label[i] = rank + 1
    for rank, j in enumerate(pool_order):
        pool_label[j] = n_classes + rank + 1

    below = tuple(tuple(sorted((j for j in adj_c[i] if pd[j] > cd[i]), key=lambda j: pool_label[j]))
                  for i in range(n_classes))
    above = tuple(next((j for j in adj_c[i] if pd[j] < cd[i]), None) for i in range(n_classes))
    children = tuple(tuple(sorted((i for i in adj_p[j] if cd[i] > pd[j]), key=lambda i: class_label[i]))
                     for j in range(n_pools))
    parent = tuple(next(i for i in adj_p[j] if cd[i] < pd[j]) for j in range(n_pools))
    j0 = max(adj_c[root], key=lambda j: pool_label[j])
    return TreeLabeling(root, tuple(class_label), tuple(pool_label), j0, below, above,
                        children, parent, tuple(cd), tuple(pd))


class Policy:
    name = "policy"
    uses_rng = False

    def bind(self, seed: int) -> "Policy":
        """Per-replication copy; policies holding randomness get their stream here."""
        return self

    def route(self, state, i: int) -> int:
        raise NotImplementedError

    def admit(self, state, j: int) -> int:
        raise NotImplementedError

    # pool -> classes such that Q_i > 0 for all of them forces the pool to be fully busy;
    # None when the policy makes no such promise
    work_conserving_graph = None


class TrackingPolicy(Policy):
    """Steers scaled queues towards ``f^n(theta' X_hat)`` along the basic-activity tree."""

    name = "tracking"

    def __init__(self, instance, fluid, labeling: TreeLabeling, target: PerturbedMinimizer):
        self.labeling = labeling
        self.target = target
        self.below = labeling.below
        self.children = labeling.children
        self.parent = labeling.parent
        self.theta = [float(v) for v in fluid.theta]
        self.inv_sqrt_n = 1.0 / instance.sqrt_n
        # theta' (sum_j xi*_ij N_j): the fluid headcount in workload units
        self.offset = float(sum(self.theta[i] * fluid.xi[i, j] * instance.N[j]
                                for i in range(len(self.theta)) for j in range(len(instance.N))))
        graph = [[] for _ in range(len(instance.N))]
        for i, j in fluid.basic_edges:
            graph[j].append(i)
        self.work_conserving_graph = tuple(tuple(v) for v in graph)

    def workload_hat(self, state) -> float:
        X = state.X
        s = 0.0
        for th, x in zip(self.theta, X):
            s += th * x
        return (s - self.offset) * self.inv_sqrt_n

    def route(self, state, i: int) -> int:
        idle = state.I
        for j in self.below[i]:
            if idle[j] > 0:
                return j
        return -1

    def admit(self, state, j: int) -> int:
        Q = state.Q
        kids = self.children[j]
        if kids:
            target = self.target(self.workload_hat(state))
            r = self.inv_sqrt_n
            for k in kids:
                if Q[k] * r > target[k]:
                    return k
        p = self.parent[j]
        if Q[p] > 0:
            return p
        return -1


class GreedyPolicy(Policy):
    """Longest compatible queue on completion; lowest-index idle pool on arrival."""

    name = "greedy"

    def __init__(self, topology):
        self.pools_of = tuple(tuple(topology.class_pools(i)) for i in range(topology.n_classes))
        self.classes_of = tuple(tuple(topology.pool_classes(j)) for j in range(topology.n_pools))
        self.work_conserving_graph = self.classes_of

    def route(self, state, i: int) -> int:
        idle = state.I
        for j in self.pools_of[i]:
            if idle[j] > 0:
                return j
        return -1

    def admit(self, state, j: int) -> int:
        Q = state.Q
        best, best_q = -1, 0
        for i in self.classes_of[j]:
            if Q[i] > best_q:
                best, best_q = i, Q[i]
        return best


class FifoPolicy(GreedyPolicy):
    """Serve the compatible customer who arrived first."""

    name = "fifo"

    def admit(self, state, j: int) -> int:
        Q, waiting = state.Q, state.waiting
        best, best_t = -1, None
        for i in self.classes_of[j]:
            if Q[i] > 0:
                t = waiting[i][0][0]
                if best_t is None or t < best_t:
                    best, best_t = i, t
        return best


class RandomPolicy(GreedyPolicy):
    """Uniform choice among feasible routes / admissions."""

    name = "random"
    uses_rng = True

    def __init__(self, topology, stream=None):
        super().__init__(topology)
        self._topology = topology
        self.stream = stream

    def bind(self, seed: int) -> "RandomPolicy":
        return RandomPolicy(self._topology, uniform_stream(seed, POLICY))

    def _pick(self, options):
        if len(options) == 1:
            return options[0]
        k = int(self.stream.draw() * len(options))
        return options[min(k, len(options) - 1)]

    def route(self, state, i: int) -> int:
        idle = state.I
        options = [j for j in self.pools_of[i] if idle[j] > 0]
        return self._pick(options) if options else -1

    def admit(self, state, j: int) -> int:
        Q = state.Q
        options = [i for i in self.classes_of[j] if Q[i] > 0]
        return self._pick(options) if options else -1


def make_policy(name: str, instance, fluid, cost: Optional[CostSpec] = None, root: Optional[int] = None,
                kappa_exp: float = 1 / 20, kappa_bar_exp: float = 1 / 100) -> Policy:
    """Construct a policy by name for one scaled system."""
    topo = instance.topology
    if name == "tracking":
        if cost is None:
            raise ConfigError("the tracking policy needs a cost")
        fluid.require_assumptions()
        target = make_target(instance, fluid, cost, root, kappa_exp, kappa_bar_exp)
        labeling = label_tree(fluid.basic_edges, topo.n_classes, topo.n_pools, target.root)
        return TrackingPolicy(instance, fluid, labeling, target)
    if name == "greedy":
        return GreedyPolicy(topo)
    if name == "fifo":
        return FifoPolicy(topo)
    if name == "random":
        return RandomPolicy(topo)
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")


def make_target(instance, fluid, cost: CostSpec, root: Optional[int] = None,
                kappa_exp: float = 1 / 20, kappa_bar_exp: float = 1 / 100) -> PerturbedMinimizer:
    """The perturbed minimizer ``f^n`` for the n-th system."""
    theta = [float(v) for v in fluid.theta]
    if root is None:
        root = default_root(cost, theta)
    f = Minimizer(cost, theta, root if cost.kind == "linear" else None)
    params = MinimizerParams.for_scale(theta, root, instance.n, kappa_exp, kappa_bar_exp)
    return PerturbedMinimizer(f, params)


# -- spec-level decision functions ---------------------------------------------------


def tracking_on_arrival(state, labeling: TreeLabeling, i: int, t: float = None) -> Decision:
    for j in labeling.below[i]:
        if state.I[j] > 0:
            return Decision("route_to_pool", j)
    return Decision("queue")


def tracking_on_completion(state, labeling: TreeLabeling, fluid, instance, target: PerturbedMinimizer,
                           j: int, t: float = None) -> Decision:
    pol = TrackingPolicy(instance, fluid, labeling, target)
    return Decision.from_admit(pol.admit(state, j))


def baseline_decide(kind: str, state, event, topology, stream=None) -> Decision:
    """Decision of a baseline policy for ``event = ("arrival", i)`` or ``("completion", j)``."""
    if kind in ("greedy_longest_queue", "greedy"):
        pol = GreedyPolicy(topology)
    elif kind in ("fifo_priority", "fifo"):
        pol = FifoPolicy(topology)
    elif kind in ("random_compatible", "random"):
        pol = RandomPolicy(topology, stream)
    else:
        raise ConfigError(f"unknown baseline {kind!r}")
    what, idx = event
    if what == "arrival":
        return Decision.from_route(pol.route(state, idx))
    return Decision.from_admit(pol.admit(state, idx))
