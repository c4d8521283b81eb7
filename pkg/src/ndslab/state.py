"""Live state of one replication."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


@dataclass
class SimState:
    """Counts of the n-th system at the current event time.

    ``B``, ``clock`` are aligned with ``topology.edges``. ``waiting`` holds
    ``(arrival time, scaled queue length seen on arrival)`` of queued customers
    per class in FIFO order.
    """

    t: float
    X: list[int]
    Q: list[int]
    B: list[int]
    I: list[int]
    N: list[int]
    edges: tuple[tuple[int, int], ...]
    next_arrival: list[float] = field(default_factory=list)
    clock: list[float] = field(default_factory=list)
    waiting: list[deque] = field(default_factory=list)

    @classmethod
    def from_counts(cls, instance, B, Q=None) -> "SimState":
        topo = instance.topology
        n_i = topo.n_classes
        Q = [0] * n_i if Q is None else list(Q)
        X = list(Q)
        I = [int(v) for v in instance.N]
        for (i, j), b in zip(topo.edges, B):
            X[i] += b
            I[j] -= b
        return cls(
            t=0.0, X=X, Q=Q, B=list(B), I=I, N=[int(v) for v in instance.N], edges=topo.edges,
            next_arrival=[math.inf] * n_i, clock=[math.inf] * topo.n_edges,
            waiting=[deque([(0.0, math.nan)] * q) for q in Q],
        )

    def busy(self, i: int, j: int) -> int:
        for k, e in enumerate(self.edges):
            if e == (i, j):
                return self.B[k]
        return 0

    def check(self) -> list[str]:
        """Return violated conservation and integrality conditions (empty if none)."""
        bad = []
        n_i, n_j = len(self.X), len(self.I)
        in_service = [0] * n_i
        pool_busy = [0] * n_j
        for (i, j), b in zip(self.edges, self.B):
            in_service[i] += b
            pool_busy[j] += b
            if b < 0:
                bad.append(f"negative busy count on ({i},{j})")
        for i in range(n_i):
            if self.X[i] != self.Q[i] + in_service[i]:
                bad.append(f"headcount identity fails for class {i}")
            if self.Q[i] < 0 or self.X[i] < 0:
                bad.append(f"negative count for class {i}")
            if len(self.waiting[i]) != self.Q[i]:
                bad.append(f"waiting list out of sync for class {i}")
        for j in range(n_j):
            if self.N[j] != self.I[j] + pool_busy[j]:
                bad.append(f"server identity fails for pool {j}")
            if self.I[j] < 0:
                bad.append(f"negative idle count for pool {j}")
        return bad
