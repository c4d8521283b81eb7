"""Discrete-event simulation of the n-th parallel-server system.

Arrivals are renewal processes run on per-class substreams. Services are
exponential: each activity ``(i, j)`` carries one aggregate clock of rate
``mu_n_ij * B_ij``, redrawn whenever ``B_ij`` changes. By memorylessness this
has the same law as driving departures with time-changed unit Poisson
processes, at O(1) cost per event.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .cost import CostSpec
from .errors import EventCapExceeded, InvariantViolation
from .model import SystemInstance, initial_state
from .rng import ACTIVITY, CUSTOMER, exponential_stream, interarrival_stream, uniform_stream

EVENT_CAP = 10 ** 9
FULL_RECORD_MAX_N = 10 ** 4
SUBSAMPLE_POINTS = 5000


@dataclass(frozen=True)
class RecordConfig:
    """What to keep from a run besides the online summary statistics.

    ``mode`` is ``"full"`` (every event), ``"subsample"`` (uniform grid of
    step ``dt``, default ``u/5000``), ``"none"``, or ``"auto"`` (full up to
    ``n = 10^4``, subsampled above).
    """

    mode: str = "auto"
    dt: Optional[float] = None
    customers: bool = False
    arrivals: bool = False


@dataclass
class PathRecord:
    """Raw piecewise-constant paths and summary statistics of one replication.

    ``times[k]`` is the start of the k-th constant piece; ``Q``, ``B``, ``I``
    hold the raw integer counts on that piece. Summary statistics in
    ``stats`` are accumulated online at full event resolution whatever the
    recording mode.
    """

    n: int
    u: float
    seed: int
    policy: str
    edges: tuple
    times: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    I: np.ndarray
    N: np.ndarray
    events: int
    arrivals: np.ndarray      # A_i(u)
    departures: np.ndarray    # D_ij(u), per edge
    busy_time: np.ndarray     # T_ij(u) = mu_n_ij * int_0^u B_ij, per edge
    X0: np.ndarray
    Xu: np.ndarray
    stats: dict = field(default_factory=dict)
    customers: Optional[np.ndarray] = None
    arrival_log: Optional[list] = None

    @property
    def X(self) -> np.ndarray:
        X = self.Q.copy()
        for e, (i, _) in enumerate(self.edges):
            X[:, i] += self.B[:, e]
        return X


CUSTOMER_DTYPE = np.dtype([
    ("cls", np.int64), ("pool", np.int64), ("arrival", float),
    ("wait", float), ("service", float), ("queue_seen", float),
])


def run_simulation(instance: SystemInstance, fluid, policy, u: float, seed: int,
                   record: Optional[RecordConfig] = None, *,
                   costs: Optional[Mapping[str, CostSpec]] = None, target=None,
                   theta=None, debug: bool = False, event_cap: int = EVENT_CAP,
                   state=None) -> PathRecord:
    """Simulate one replication on ``[0, u]``.

    Parameters
    ----------
    instance, fluid
        The n-th system and its fluid solution (``fluid.xi`` fixes the initial
        busy counts and the centering of the scaled processes).
    policy
        A :class:`ndslab.policy.Policy`.
    u : horizon.
    seed : replication seed; all substreams derive from it.
    record : what to keep besides online statistics.
    costs : named costs whose integrals ``int_0^u C(Q_hat)`` are accumulated.
    target : ``x -> f^n(x)`` used for the online state-space-collapse gap
        ``sup_t |Q_hat - f^n(theta' Q_hat)|_1``.
    theta : workload direction for ``theta' Q_hat`` statistics (defaults to ``fluid.theta``).
    debug : check conservation, integrality and work conservation at every event.
    """
    if not u > 0:
        raise ValueError("horizon must be positive")
    record = record or RecordConfig()
    costs = dict(costs or {})
    topo = instance.topology
    n_i, n_j, n_e = topo.n_classes, topo.n_pools, topo.n_edges
    edges = topo.edges
    e_cls = [i for i, _ in edges]
    e_pool = [j for _, j in edges]
    edge_at = {e: k for k, e in enumerate(edges)}
    rate = [float(instance.mu_n[i, j]) for i, j in edges]
    lam = [float(v) for v in instance.lam_n]
    r = 1.0 / instance.sqrt_n
    if theta is None:
        theta = getattr(fluid, "theta", None)
    theta = None if theta is None else [float(v) for v in theta]
    xi = fluid.xi
    b_center = [float(xi[i, j] * instance.N[j]) for i, j in edges]

    if state is None:
        state = initial_state(instance, fluid)
    policy = policy.bind(seed)
    route, admit = policy.route, policy.admit
    wc_graph = policy.work_conserving_graph if debug else None

    X, Q, B, I = state.X, state.Q, state.B, state.I
    waiting = state.waiting
    t = state.t
    X0 = list(X)

    arr = [interarrival_stream(seed, i, instance.params.families[i], float(instance.params.cv[i]))
           for i in range(n_i)]
    arr_draw = [s.draw for s in arr]
    svc_draw = [exponential_stream(seed, ACTIVITY, e).draw for e in range(n_e)]
    inf = math.inf

    # when[0:n_e] are activity clocks, when[n_e:] next arrivals; list.index on the
    # minimum gives completions priority over arrivals and lower streams first
    when = [inf] * (n_e + n_i)
    for e in range(n_e):
        if B[e] > 0:
            when[e] = t + svc_draw[e]() / (rate[e] * B[e])
    for i in range(n_i):
        if lam[i] > 0:
            when[n_e + i] = t + arr_draw[i]() / lam[i]

    A = [0] * n_i
    D = [0] * n_e
    busy_int = [0.0] * n_e
    last_b = [t] * n_e

    want_customers = record.customers
    cust_pick = uniform_stream(seed, CUSTOMER).draw if want_customers else None
    in_service = [[(None, None, 0.0)] * B[e] for e in range(n_e)] if want_customers else None
    cust_rows = [] if want_customers else None
    arrival_log = [array("d") for _ in range(n_i)] if record.arrivals else None

    # online statistics
    cost_names = list(costs)
    cost_fns = [costs[k].scaled_evaluator(r) for k in cost_names]
    n_costs = len(cost_fns)
    cost_now = [fn(Q) for fn in cost_fns]
    cost_int = [0.0] * n_costs

    def theta_q():
        s = 0.0
        for th, q in zip(theta, Q):
            s += th * q
        return s * r

    def ssc_gap():
        tq = theta_q()
        fv = target(tq)
        g = 0.0
        for q, f in zip(Q, fv):
            g += abs(q * r - f)
        return g

    def b_hat_norm():
        s = 0.0
        for b, c in zip(B, b_center):
            s += abs(b - c)
        return s * r

    have_theta = theta is not None
    tq_now = theta_q() if have_theta else 0.0
    tq_int = 0.0
    q_int = [0.0] * n_i
    gap_now = ssc_gap() if target is not None else 0.0
    gap_sup = gap_now
    bh_now = b_hat_norm()
    bh_sup = bh_now

    # recording
    mode = record.mode
    if mode == "auto":
        mode = "full" if instance.n <= FULL_RECORD_MAX_N else "subsample"
    rec_t = array("d")
    rec_c = array("q")
    width = n_i + n_e + n_j
    if mode == "full":
        rec_t.append(t)
        rec_c.extend(Q)
        rec_c.extend(B)
        rec_c.extend(I)
    grid_dt = record.dt if record.dt is not None else u / SUBSAMPLE_POINTS
    grid_k = 0
    grid_next = 0.0 if mode == "subsample" else inf

    checks = 0
    if debug:
        bad = state.check()
        if bad:
            raise InvariantViolation("initial state: " + "; ".join(bad))
    events = 0
    while True:
        tn = min(when)
        if tn > u:
            break
        k = when.index(tn)

        if grid_next < tn:
            while grid_next < tn and grid_next <= u:
                rec_t.append(grid_next)
                rec_c.extend(Q)
                rec_c.extend(B)
                rec_c.extend(I)
                grid_k += 1
                grid_next = grid_k * grid_dt

        dt = tn - t
        if dt > 0.0:
            for c in range(n_costs):
                cost_int[c] += cost_now[c] * dt
            tq_int += tq_now * dt
            for i in range(n_i):
                q_int[i] += Q[i] * dt
        t = tn
        events += 1
        if events > event_cap:
            raise EventCapExceeded(
                f"event cap {event_cap} exceeded at t={t:.6g} (X={X}, Q={Q}, B={B}, I={I})")

        q_changed = False
        if k < n_e:
            # service completion on activity k; decide on the freed server at t-
            j = e_pool[k]
            i = e_cls[k]
            choice = admit(state, j)
            busy_int[k] += B[k] * (t - last_b[k])
            last_b[k] = t
            B[k] -= 1
            D[k] += 1
            X[i] -= 1
            I[j] += 1
            if want_customers:
                lst = in_service[k]
                m = int(cust_pick() * len(lst))
                lst[m], lst[-1] = lst[-1], lst[m]
                a_t, s_t, q_seen = lst.pop()
                if a_t is not None:
                    cust_rows.append((i, j, a_t, (s_t - a_t), (t - s_t), q_seen))
            if choice >= 0:
                e2 = edge_at[(choice, j)]
                entry = waiting[choice].popleft()
                Q[choice] -= 1
                q_changed = True
                if e2 != k:
                    busy_int[e2] += B[e2] * (t - last_b[e2])
                    last_b[e2] = t
                B[e2] += 1
                I[j] -= 1
                when[e2] = t + svc_draw[e2]() / (rate[e2] * B[e2])
                if want_customers:
                    in_service[e2].append((entry[0], t, entry[1]))
            if choice < 0 or e2 != k:
                when[k] = t + svc_draw[k]() / (rate[k] * B[k]) if B[k] > 0 else inf
        else:
            i = k - n_e
            choice = route(state, i)
            A[i] += 1
            X[i] += 1
            if arrival_log is not None:
                arrival_log[i].append(t)
            if choice >= 0:
                e2 = edge_at[(i, choice)]
                busy_int[e2] += B[e2] * (t - last_b[e2])
                last_b[e2] = t
                B[e2] += 1
                I[choice] -= 1
                when[e2] = t + svc_draw[e2]() / (rate[e2] * B[e2])
                if want_customers:
                    in_service[e2].append((t, t, Q[i] * r))
            else:
                waiting[i].append((t, Q[i] * r))
                Q[i] += 1
                q_changed = True
            when[k] = t + arr_draw[i]() / lam[i]

        if q_changed:
            for c in range(n_costs):
                cost_now[c] = cost_fns[c](Q)
            if have_theta:
                tq_now = theta_q()
            if target is not None:
                gap_now = ssc_gap()
        if target is not None and gap_now > gap_sup:
            gap_sup = gap_now
        bh_now = b_hat_norm()
        if bh_now > bh_sup:
            bh_sup = bh_now

        if mode == "full":
            rec_t.append(t)
            rec_c.extend(Q)
            rec_c.extend(B)
            rec_c.extend(I)

        if debug:
            state.t = t
            bad = state.check()
            if wc_graph is not None:
                for jj in range(n_j):
                    if I[jj] > 0 and wc_graph[jj] and all(Q[ii] > 0 for ii in wc_graph[jj]):
                        bad.append(f"pool {jj} idles while all its classes queue")
            if bad:
                raise InvariantViolation(f"at t={t!r}, event {events}: " + "; ".join(bad))
            checks += 1

    # close the last piece at u
    dt = u - t
    if dt > 0.0:
        for c in range(n_costs):
            cost_int[c] += cost_now[c] * dt
        tq_int += tq_now * dt
        for i in range(n_i):
            q_int[i] += Q[i] * dt
    for e in range(n_e):
        busy_int[e] += B[e] * (u - last_b[e])
        last_b[e] = u
    if mode == "subsample":
        while grid_next <= u:
            rec_t.append(grid_next)
            rec_c.extend(Q)
            rec_c.extend(B)
            rec_c.extend(I)
            grid_k += 1
            grid_next = grid_k * grid_dt
    state.t = u

    # flow balance X(u) = X(0) + A(u) - sum_j D(u), checked unconditionally
    out = [X0[i] + A[i] for i in range(n_i)]
    for e in range(n_e):
        out[e_cls[e]] -= D[e]
    if out != list(X):
        raise InvariantViolation(f"flow balance fails at horizon: {out} != {X}")

    counts = np.frombuffer(rec_c, dtype=np.int64).reshape(-1, width) if len(rec_c) else \
        np.zeros((0, width), dtype=np.int64)
    stats = {
        "cost_integral": dict(zip(cost_names, cost_int)),
        "sup_ssc_gap": gap_sup if target is not None else float("nan"),
        "sup_b_hat": bh_sup,
        "mean_theta_q": tq_int / u if have_theta else float("nan"),
        "mean_queue": [v / u for v in q_int],
        "invariant_checks": checks,
    }
    customers = None
    if want_customers:
        rows = [(c, p, a, w * instance.sqrt_n, s * instance.sqrt_n, q) for c, p, a, w, s, q in cust_rows]
        customers = np.array(rows, dtype=CUSTOMER_DTYPE)
    return PathRecord(
        n=instance.n, u=float(u), seed=int(seed), policy=policy.name, edges=edges,
        times=np.frombuffer(rec_t, dtype=float).copy(),
        Q=counts[:, :n_i].copy(), B=counts[:, n_i:n_i + n_e].copy(), I=counts[:, n_i + n_e:].copy(),
        N=np.array(instance.N), events=events,
        arrivals=np.array(A), departures=np.array(D),
        busy_time=np.array([rate[e] * busy_int[e] for e in range(n_e)]),
        X0=np.array(X0), Xu=np.array(X), stats=stats, customers=customers,
        arrival_log=[np.frombuffer(a, dtype=float).copy() for a in arrival_log] if arrival_log else None,
    )


def integrate_cost(path: PathRecord, cost: CostSpec, u: Optional[float] = None) -> float:
    """``int_0^u C(Q_hat(t)) dt`` over the recorded piecewise-constant path.

    Exact for full recordings; on a subsampled record it is the left-point
    rule on the sampling grid (the online statistic in ``path.stats`` stays
    exact either way).
    """
    u = path.u if u is None else float(u)
    t = path.times
    if len(t) == 0 or t[0] > 0:
        raise ValueError("path does not start at time 0")
    ends = np.minimum(np.append(t[1:], u), u)
    widths = np.maximum(ends - t, 0.0)
    r = 1.0 / math.sqrt(path.n)
    vals = np.array([cost(row) for row in path.Q * r])
    return float(vals @ widths)


@dataclass(frozen=True)
class ScaledPaths:
    """Diffusion-scaled paths on the recorded grid."""

    times: np.ndarray
    Q_hat: np.ndarray
    X_hat: np.ndarray
    B_hat: np.ndarray
    I_hat: np.ndarray


IDENTITY_TOL = 1e-12


def scale_paths(raw: PathRecord, instance: SystemInstance, xi) -> ScaledPaths:
    """Center by the fluid allocation and scale by ``n^{-1/2}``.

    Raises :class:`InvariantViolation` if ``X_hat = Q_hat + sum_j B_hat`` fails
    anywhere on the grid.
    """
    xi = np.asarray(xi, dtype=float)
    r = 1.0 / instance.sqrt_n
    edges = raw.edges
    center_b = np.array([xi[i, j] * instance.N[j] for i, j in edges])
    center_x = (xi * instance.N[None, :]).sum(axis=1)
    Q_hat = raw.Q * r
    B_hat = (raw.B - center_b) * r
    X_hat = (raw.X - center_x) * r
    resid = X_hat - Q_hat
    for e, (i, _) in enumerate(edges):
        resid[:, i] -= B_hat[:, e]
    if resid.size and np.abs(resid).max() > IDENTITY_TOL * max(1.0, np.abs(X_hat).max()):
        raise InvariantViolation(f"scaled headcount identity fails: residual {np.abs(resid).max():.3g}")
    return ScaledPaths(raw.times, Q_hat, X_hat, B_hat, raw.I * r)


def time_average(times: np.ndarray, values: np.ndarray, u: float) -> np.ndarray:
    """Time average over ``[0, u]`` of a right-continuous step path."""
    ends = np.minimum(np.append(times[1:], u), u)
    w = np.maximum(ends - times, 0.0)
    return (w @ np.asarray(values, dtype=float)) / u


def slowdown_summary(path: PathRecord) -> dict:
    """Per-class sojourn/service ratios and the queue seen at arrival versus the scaled wait.

    Requires a run with ``RecordConfig(customers=True)``. Waits and services
    in ``path.customers`` are already multiplied by ``sqrt(n)``.
    """
    cust = path.customers
    if cust is None:
        raise ValueError("customers were not recorded")
    out = {}
    for i in sorted(set(int(c) for c in cust["cls"])):
        rows = cust[cust["cls"] == i]
        ratio = (rows["wait"] + rows["service"]) / rows["service"]
        waited = rows[~np.isnan(rows["queue_seen"])]
        out[i] = {
            "customers": int(len(rows)),
            "median_slowdown": float(np.median(ratio)),
            "mean_wait": float(rows["wait"].mean()),
            "mean_service": float(rows["service"].mean()),
            "mean_queue_seen": float(waited["queue_seen"].mean()) if len(waited) else float("nan"),
        }
    return out
