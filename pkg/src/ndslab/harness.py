"""Convergence studies: replications across scale indices and policies, lower bound, verdicts."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.stats import binomtest

from .bcp import RbmParams, lower_bound_estimate, summarize
from .config import ModelConfig, StudyConfig
from .cost import check_cost
from .errors import AssumptionError
from .fluid import FluidSolution, analyze
from .model import build_instance
from .policy import make_policy, make_target
from .sim import RecordConfig, run_simulation, scale_paths

SIGN_LEVEL = 0.05
RATIO_CAP = 1.25
SAMPLE_POINTS = 1000


@dataclass(frozen=True)
class RepResult:
    policy: str
    n: int
    rep: int
    seed: int
    cost: float
    ssc_gap_sup: float
    b_hat_sup: float
    theta_q_mean: float
    events: int
    invariant_checks: int


def prepare(model: ModelConfig) -> FluidSolution:
    """Fluid analysis plus the assumption checks a study needs."""
    fluid = analyze(model.topology, model.params)
    fluid.require_assumptions()
    findings = check_cost(model.cost, fluid.theta)
    if findings:
        raise AssumptionError("cost assumptions fail: " + "; ".join(findings))
    return fluid


def replication(model: ModelConfig, fluid: FluidSolution, policy_name: str, n: int, u: float,
                rep: int, seed: int, *, debug: bool = False, record: Optional[RecordConfig] = None):
    """One replication; returns the summary row and the raw path record."""
    instance = build_instance(model.params, model.topology, n)
    settings = model.policy
    policy = make_policy(policy_name, instance, fluid, model.cost, settings.root,
                         settings.kappa_exp, settings.kappa_bar_exp)
    target = make_target(instance, fluid, model.cost, settings.root,
                         settings.kappa_exp, settings.kappa_bar_exp)
    path = run_simulation(instance, fluid, policy, u, seed, record or RecordConfig(mode="none"),
                          costs={"cost": model.cost}, target=target, debug=debug)
    s = path.stats
    row = RepResult(policy_name, n, rep, seed, s["cost_integral"]["cost"], s["sup_ssc_gap"],
                    s["sup_b_hat"], s["mean_theta_q"], path.events, s["invariant_checks"])
    return row, path


def _job(args):
    model, fluid, policy_name, n, u, rep, seed, debug = args
    return replication(model, fluid, policy_name, n, u, rep, seed, debug=debug)[0]


def sign_test(wins: int, trials: int) -> float:
    """One-sided p-value for ``P(win) > 1/2`` (ties already removed)."""
    if trials == 0:
        return 1.0
    return float(binomtest(wins, trials, 0.5, alternative="greater").pvalue)


def paired_sign(smaller, larger) -> dict:
    """Sign test that ``smaller[k] < larger[k]`` more often than not; ties dropped."""
    a, b = np.asarray(smaller), np.asarray(larger)
    wins = int((a < b).sum())
    trials = int((a != b).sum())
    return {"wins": wins, "trials": trials, "p": sign_test(wins, trials)}


@dataclass
class StudyReport:
    config: dict
    fluid: dict
    lower_bound: dict
    cells: list
    verdicts: dict
    rows: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"config": self.config, "fluid": self.fluid, "lower_bound": self.lower_bound,
                "cells": self.cells, "verdicts": self.verdicts}


def _cell(policy: str, n: int, rows: list[RepResult], lb: dict) -> dict:
    cost = summarize([r.cost for r in rows])
    gaps = np.array([r.ssc_gap_sup for r in rows])
    bh = np.array([r.b_hat_sup for r in rows])
    tq = np.array([r.theta_q_mean for r in rows])
    ratio = cost["mean"] / lb["mean"] if lb["mean"] > 0 else math.nan
    ratio_se = abs(ratio) * math.hypot(cost["se"] / cost["mean"] if cost["mean"] else 0.0,
                                       lb["se"] / lb["mean"] if lb["mean"] else 0.0)
    return {
        "policy": policy, "n": n, "reps": len(rows),
        "cost_mean": cost["mean"], "cost_se": cost["se"], "cost_sd": cost["sd"],
        "ssc_gap_median": float(np.median(gaps)), "ssc_gap_mean": float(gaps.mean()),
        "ssc_gap_se": float(gaps.std(ddof=1) / math.sqrt(len(gaps))),
        "b_hat_median": float(np.median(bh)), "b_hat_mean": float(bh.mean()),
        "b_hat_se": float(bh.std(ddof=1) / math.sqrt(len(bh))),
        "theta_q_mean": float(tq.mean()), "theta_q_se": float(tq.std(ddof=1) / math.sqrt(len(tq))),
        "ratio": ratio, "ratio_se": ratio_se,
        "events_mean": float(np.mean([r.events for r in rows])),
    }


def _trend(values_by_n: list[np.ndarray]) -> dict:
    medians = [float(np.median(v)) for v in values_by_n]
    steps = [paired_sign(b, a) for a, b in zip(values_by_n, values_by_n[1:])]
    strict = all(b < a for a, b in zip(medians, medians[1:]))
    return {"medians": medians, "steps": steps, "strictly_decreasing": strict,
            "pass": strict and all(s["p"] < SIGN_LEVEL for s in steps)}


def verdicts(cfg: StudyConfig, rows: list[RepResult], cells: list[dict], lb: dict) -> dict:
    by = {}
    for r in rows:
        by.setdefault((r.policy, r.n), []).append(r)
    for v in by.values():
        v.sort(key=lambda r: r.rep)
    cell = {(c["policy"], c["n"]): c for c in cells}
    ns = list(cfg.n_schedule)
    out = {"lower_bound": [], "ssc": {}, "b_hat": {}}
    for (policy, n), c in sorted(cell.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        pooled = math.hypot(c["cost_se"], lb["se"])
        out["lower_bound"].append({"policy": policy, "n": n, "cost_mean": c["cost_mean"],
                                   "threshold": lb["mean"] - 3 * pooled,
                                   "pass": c["cost_mean"] >= lb["mean"] - 3 * pooled})
    for policy in cfg.policies:
        out["ssc"][policy] = _trend([np.array([r.ssc_gap_sup for r in by[(policy, n)]]) for n in ns])
        out["b_hat"][policy] = _trend([np.array([r.b_hat_sup for r in by[(policy, n)]]) for n in ns])
    if "tracking" in cfg.policies:
        ratios = [cell[("tracking", n)]["ratio"] for n in ns]
        out["tracking_ratio"] = {
            "ratios": ratios,
            "decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
            "final": ratios[-1], "cap": RATIO_CAP, "within_cap": ratios[-1] <= RATIO_CAP,
        }
        n_top = ns[-1]
        for other in cfg.policies:
            if other == "tracking":
                continue
            t = np.array([r.cost for r in by[("tracking", n_top)]])
            g = np.array([r.cost for r in by[(other, n_top)]])
            test = paired_sign(t, g)
            test.update({"n": n_top, "ratio_tracking": cell[("tracking", n_top)]["ratio"],
                         "ratio_other": cell[(other, n_top)]["ratio"]})
            test["pass"] = test["ratio_other"] > test["ratio_tracking"] and test["p"] < SIGN_LEVEL
            out.setdefault("paired_vs_tracking", {})[other] = test
    return out


def lower_bound(cfg: StudyConfig, fluid: FluidSolution) -> dict:
    dt = cfg.lb_dt if cfg.lb_dt is not None else cfg.horizon / 1e5
    rbm = RbmParams(fluid.drift, fluid.variance, 0.0, cfg.horizon, dt)
    seed = cfg.lb_seed if cfg.lb_seed is not None else cfg.seed
    est = lower_bound_estimate(cfg.cost, fluid.theta, rbm, reps=cfg.lb_reps, seed=seed)
    est.update({"drift": rbm.m, "variance": rbm.s2, "dt": dt, "u": cfg.horizon, "seed": seed})
    return est


def run_convergence_study(cfg: StudyConfig, progress: Optional[Callable[[str], None]] = None) -> StudyReport:
    """Run every (policy, n, rep) cell; the same rep seeds are used for every policy and n."""
    say = progress or (lambda msg: None)
    model = cfg.model
    fluid = prepare(model)
    lb = lower_bound(cfg, fluid)
    say(f"lower bound {lb['mean']:.4f} +- {lb['se']:.4f}")
    jobs = [(model, fluid, policy, n, cfg.horizon, rep, cfg.seed + rep, cfg.debug)
            for n in cfg.n_schedule for policy in cfg.policies for rep in range(cfg.reps)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_job, jobs, chunksize=1))
    else:
        rows = []
        for job in jobs:
            rows.append(_job(job))
            if job[5] == cfg.reps - 1:
                say(f"n={job[3]} policy={job[2]} done")
    cells = []
    for n in cfg.n_schedule:
        for policy in cfg.policies:
            sel = [r for r in rows if r.n == n and r.policy == policy]
            cells.append(_cell(policy, n, sel, lb))
    report = StudyReport(
        config=study_summary(cfg), fluid=fluid.to_dict(model.topology), lower_bound=lb,
        cells=cells, verdicts=verdicts(cfg, rows, cells, lb), rows=rows,
    )
    if cfg.output:
        write_report(report, cfg.output)
        if cfg.samples:
            write_samples(cfg, fluid, cfg.output)
    return report


def study_summary(cfg: StudyConfig) -> dict:
    m = cfg.model
    return {
        "model": m.name, "n": list(cfg.n_schedule), "horizon": cfg.horizon, "reps": cfg.reps,
        "policies": list(cfg.policies), "seed": cfg.seed, "cost": m.cost.to_dict(),
        "root": None if m.policy.root is None else m.policy.root + 1,
        "kappa_exp": m.policy.kappa_exp, "kappa_bar_exp": m.policy.kappa_bar_exp,
        "lower_bound_reps": cfg.lb_reps, "debug": cfg.debug,
    }


# -- output ---------------------------------------------------------------------------

CELL_FIELDS = ("policy", "n", "rep", "seed", "cost", "ssc_gap_sup", "b_hat_sup", "theta_q_mean")


def fmt(x) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_report(report: StudyReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_json(), out / "report.json")
    dump_json(report.lower_bound, out / "lb.json")
    with open(out / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_FIELDS)
        for r in report.rows:
            w.writerow([fmt(getattr(r, k)) for k in CELL_FIELDS])
    (out / "report.md").write_text(render_markdown(report.to_json()))


def write_samples(cfg: StudyConfig, fluid: FluidSolution, out_dir) -> None:
    """Rep-0 paths per (policy, n) on a coarse grid, for plotting."""
    out = Path(out_dir)
    dt = cfg.horizon / SAMPLE_POINTS
    for n in cfg.n_schedule:
        for policy in cfg.policies:
            _, path = replication(cfg.model, fluid, policy, n, cfg.horizon, 0, cfg.seed,
                                  record=RecordConfig(mode="subsample", dt=dt))
            instance = build_instance(cfg.model.params, cfg.model.topology, n)
            write_path_csv(path, instance, fluid, out / f"paths-{policy}-n{n}.csv")


def path_columns(topology) -> list[str]:
    cols = ["t"]
    cols += [f"Q_hat_{i + 1}" for i in range(topology.n_classes)]
    cols += [f"X_hat_{i + 1}" for i in range(topology.n_classes)]
    cols += [f"B_hat_{i + 1}{j + 1}" for i, j in topology.edges]
    cols += [f"I_{j + 1}" for j in range(topology.n_pools)]
    return cols


def write_path_csv(path, instance, fluid, dest) -> None:
    sp = scale_paths(path, instance, fluid.xi)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(path_columns(instance.topology))
        for k in range(len(sp.times)):
            row = [sp.times[k], *sp.Q_hat[k], *sp.X_hat[k], *sp.B_hat[k]]
            w.writerow([fmt(v) for v in row] + [str(int(v)) for v in path.I[k]])


def render_markdown(rep: dict) -> str:
    cfg, lb, v = rep["config"], rep["lower_bound"], rep["verdicts"]
    lines = [
        f"# Convergence study: {cfg['model']}",
        "",
        f"Horizon u = {cfg['horizon']}, {cfg['reps']} replications per cell, seed {cfg['seed']}, "
        f"cost {cfg['cost']['kind']}.",
        "",
        f"Lower bound E int C*(Q*) = {lb['mean']:.4f} (SE {lb['se']:.4f}, {lb['reps']} RBM paths).",
        "",
        "| policy | n | reps | cost mean | cost SE | ratio to LB | SSC gap median | sup B_hat median | mean theta'Q_hat |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    for c in rep["cells"]:
        lines.append(
            f"| {c['policy']} | {c['n']} | {c['reps']} | {c['cost_mean']:.4f} | {c['cost_se']:.4f} | "
            f"{c['ratio']:.4f} +- {c['ratio_se']:.4f} | {c['ssc_gap_median']:.4f} | "
            f"{c['b_hat_median']:.4f} | {c['theta_q_mean']:.4f} |")
    lines += ["", "## Verdicts", ""]
    for policy, t in v["ssc"].items():
        ps = ", ".join(f"{s['p']:.3g}" for s in t["steps"])
        lines.append(f"- SSC gap, {policy}: medians strictly decreasing = {t['strictly_decreasing']}, "
                     f"sign-test p = [{ps}], pass = {t['pass']}")
    for policy, t in v["b_hat"].items():
        ps = ", ".join(f"{s['p']:.3g}" for s in t["steps"])
        lines.append(f"- sup B_hat, {policy}: medians strictly decreasing = {t['strictly_decreasing']}, "
                     f"sign-test p = [{ps}], pass = {t['pass']}")
    bad = [f"{x['policy']}@{x['n']}" for x in v["lower_bound"] if not x["pass"]]
    lines.append(f"- every cell at or above the lower bound minus 3 pooled SEs: {not bad}"
                 + (f" (fails: {', '.join(bad)})" if bad else ""))
    if "tracking_ratio" in v:
        t = v["tracking_ratio"]
        lines.append(f"- tracking ratio by n: {', '.join(f'{r:.4f}' for r in t['ratios'])}; "
                     f"decreasing = {t['decreasing']}; final <= {t['cap']} = {t['within_cap']}")
    for other, t in v.get("paired_vs_tracking", {}).items():
        lines.append(f"- {other} vs tracking at n={t['n']}: ratio {t['ratio_other']:.4f} vs "
                     f"{t['ratio_tracking']:.4f}, tracking cheaper in {t['wins']}/{t['trials']} paired reps, "
                     f"p = {t['p']:.3g}, pass = {t['pass']}")
    return "\n".join(lines) + "\n"


def load_report(out_dir) -> dict:
    path = Path(out_dir) / "report.json"
    if not path.is_file():
        from .errors import ConfigError

        raise ConfigError(f"no report.json in {out_dir}")
    return json.loads(path.read_text())
