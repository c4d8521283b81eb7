"""``nds-lab`` command line: analyze, simulate, bcp, study, report."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import harness
from .bcp import RbmParams, lower_bound_estimate
from .config import StudyConfig, load_model, load_study
from .errors import AssumptionError, ConfigError, NdsLabError
from .fluid import analyze
from .model import build_instance
from .policy import POLICY_NAMES, make_policy, make_target
from .sim import RecordConfig, run_simulation

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

SUMMARY_FIELDS = ("rep", "seed", "cost_integral", "sup_ssc_gap", "sup_B_hat", "mean_theta_Q")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=harness._json_default) + "\n")


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    fluid = analyze(model.topology, model.params, tol=args.tol)
    out = fluid.to_dict(model.topology)
    out["model"] = model.name
    if fluid.theta is not None:
        out["workload_drift"] = fluid.drift
        out["workload_variance"] = fluid.variance
    _emit(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if not args.u > 0:
        raise ConfigError("--u must be positive")
    fluid = harness.prepare(model) if args.policy == "tracking" else analyze(model.topology, model.params)
    if fluid.theta is None:
        raise AssumptionError("; ".join(fluid.tree.findings))
    instance = build_instance(model.params, model.topology, args.n)
    s = model.policy
    policy = make_policy(args.policy, instance, fluid, model.cost, s.root, s.kappa_exp, s.kappa_bar_exp)
    target = make_target(instance, fluid, model.cost, s.root, s.kappa_exp, s.kappa_bar_exp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = RecordConfig(mode=args.record)
    rows = []
    for rep in range(args.reps):
        seed = args.seed + rep
        path = run_simulation(instance, fluid, policy, args.u, seed, record,
                              costs={"cost": model.cost}, target=target, debug=args.debug)
        if args.record != "none":
            harness.write_path_csv(path, instance, fluid, out / f"paths-{rep}.csv")
        st = path.stats
        rows.append((rep, seed, st["cost_integral"]["cost"], st["sup_ssc_gap"], st["sup_b_hat"],
                     st["mean_theta_q"]))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([harness.fmt(v) for v in r])
    return EXIT_OK


def cmd_bcp(args) -> int:
    model = load_model(args.model)
    fluid = harness.prepare(model)
    dt = args.dt if args.dt is not None else args.u / 1e5
    try:
        rbm = RbmParams(fluid.drift, fluid.variance, 0.0, args.u, dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.reps < 2:
        raise ConfigError("--reps must be >= 2")
    est = lower_bound_estimate(model.cost, fluid.theta, rbm, reps=args.reps, seed=args.seed)
    _emit({k: est[k] for k in ("mean", "se", "q05", "q50", "q95")})
    return EXIT_OK


def cmd_study(args) -> int:
    cfg = load_study(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.debug:
        overrides["debug"] = True
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    if cfg.output is None:
        raise ConfigError("study needs an output directory (config 'output' or --out)")
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    report = harness.run_convergence_study(cfg, progress)
    if not args.quiet:
        sys.stdout.write(harness.render_markdown(report.to_json()))
    return EXIT_OK


def cmd_report(args) -> int:
    sys.stdout.write(harness.render_markdown(harness.load_report(args.dir)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nds-lab", description="Parallel-server systems in the nondegenerate-slowdown regime.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="static fluid analysis of a model file (JSON verdicts)")
    a.add_argument("model")
    a.add_argument("--tol", type=float, default=1e-9, help="threshold for basic activities")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="simulate the n-th system and write paths and a summary")
    s.add_argument("model")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--u", type=float, default=10.0, help="horizon")
    s.add_argument("--policy", choices=POLICY_NAMES, default="tracking")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--record", choices=("auto", "full", "subsample", "none"), default="subsample")
    s.add_argument("--debug", action="store_true", help="check invariants at every event")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bcp", help="Monte Carlo lower bound from the reflected Brownian workload")
    b.add_argument("model")
    b.add_argument("--u", type=float, default=10.0)
    b.add_argument("--reps", type=int, default=400)
    b.add_argument("--dt", type=float, default=None, help="grid step (default u/1e5)")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bcp)

    st = sub.add_parser("study", help="run a convergence study from a study config")
    st.add_argument("config")
    st.add_argument("--out", default=None, help="output directory (overrides the config)")
    st.add_argument("--workers", type=int, default=None)
    st.add_argument("--debug", action="store_true")
    st.add_argument("--quiet", action="store_true")
    st.set_defaults(func=cmd_study)

    r = sub.add_parser("report", help="print the markdown summary of a finished study")
    r.add_argument("dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"nds-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NdsLabError as exc:
        print(f"nds-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
