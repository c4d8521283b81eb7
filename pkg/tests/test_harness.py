import json

import numpy as np
import pytest

from ndslab.cli import main
from ndslab.config import parse_study
from ndslab.errors import AssumptionError
from ndslab.harness import paired_sign, run_convergence_study, sign_test


def test_sign_test_values():
    assert sign_test(10, 10) == pytest.approx(0.5 ** 10)
    assert sign_test(0, 0) == 1.0
    r = paired_sign([1, 2, 3], [2, 2, 4])
    assert r["wins"] == 2 and r["trials"] == 2


@pytest.fixture(scope="module")
def tiny_study(configs_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    doc = {"model": "nmodel.toml", "n": [100, 400], "horizon": 2.0, "reps": 3, "seed": 7,
           "policies": ["tracking", "greedy", "random", "fifo"], "lower_bound": {"reps": 20, "dt": 0.002},
           "output": str(out)}
    cfg = parse_study(doc, configs_dir)
    return cfg, run_convergence_study(cfg), out


def test_study_outputs(tiny_study):
    cfg, rep, out = tiny_study
    names = {p.name for p in out.iterdir()}
    assert {"report.md", "report.json", "cells.csv", "lb.json"} <= names
    assert "paths-tracking-n100.csv" in names
    lines = (out / "cells.csv").read_text().splitlines()
    assert lines[0] == "policy,n,rep,seed,cost,ssc_gap_sup,b_hat_sup,theta_q_mean"
    assert len(lines) == 1 + 2 * 4 * 3
    for c in rep.cells:
        assert c["reps"] == 3 and c["cost_se"] >= 0


def test_study_same_seeds_across_policies(tiny_study):
    _, rep, _ = tiny_study
    seeds = {}
    for r in rep.rows:
        seeds.setdefault((r.policy, r.n), []).append(r.seed)
    assert len({tuple(v) for v in seeds.values()}) == 1


def test_lower_bound_is_policy_independent(tiny_study):
    _, rep, out = tiny_study
    lb = json.loads((out / "lb.json").read_text())
    for c in rep.cells:
        assert c["ratio"] == pytest.approx(c["cost_mean"] / lb["mean"])


def test_study_reproducible(tiny_study, tmp_path):
    cfg, _, out = tiny_study
    from dataclasses import replace
    run_convergence_study(replace(cfg, output=str(tmp_path)))
    for name in ("report.json", "cells.csv", "lb.json", "report.md", "paths-greedy-n400.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_report_command(tiny_study, capsys):
    _, _, out = tiny_study
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "| policy | n |" in text and "tracking" in text


def test_study_rejects_failing_assumptions(tmp_path):
    doc = {"model": {"topology": {"classes": 1, "pools": 1, "edges": [[1, 1]]},
                     "first_order": {"lambda": [0.5], "mu_bar": [[1.0]]}},
           "n": [100, 400], "reps": 2}
    cfg = parse_study(doc, tmp_path)
    with pytest.raises(AssumptionError):
        run_convergence_study(cfg)


def test_study_workers_match_serial(configs_dir, tmp_path):
    doc = {"model": "nmodel.toml", "n": [100, 400], "horizon": 1.0, "reps": 2, "seed": 3,
           "lower_bound": {"reps": 10, "dt": 0.01}, "samples": False}
    a = run_convergence_study(parse_study({**doc, "output": str(tmp_path / "a")}, configs_dir))
    b = run_convergence_study(parse_study({**doc, "output": str(tmp_path / "b"), "workers": 2}, configs_dir))
    assert (tmp_path / "a" / "cells.csv").read_bytes() == (tmp_path / "b" / "cells.csv").read_bytes()
