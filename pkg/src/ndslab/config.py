"""Model and study configuration files (TOML or JSON, 1-based indices)."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cost import CUSTOM_COSTS, CostSpec
from .errors import ConfigError, ModelError
from .model import BaseParameters, Topology, validate_topology

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FAMILIES = ("exponential", "deterministic", "gamma", "lognormal")


def read_document(path) -> dict:
    """Parse a ``.toml`` or ``.json`` file into a dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section [{name}]")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _per_item(value, count: int, what: str, default=None):
    if value is None:
        value = default
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigError(f"{what}: expected {count} entries, got {len(value)}")
        return list(value)
    return [value] * count


def _vector(value, count: int, what: str, default=None) -> np.ndarray:
    try:
        return np.array(_per_item(value, count, what, default), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: not numeric") from exc


def _matrix(value, shape, what: str, edges=None) -> np.ndarray:
    """A full I x J matrix, or a ``{"i,j": v}`` table / ``[[i, j, v], ...]`` list over edges."""
    out = np.zeros(shape)
    if value is None:
        return out
    try:
        if isinstance(value, dict):
            for key, v in value.items():
                i, j = (int(s) for s in key.split(","))
                out[i - 1, j - 1] = float(v)
            return out
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{what}: malformed entries") from exc
    if arr.shape == shape:
        return arr
    if arr.ndim == 2 and arr.shape[1] == 3:
        for i, j, v in arr:
            if not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
                raise ConfigError(f"{what}: index ({int(i)},{int(j)}) out of range")
            out[int(i) - 1, int(j) - 1] = v
        return out
    raise ConfigError(f"{what}: expected a {shape[0]}x{shape[1]} matrix")


def parse_cost(sec: dict, n_classes: int) -> CostSpec:
    kind = sec.get("kind", "linear")
    if kind == "linear":
        return CostSpec.linear(_per_item(sec.get("coefficients"), n_classes, "cost.coefficients", 1.0))
    if kind in ("quadratic", "separable_power", "power"):
        p = float(sec.get("exponent", 2.0))
        return CostSpec.power(_per_item(sec.get("coefficients"), n_classes, "cost.coefficients", 1.0), p)
    if kind == "custom":
        name = sec.get("name")
        if name not in CUSTOM_COSTS:
            raise ConfigError(f"unknown custom cost {name!r}; known: {', '.join(CUSTOM_COSTS)}")
        return CostSpec.custom(CUSTOM_COSTS[name], name=name)
    raise ConfigError(f"unknown cost kind {kind!r}")


@dataclass(frozen=True)
class PolicySettings:
    root: Optional[int] = None  # 0-based
    kappa_exp: float = 1 / 20
    kappa_bar_exp: float = 1 / 100

    def __post_init__(self):
        if not (0 < self.kappa_bar_exp < self.kappa_exp):
            raise ConfigError("need 0 < kappa_bar_exp < kappa_exp so that kappa_n < kappa_bar_n < 1")

    @classmethod
    def parse(cls, sec: dict, n_classes: int, base: "PolicySettings" = None) -> "PolicySettings":
        base = base or cls()
        root = sec.get("root")
        if root is not None:
            if not (isinstance(root, int) and 1 <= root <= n_classes):
                raise ConfigError(f"policy.root must be a class index in 1..{n_classes}")
            root = root - 1
        else:
            root = base.root
        return cls(root, float(sec.get("kappa_exp", base.kappa_exp)),
                   float(sec.get("kappa_bar_exp", base.kappa_bar_exp)))


@dataclass(frozen=True)
class ModelConfig:
    name: str
    topology: Topology
    params: BaseParameters
    cost: CostSpec
    policy: PolicySettings = field(default_factory=PolicySettings)
    path: Optional[str] = None


def parse_model(doc: dict, name: str = "model") -> ModelConfig:
    topo_sec = _section(doc, "topology")
    try:
        n_i, n_j = int(topo_sec["classes"]), int(topo_sec["pools"])
        raw_edges = [tuple(int(v) for v in e) for e in topo_sec["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[topology] needs classes, pools and an edge list: {exc}") from exc
    if any(len(e) != 2 for e in raw_edges):
        raise ConfigError("edges are [class, pool] pairs")
    topology = Topology(n_i, n_j, tuple((i - 1, j - 1) for i, j in raw_edges))

    fo = _section(doc, "first_order")
    so = _section(doc, "second_order", required=False)
    arr = _section(doc, "arrivals", required=False)
    if "lambda" not in fo or "mu_bar" not in fo:
        raise ConfigError("[first_order] needs lambda and mu_bar")
    families = _per_item(arr.get("family"), n_i, "arrivals.family", "exponential")
    for f in families:
        if f not in FAMILIES:
            raise ConfigError(f"unknown interarrival family {f!r}")
    cv_default = [0.0 if f == "deterministic" else 1.0 for f in families]
    cv = arr.get("cv", cv_default)
    params = BaseParameters(
        lam=_vector(fo["lambda"], n_i, "first_order.lambda"),
        lam_hat=_vector(so.get("lambda_hat"), n_i, "second_order.lambda_hat", 0.0),
        nu=_vector(fo.get("nu"), n_j, "first_order.nu", 1.0),
        mu_bar=_matrix(fo["mu_bar"], (n_i, n_j), "first_order.mu_bar"),
        mu_hat=_matrix(so.get("mu_hat"), (n_i, n_j), "second_order.mu_hat"),
        cv=_vector(cv, n_i, "arrivals.cv"),
        families=tuple(families),
    )
    report = validate_topology(topology, params)
    if not report.ok:
        raise ModelError("invalid model: " + "; ".join(report.findings))
    cost = parse_cost(_section(doc, "cost", required=False), n_i)
    policy = PolicySettings.parse(_section(doc, "policy", required=False), n_i)
    return ModelConfig(str(doc.get("name", name)), topology, params, cost, policy)


def load_model(path) -> ModelConfig:
    path = Path(path)
    return replace(parse_model(read_document(path), path.stem), path=str(path))


@dataclass(frozen=True)
class StudyConfig:
    """A convergence study: one model, a schedule of scale indices, several policies."""

    model: ModelConfig
    n_schedule: tuple[int, ...]
    horizon: float = 10.0
    reps: int = 30
    policies: tuple[str, ...] = ("tracking", "greedy")
    seed: int = 0
    output: Optional[str] = None
    lb_reps: int = 400
    lb_dt: Optional[float] = None
    lb_seed: Optional[int] = None
    workers: int = 1
    debug: bool = False
    samples: bool = True

    def __post_init__(self):
        ns = self.n_schedule
        if not ns:
            raise ConfigError("empty n schedule")
        if any(int(n) != n or n < 1 for n in ns):
            raise ConfigError("n values must be positive integers")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n schedule must be strictly increasing")
        if not isinstance(self.reps, int) or self.reps < 2:
            raise ConfigError(f"reps must be an integer >= 2, got {self.reps!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.lb_reps < 2:
            raise ConfigError("lower_bound.reps must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        from .policy import POLICY_NAMES

        for p in self.policies:
            if p not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {p!r}")

    @property
    def cost(self) -> CostSpec:
        return self.model.cost


def parse_study(doc: dict, base_dir: Path, name: str = "study") -> StudyConfig:
    if "model" not in doc:
        raise ConfigError("study config needs a model reference")
    ref = doc["model"]
    if isinstance(ref, dict):
        model = parse_model(ref, name)
    else:
        model = load_model(base_dir / ref)
    n_i = model.topology.n_classes
    if "cost" in doc:
        model = replace(model, cost=parse_cost(_section(doc, "cost"), n_i))
    if "policy" in doc:
        model = replace(model, policy=PolicySettings.parse(_section(doc, "policy"), n_i, model.policy))
    lb = _section(doc, "lower_bound", required=False)
    out = doc.get("output")
    if out is not None:
        out = str(base_dir / out)
    try:
        return StudyConfig(
            model=model,
            n_schedule=tuple(int(v) for v in doc.get("n", (100, 1000, 10000))),
            horizon=float(doc.get("horizon", 10.0)),
            reps=doc.get("reps", 30),
            policies=tuple(doc.get("policies", ("tracking", "greedy"))),
            seed=int(doc.get("seed", 0)),
            output=out,
            lb_reps=int(lb.get("reps", 400)),
            lb_dt=None if lb.get("dt") is None else float(lb["dt"]),
            lb_seed=None if lb.get("seed") is None else int(lb["seed"]),
            workers=int(doc.get("workers", 1)),
            debug=bool(doc.get("debug", False)),
            samples=bool(doc.get("samples", True)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed study config: {exc}") from exc


def load_study(path) -> StudyConfig:
    path = Path(path)
    return parse_study(read_document(path), path.parent, path.stem)
