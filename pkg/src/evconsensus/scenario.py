"""Scenario configuration: schema, validation, YAML round-trip, digests.

A scenario pins everything a run needs: fleet sizes, market source,
penalty parameter, stop rule, the optional attack and the detection
threshold grid. Configs are plain nested dataclasses so loading and
saving round-trips exactly; unknown keys are rejected with the offending
field path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .attacks import VECTORS

#: calibrated on the standard synthetic scenario via `tune-rho`; divided
#: by the mean base price this lands near rho = 5 at desk scale
DEFAULT_RHO_HAT = 235.0

DEFAULT_DAYS = 10
DEFAULT_COST_EVAL_ITERS = 50
DEFAULT_ALPHAS = tuple(round(a, 4) for a in
                       [0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1])


class ConfigError(ValueError):
    """Invalid configuration; names the field when known."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class MarketConfig:
    kind: str = "synthetic"
    steepness: tuple = (0.3, 0.9)
    curvature: tuple = (0.0, 0.02)
    raw_span_mwh: float = 60.0
    path: str | None = None
    format: str = "quadratics"
    fit_volume_cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "steepness", tuple(float(v) for v in self.steepness))
        object.__setattr__(self, "curvature", tuple(float(v) for v in self.curvature))
        if self.kind not in ("synthetic", "file"):
            raise ConfigError("market.kind", f"must be 'synthetic' or 'file', got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigError("market.path", "required when market.kind is 'file'")
        if self.format not in ("quadratics", "curves"):
            raise ConfigError("market.format", f"must be 'quadratics' or 'curves', got {self.format!r}")
        lo, hi = self.steepness
        if lo < 0 or hi < lo:
            raise ConfigError("market.steepness", "need 0 <= lo <= hi")
        lo, hi = self.curvature
        if lo < 0 or hi < lo:
            raise ConfigError("market.curvature", "need 0 <= lo <= hi")
        if self.raw_span_mwh <= 0:
            raise ConfigError("market.raw_span_mwh", "must be positive")


@dataclass(frozen=True)
class StopConfig:
    eps_pri: float | None = None
    eps_dual: float | None = None
    max_iters: int = DEFAULT_COST_EVAL_ITERS

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("stop.max_iters", "must be at least 1")
        for name in ("eps_pri", "eps_dual"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"stop.{name}", "must be nonnegative")


@dataclass(frozen=True)
class AttackConfig:
    vector: str
    attacker: int
    target: int | None = None
    mu: int = 1
    lam: float = 0.5

    def __post_init__(self):
        if self.vector not in VECTORS:
            raise ConfigError("attack.vector", f"unknown vector {self.vector!r}")
        if self.attacker < 0:
            raise ConfigError("attack.attacker", "must be a valid agent index")
        if self.target is not None and self.target == self.attacker:
            raise ConfigError("attack.target", "must differ from the attacker")
        if self.mu < 0:
            raise ConfigError("attack.mu", "must be nonnegative")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("attack.lambda", "must lie in [0, 1]")


@dataclass(frozen=True)
class DetectionConfig:
    alphas: tuple = DEFAULT_ALPHAS

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.alphas:
            raise ConfigError("detection.alphas", "need at least one threshold")
        if any(a < 0 for a in self.alphas):
            raise ConfigError("detection.alphas", "thresholds must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    seed: int
    n_aggregators: int
    evs_per_aggregator: tuple
    market: MarketConfig = MarketConfig()
    rho: float | str = "auto"
    rho_hat: float = DEFAULT_RHO_HAT
    stop: StopConfig = StopConfig()
    attack: AttackConfig | None = None
    detection: DetectionConfig = DetectionConfig()
    days: int = DEFAULT_DAYS
    cost_eval_iteration: int = DEFAULT_COST_EVAL_ITERS

    def __post_init__(self):
        object.__setattr__(self, "evs_per_aggregator", tuple(int(v) for v in self.evs_per_aggregator))
        if self.n_aggregators < 1:
            raise ConfigError("n_aggregators", "must be at least 1")
        if len(self.evs_per_aggregator) != self.n_aggregators:
            raise ConfigError("evs_per_aggregator",
                              f"length {len(self.evs_per_aggregator)} != n_aggregators {self.n_aggregators}")
        if any(v <= 0 for v in self.evs_per_aggregator):
            raise ConfigError("evs_per_aggregator", "EV counts must be positive")
        if isinstance(self.rho, str):
            if self.rho != "auto":
                raise ConfigError("rho", f"must be a positive number or 'auto', got {self.rho!r}")
        elif self.rho <= 0:
            raise ConfigError("rho", "must be positive")
        if self.rho_hat <= 0:
            raise ConfigError("rho_hat", "must be positive")
        if self.attack is not None and self.attack.attacker >= self.n_aggregators:
            raise ConfigError("attack.attacker", "agent index out of range")
        if self.attack is not None and self.attack.target is not None \
                and self.attack.target >= self.n_aggregators:
            raise ConfigError("attack.target", "agent index out of range")
        if self.days < 1:
            raise ConfigError("days", "must be at least 1")
        if self.cost_eval_iteration < 1:
            raise ConfigError("cost_eval_iteration", "must be at least 1")


def _check_keys(d: dict, allowed, path: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _build(cls, d: dict, path: str, renames=()):
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected a mapping, got {type(d).__name__}")
    d = dict(d)
    for yaml_key, attr in renames:
        if yaml_key in d:
            d[attr] = d.pop(yaml_key)
    fields = {f for f in cls.__dataclass_fields__}
    _check_keys(d, fields, path)
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from exc


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    raw = dict(raw)
    allowed = set(Scenario.__dataclass_fields__)
    _check_keys(raw, allowed, "")
    for key in ("seed", "n_aggregators", "evs_per_aggregator"):
        if key not in raw:
            raise ConfigError(key, "required")
    if "market" in raw and raw["market"] is not None:
        raw["market"] = _build(MarketConfig, raw["market"], "market")
    if "stop" in raw and raw["stop"] is not None:
        raw["stop"] = _build(StopConfig, raw["stop"], "stop")
    if raw.get("attack") is not None:
        raw["attack"] = _build(AttackConfig, raw["attack"], "attack", renames=[("lambda", "lam")])
    if "detection" in raw and raw["detection"] is not None:
        raw["detection"] = _build(DetectionConfig, raw["detection"], "detection")
    if isinstance(raw.get("market"), MarketConfig):
        m = raw["market"]
        object.__setattr__(m, "steepness", tuple(float(v) for v in m.steepness))
        object.__setattr__(m, "curvature", tuple(float(v) for v in m.curvature))
    return _build(Scenario, raw, "")


def scenario_to_dict(s: Scenario) -> dict:
    d = asdict(s)
    for key in ("evs_per_aggregator",):
        d[key] = list(d[key])
    d["market"]["steepness"] = list(d["market"]["steepness"])
    d["market"]["curvature"] = list(d["market"]["curvature"])
    d["detection"]["alphas"] = list(d["detection"]["alphas"])
    if d["attack"] is not None:
        d["attack"]["lambda"] = d["attack"].pop("lam")
    return d


def load_scenario(path) -> Scenario:
    """Parse and validate a YAML scenario file."""
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"not valid YAML: {exc}") from exc
    return scenario_from_dict(raw if raw is not None else {})


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(s), fh, sort_keys=True)


def scenario_digest(s: Scenario, day: int | None = None) -> str:
    """Stable short id of (config, seed[, day])."""
    payload = scenario_to_dict(s)
    if day is not None:
        payload["__day__"] = day
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
