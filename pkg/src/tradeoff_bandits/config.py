"""Strict YAML experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import yaml

from .arms import ArmModel, BanditInstance, Family
from .estimation import SCHEDULES
from .objective import TradeoffParams
from .policies import PolicyKind


class ConfigError(ValueError):
    pass


SYNTHETIC_ARMS = [(1.0, 0.05), (1.5, 0.1), (2.0, 0.2), (4.0, 4.0), (5.0, 0.5)]


@dataclass
class ArmSpec:
    mean: float
    variance: float
    family: str = Family.GAUSSIAN.value
    low: float = 0.0
    high: float = 1.0

    def to_model(self) -> ArmModel:
        return ArmModel(self.mean, self.variance, Family(self.family), self.low, self.high)


@dataclass
class CheckpointSpec:
    points: int = 50
    extra: list = field(default_factory=list)
    every_step: bool = False

    def steps(self, horizon: int) -> list[int]:
        from .harness import checkpoint_grid

        if self.every_step:
            return list(range(1, horizon + 1))
        return checkpoint_grid(horizon, self.points, self.extra)


@dataclass
class PolicyOptions:
    forcing_rule: str = "strict"  # "strict": T < eta sqrt(t); "plus_one": T < eta sqrt(t) + 1
    recompute_every: int = 1
    delta_schedule: str = "prop"

    def as_kwargs(self) -> dict:
        return {
            "forcing_plus_one": self.forcing_rule == "plus_one",
            "recompute_every": self.recompute_every,
            "delta_schedule": self.delta_schedule,
        }


@dataclass
class ExperimentConfig:
    name: str = "synthetic5"
    arms: list = field(default_factory=lambda: [ArmSpec(m, v) for m, v in SYNTHETIC_ARMS])
    w: Union[float, list] = 0.9
    eta: float = 1.0
    lambda_min: float = 0.0
    delta: float = 0.05
    horizon: int = 10000
    runs: int = 200
    seed: int = 0
    policies: list = field(default_factory=lambda: [PolicyKind.FORCING_BALANCE.value])
    checkpoints: CheckpointSpec = field(default_factory=CheckpointSpec)
    options: PolicyOptions = field(default_factory=PolicyOptions)
    output_dir: str = "results"

    @property
    def weights(self) -> list[float]:
        return list(self.w) if isinstance(self.w, list) else [self.w]

    @property
    def is_sweep(self) -> bool:
        return isinstance(self.w, list)

    def instance(self) -> BanditInstance:
        return BanditInstance(tuple(a.to_model() for a in self.arms))

    def params(self, w: float) -> TradeoffParams:
        return TradeoffParams(w=w, lambda_min=self.lambda_min, eta=self.eta, delta=self.delta)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _strict(section: str, data: Any, cls) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{section}: unknown key '{key}'")
    return data


def _number(key: str, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _arm(i: int, raw) -> ArmSpec:
    key = f"arms[{i}]"
    if isinstance(raw, (list, tuple)):
        if not 2 <= len(raw) <= 3:
            raise ConfigError(f"{key}: expected [mean, variance] or [mean, variance, family]")
        raw = dict(zip(("mean", "variance", "family"), raw))
    raw = _strict(key, raw, ArmSpec)
    for req in ("mean", "variance"):
        if req not in raw:
            raise ConfigError(f"{key}: missing '{req}'")
    spec = ArmSpec(
        mean=_number(f"{key}.mean", raw["mean"]),
        variance=_number(f"{key}.variance", raw["variance"]),
        family=str(raw.get("family", Family.GAUSSIAN.value)),
        low=_number(f"{key}.low", raw.get("low", 0.0)),
        high=_number(f"{key}.high", raw.get("high", 1.0)),
    )
    try:
        spec.to_model()
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return spec


def parse_config(data: dict) -> ExperimentConfig:
    data = _strict("config", data or {}, ExperimentConfig)
    cfg = ExperimentConfig()
    if "name" in data:
        cfg.name = str(data["name"])
    if "arms" in data:
        if not isinstance(data["arms"], list):
            raise ConfigError("arms: expected a list")
        cfg.arms = [_arm(i, a) for i, a in enumerate(data["arms"])]
    if len(cfg.arms) < 2:
        raise ConfigError(f"arms: need at least 2 arms, got {len(cfg.arms)}")
    if "w" in data:
        if isinstance(data["w"], list):
            if not data["w"]:
                raise ConfigError("w: empty sweep")
            cfg.w = [_number("w", x) for x in data["w"]]
        else:
            cfg.w = _number("w", data["w"])
    for key in ("eta", "lambda_min", "delta"):
        if key in data:
            setattr(cfg, key, _number(key, data[key]))
    for key in ("horizon", "runs", "seed"):
        if key in data:
            setattr(cfg, key, _number(key, data[key], int))
    if cfg.horizon < 1:
        raise ConfigError("horizon: must be >= 1")
    if cfg.runs < 1:
        raise ConfigError("runs: must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    if "policies" in data:
        pols = data["policies"]
        if not isinstance(pols, list) or not pols:
            raise ConfigError("policies: expected a non-empty list")
        valid = [k.value for k in PolicyKind]
        for pol in pols:
            if pol not in valid:
                raise ConfigError(f"policies: unknown policy '{pol}' (expected one of {', '.join(valid)})")
        cfg.policies = [str(p) for p in pols]
    if "checkpoints" in data:
        raw = _strict("checkpoints", data["checkpoints"], CheckpointSpec)
        cfg.checkpoints = CheckpointSpec(
            points=_number("checkpoints.points", raw.get("points", 50), int),
            extra=[_number("checkpoints.extra", s, int) for s in raw.get("extra", [])],
            every_step=bool(raw.get("every_step", False)),
        )
    if "options" in data:
        raw = _strict("options", data["options"], PolicyOptions)
        opts = PolicyOptions(
            forcing_rule=str(raw.get("forcing_rule", "strict")),
            recompute_every=_number("options.recompute_every", raw.get("recompute_every", 1), int),
            delta_schedule=str(raw.get("delta_schedule", "prop")),
        )
        if opts.forcing_rule not in ("strict", "plus_one"):
            raise ConfigError("options.forcing_rule: expected 'strict' or 'plus_one'")
        if opts.recompute_every < 1:
            raise ConfigError("options.recompute_every: must be >= 1")
        if opts.delta_schedule not in SCHEDULES:
            raise ConfigError(f"options.delta_schedule: expected one of {SCHEDULES}")
        cfg.options = opts
    if "output_dir" in data:
        cfg.output_dir = str(data["output_dir"])

    for w in cfg.weights:
        try:
            cfg.params(w).check_arms(len(cfg.arms))
        except ValueError as exc:
            key = "w" if not 0 <= w <= 1 else "lambda_min" if "lambda_min" in str(exc) else "eta/delta"
            raise ConfigError(f"{key}: {exc}") from None
    return cfg


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc.__class__.__name__})") from None
    return parse_config(data)
