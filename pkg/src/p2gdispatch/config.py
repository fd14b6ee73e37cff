"""Experiment configuration: YAML loading, strict validation, resolution.

A single YAML file describes one experiment: data source, plant parameter
overrides, environment wiring, shaping toggles, agent hyperparameters, the
seed list, and the oracle grid.  Unknown keys are rejected and missing
required keys are reported by their full dotted path; every run writes the
fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agents import CemConfig, DqnConfig, PpoConfig
from .data import EpisodeInstance, generate_cs1, generate_cs2, load_csv
from .env import ActionSpec, DispatchEnv, EnvConfig
from .oracle import DpGrid
from .plant import PlantParams
from .shaping import (CostAttributionConfig, InactivityPenaltyConfig,
                      ShapingConfig, SocPenaltyConfig)


class ConfigError(Exception):
    """Raised for malformed experiment configuration files."""


def _from_dict(cls, raw: dict, path: str):
    """Build a dataclass from a dict, rejecting unknown keys by dotted path."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config section '{path}' must be a mapping")
    raw = dict(raw)
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f.name
        if key in raw:
            value = raw.pop(key)
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        elif (f.default is dataclasses.MISSING
              and f.default_factory is dataclasses.MISSING):
            raise ConfigError(f"missing config key '{path}.{key}'")
    if raw:
        raise ConfigError(
            f"unknown config key '{path}.{sorted(raw)[0]}'")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{path}': {exc}") from None


@dataclass
class DataSourceConfig:
    source: str = "generate"          # generate | csv
    case: str = "cs1"                 # cs1 | cs2 (generator only)
    seed: int = 7
    median_price: float = 84.0
    spike_multiplier: float = 8.0
    csv_path: str | None = None

    def validate(self) -> None:
        if self.source not in ("generate", "csv"):
            raise ConfigError(f"data.source must be generate or csv, "
                              f"got '{self.source}'")
        if self.source == "generate" and self.case not in ("cs1", "cs2"):
            raise ConfigError(f"data.case must be cs1 or cs2, got '{self.case}'")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("missing config key 'data.csv_path' "
                              "(required for csv source)")


@dataclass
class TrainSection:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    workers: int = 1
    oracle_check: bool = True


@dataclass
class ExperimentConfig:
    name: str
    data: DataSourceConfig
    algo: str
    plant: PlantParams = field(default_factory=PlantParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    cem: CemConfig = field(default_factory=CemConfig)
    train: TrainSection = field(default_factory=TrainSection)
    oracle_grid: DpGrid = field(default_factory=DpGrid)
    output_dir: str = "runs/experiment"

    def agent_config(self):
        return {"dqn": self.dqn, "ppo": self.ppo, "cem": self.cem}[self.algo]


def config_from_dict(raw: dict, source: str = "config") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    raw = dict(raw)

    def take(key, required=False, default=None):
        if key in raw:
            return raw.pop(key)
        if required:
            raise ConfigError(f"missing config key '{key}'")
        return default

    name = take("name", required=True)
    if not isinstance(name, str) or not name:
        raise ConfigError("config key 'name' must be a non-empty string")

    data_cfg = _from_dict(DataSourceConfig, take("data", required=True), "data")
    data_cfg.validate()

    agent_raw = take("agent", required=True)
    if not isinstance(agent_raw, dict):
        raise ConfigError("config section 'agent' must be a mapping")
    agent_raw = dict(agent_raw)
    algo = agent_raw.pop("algo", None)
    if algo is None:
        raise ConfigError("missing config key 'agent.algo'")
    if algo not in ("dqn", "ppo", "cem"):
        raise ConfigError(f"agent.algo must be dqn, ppo or cem, got '{algo}'")
    dqn = _from_dict(DqnConfig, agent_raw.pop("dqn", {}), "agent.dqn")
    ppo = _from_dict(PpoConfig, agent_raw.pop("ppo", {}), "agent.ppo")
    cem = _from_dict(CemConfig, agent_raw.pop("cem", {}), "agent.cem")
    if agent_raw:
        raise ConfigError(f"unknown config key 'agent.{sorted(agent_raw)[0]}'")

    plant = _from_dict(PlantParams, take("plant", default={}), "plant")
    try:
        plant.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid plant parameters: {exc}") from None

    env_raw = take("env", default={}) or {}
    if not isinstance(env_raw, dict):
        raise ConfigError("config section 'env' must be a mapping")
    env_raw = dict(env_raw)
    levels = {}
    for key, target in (("gt_levels", "gt_levels"), ("p2g_levels", "p2g_levels"),
                        ("bes_levels", "bes_levels")):
        if key in env_raw:
            levels[target] = tuple(env_raw.pop(key))
    try:
        spec = ActionSpec(**levels)
    except ValueError as exc:
        raise ConfigError(f"invalid action levels: {exc}") from None
    env_kwargs = {}
    for f in dataclasses.fields(EnvConfig):
        if f.name == "action_spec":
            continue
        if f.name in env_raw:
            value = env_raw.pop(f.name)
            env_kwargs[f.name] = tuple(value) if isinstance(value, list) else value
    if env_raw:
        raise ConfigError(f"unknown config key 'env.{sorted(env_raw)[0]}'")
    try:
        env_cfg = EnvConfig(action_spec=spec, **env_kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid env config: {exc}") from None

    shaping_raw = take("shaping", default={}) or {}
    if not isinstance(shaping_raw, dict):
        raise ConfigError("config section 'shaping' must be a mapping")
    shaping_raw = dict(shaping_raw)
    shaping = ShapingConfig(
        soc_penalty=_from_dict(SocPenaltyConfig,
                               shaping_raw.pop("soc_penalty", {}),
                               "shaping.soc_penalty"),
        inactivity_penalty=_from_dict(InactivityPenaltyConfig,
                                      shaping_raw.pop("inactivity_penalty", {}),
                                      "shaping.inactivity_penalty"),
        cost_attribution=_from_dict(CostAttributionConfig,
                                    shaping_raw.pop("cost_attribution", {}),
                                    "shaping.cost_attribution"),
    )
    if shaping_raw:
        raise ConfigError(f"unknown config key 'shaping.{sorted(shaping_raw)[0]}'")
    try:
        shaping.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid shaping config: {exc}") from None

    train = _from_dict(TrainSection, take("train", default={}), "train")
    oracle_grid = _from_dict(DpGrid, take("oracle", default={}), "oracle")
    output_dir = take("output_dir", default=f"runs/{name}")

    if raw:
        raise ConfigError(f"unknown config key '{sorted(raw)[0]}'")

    return ExperimentConfig(name=name, data=data_cfg, algo=algo, plant=plant,
                            env=env_cfg, shaping=shaping, dqn=dqn, ppo=ppo,
                            cem=cem, train=train, oracle_grid=oracle_grid,
                            output_dir=output_dir)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with path.open() as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(raw, source=str(path))


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved configuration (all defaults filled in) as plain data."""

    def plain(value):
        if dataclasses.is_dataclass(value):
            return {f.name: plain(getattr(value, f.name))
                    for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value

    return {
        "name": cfg.name,
        "data": plain(cfg.data),
        "agent": {"algo": cfg.algo, "dqn": plain(cfg.dqn),
                  "ppo": plain(cfg.ppo), "cem": plain(cfg.cem)},
        "plant": plain(cfg.plant),
        "env": {
            "gt_levels": list(cfg.env.action_spec.gt_levels),
            "p2g_levels": list(cfg.env.action_spec.p2g_levels),
            "bes_levels": list(cfg.env.action_spec.bes_levels),
            "wind_capacity_mw": cfg.env.wind_capacity_mw,
            "price_scale": cfg.env.price_scale,
            "temporal_features": list(cfg.env.temporal_features),
            "forecast_horizons": list(cfg.env.forecast_horizons),
        },
        "shaping": plain(cfg.shaping),
        "train": plain(cfg.train),
        "oracle": plain(cfg.oracle_grid),
        "output_dir": cfg.output_dir,
    }


def save_resolved(cfg: ExperimentConfig, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        yaml.safe_dump(resolved_dict(cfg), fh, sort_keys=True)


def build_instance(cfg: ExperimentConfig) -> EpisodeInstance:
    """Materialize the episode data described by the config."""
    d = cfg.data
    if d.source == "csv":
        return load_csv(d.csv_path)
    generator = generate_cs1 if d.case == "cs1" else generate_cs2
    return generator(d.seed, median_price=d.median_price,
                     spike_multiplier=d.spike_multiplier,
                     wind_capacity_mw=cfg.env.wind_capacity_mw)


def make_env(instance: EpisodeInstance, cfg: ExperimentConfig,
             training: bool) -> DispatchEnv:
    return DispatchEnv(instance, params=cfg.plant, config=cfg.env,
                       shaping_config=cfg.shaping, training=training)
