"""Experiment configuration: one JSON document, one block per module.

Every field has a default, so ``{}`` is a runnable config; unknown keys are
rejected so that typos fail loudly instead of silently running defaults.
The ``map`` field is either a filesystem path or the name of a map shipped
with the package (``manhattan32``, ``urban50``, ``bench16``, ``smoke6``).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .dynamics import RewardWeights
from .env import Env
from .missions import Mission
from .observation import ObsParams
from .qnet import QNetConfig
from .radio import ChannelParams
from .trainer import ExplorationConfig, TrainerConfig
from .world import EnvironmentMap, ScenarioSpec, load_map


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    map: str = "manhattan32"
    scenario: ScenarioSpec = field(default_factory=lambda: ScenarioSpec(mission=Mission.CPP))
    channel: ChannelParams = field(default_factory=ChannelParams)
    obs: ObsParams = field(default_factory=ObsParams)
    net: QNetConfig = field(default_factory=QNetConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    eval_episodes: int = 1000
    render_scale: int = 12


# config keys that are internal plumbing, not user-settable
_EXCLUDED = {
    ScenarioSpec: {"rng_seed"},
    ObsParams: {"target_scale"},
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {f.name for f in fields(cls)} - _EXCLUDED.get(cls, set())
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"{where}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if f.name == "mission":
            try:
                value = Mission(value)
            except ValueError:
                raise ConfigError(f"{where}.mission: must be 'cpp' or 'dh', got {value!r}") from None
        elif f.name == "exploration":
            value = _build(ExplorationConfig, value, f"{where}.exploration")
        elif f.name.endswith("_range"):
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError(f"{where}.{f.name}: expected [lo, hi]")
            value = tuple(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    blocks = {
        "scenario": ScenarioSpec,
        "channel": ChannelParams,
        "obs": ObsParams,
        "net": QNetConfig,
        "trainer": TrainerConfig,
        "rewards": RewardWeights,
    }
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"top level: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    kwargs = {}
    for name, value in data.items():
        if name in blocks:
            kwargs[name] = _build(blocks[name], value, name)
        else:
            kwargs[name] = value
    try:
        cfg = ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"top level: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    blocks = (
        ("scenario", cfg.scenario), ("channel", cfg.channel), ("obs", cfg.obs),
        ("net", cfg.net), ("trainer", cfg.trainer), ("rewards", cfg.rewards),
    )
    for name, block in blocks:
        try:
            block.validate()
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
    if cfg.eval_episodes < 1:
        raise ConfigError("eval_episodes must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["scenario"]["mission"] = cfg.scenario.mission.value
    del out["scenario"]["rng_seed"]
    del out["obs"]["target_scale"]
    for key in ("movement_budget_range", "cpp_zone_count_range", "device_data_range"):
        out["scenario"][key] = list(out["scenario"][key])
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def builtin_map_names() -> list[str]:
    root = resources.files("uavgrid").joinpath("maps")
    return sorted(p.name[: -len(".map")] for p in root.iterdir() if p.name.endswith(".map"))


def resolve_map(name_or_path: str) -> EnvironmentMap:
    path = Path(name_or_path)
    if path.is_file():
        return load_map(path.read_text())
    candidate = resources.files("uavgrid").joinpath("maps", f"{name_or_path}.map")
    if candidate.is_file():
        return load_map(candidate.read_text())
    raise ConfigError(
        f"map {name_or_path!r} is neither a file nor a builtin map "
        f"(builtins: {builtin_map_names()})"
    )


def effective_obs_params(cfg: ExperimentConfig) -> ObsParams:
    """Observation params with the target normalization derived from the mission."""
    scale = 1.0
    if cfg.scenario.mission is Mission.DH:
        scale = max(1.0, cfg.scenario.device_data_range[1])
    return dataclasses.replace(cfg.obs, target_scale=scale)


def build_env(cfg: ExperimentConfig, env_map: EnvironmentMap | None = None) -> Env:
    if env_map is None:
        env_map = resolve_map(cfg.map)
    obs_params = effective_obs_params(cfg)
    if cfg.obs.local_size > 2 * env_map.size_g - 1:
        raise ConfigError(
            f"obs.local_size {cfg.obs.local_size} exceeds centered map side "
            f"{2 * env_map.size_g - 1}"
        )
    return Env(env_map, cfg.scenario, cfg.channel, obs_params, cfg.rewards)


def apply_overrides(
    cfg: ExperimentConfig,
    seed: int | None = None,
    steps: int | None = None,
    episodes: int | None = None,
    core: str | None = None,
    attention: bool | None = None,
) -> ExperimentConfig:
    """CLI flag overrides on top of a loaded config."""
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if steps is not None:
        cfg = dataclasses.replace(cfg, trainer=dataclasses.replace(cfg.trainer, total_steps=steps))
    if episodes is not None:
        cfg = dataclasses.replace(cfg, eval_episodes=episodes)
    if core is not None:
        cfg = dataclasses.replace(cfg, net=dataclasses.replace(cfg.net, core=core))
    if attention is not None:
        cfg = dataclasses.replace(cfg, net=dataclasses.replace(cfg.net, attention=attention))
    validate_config(cfg)
    return cfg
