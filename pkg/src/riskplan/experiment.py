"""Run configuration, environment construction and the train/eval/bench pipelines."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import yaml

from riskplan.envs.hallway import HallwayIndex, build_hallway_mdp, trap_maze_map, load_hallway
from riskplan.envs.random_walk import RandomWalkSpec, WalkAction, build_random_walk_mdp
from riskplan.harness import (
    EpisodeSettings,
    EvalResult,
    TrainResult,
    ralph_evaluate,
    ralph_train,
    write_metrics_csv,
    write_probe_csv,
    write_run_json,
)
from riskplan.mdp import MdpModel
from riskplan.predictor import PredictorTable
from riskplan.risk import ExplorationConfig
from riskplan.tree import UctConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str = "hallway"
    env_params: dict = field(default_factory=dict)
    delta: float = 0.0
    discount: float = 0.95
    horizon: int = 40
    train_episodes: int = 5000
    batch_size: int = 100
    learning_rate: float = 0.1
    r_init: float = 0.0
    exploration_constant: float = 1.0
    simulations: Optional[int] = 25
    timeout: Optional[float] = None
    expl_start: float = 0.5
    expl_decay: float = 0.999
    expl_floor: float = 0.05
    temperature: float = 0.2
    exploration_index: str = "global"
    eval_episodes: int = 1000
    seed: int = 0
    threads: int = 1
    early_termination: bool = True
    risk_method: str = "dp"

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must lie in [0, 1]")
        if self.train_episodes < 0 or self.eval_episodes < 0:
            raise ConfigError("episode counts must be nonnegative")
        if self.batch_size < 1 or self.threads < 1:
            raise ConfigError("batch size and thread count must be positive")
        if self.exploration_index not in ("global", "episode"):
            raise ConfigError("exploration_index must be 'global' or 'episode'")
        if self.risk_method not in ("dp", "lp"):
            raise ConfigError("risk_method must be 'dp' or 'lp'")

    def settings(self) -> EpisodeSettings:
        return EpisodeSettings(
            uct=UctConfig(self.exploration_constant, self.simulations, self.timeout),
            exploration=ExplorationConfig(self.expl_start, self.expl_decay, self.expl_floor,
                                          self.temperature),
            early_termination=self.early_termination,
            risk_method=self.risk_method,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, kind, value):
    optional = kind in (Optional[int], Optional[float])
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{name} may not be empty")
    base = {Optional[int]: int, Optional[float]: float}.get(kind, kind)
    if base is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if base is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if base is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a mapping")
        return dict(value)
    if not isinstance(value, base):
        raise ConfigError(f"{name} must be of type {base.__name__}")
    return value


_TYPES = {
    "env": str, "env_params": dict, "delta": float, "discount": float, "horizon": int,
    "train_episodes": int, "batch_size": int, "learning_rate": float, "r_init": float,
    "exploration_constant": float, "simulations": Optional[int], "timeout": Optional[float],
    "expl_start": float, "expl_decay": float, "expl_floor": float, "temperature": float,
    "exploration_index": str, "eval_episodes": int, "seed": int, "threads": int,
    "early_termination": bool, "risk_method": str,
}
assert set(_TYPES) == {f.name for f in fields(RunConfig)}


def config_from_dict(raw: dict, base: Optional[RunConfig] = None) -> RunConfig:
    unknown = sorted(set(raw) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = base.to_dict() if base is not None else {}
    for key, value in raw.items():
        values[key] = _coerce(key, _TYPES[key], value)
    if "timeout" in raw and raw["timeout"] is not None and "simulations" not in raw:
        values["simulations"] = None
    cfg = RunConfig(**values)
    build_environment(cfg)  # validates env_params
    return cfg


def load_config(path: "str | os.PathLike", overrides: Optional[dict] = None) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: the configuration must be a mapping")
    raw.update(overrides or {})
    return config_from_dict(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# ------------------------------------------------------------- environments

@dataclass
class Environment:
    model: MdpModel
    extras: Optional[Callable] = None


def _hallway(cfg: RunConfig) -> Environment:
    params = dict(cfg.env_params)
    allowed = {"map", "slip_prob", "trap_destroy_prob", "gold_reward", "step_penalty",
               "finish_on_gold"}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"unknown hallway parameters: {', '.join(unknown)}")
    source = params.pop("map", "trap_maze")
    hmap = trap_maze_map() if source == "trap_maze" else load_hallway(source)
    if params:
        hmap = dataclasses.replace(hmap, **params)
    model = build_hallway_mdp(hmap, cfg.discount, cfg.horizon)
    idx = HallwayIndex(hmap)
    n_gold = len(hmap.golds)

    def extras(record):
        got = idx.gold_collected(record.final_state)
        return {"gold_collected": got, "all_gold": float(n_gold > 0 and got == n_gold)}

    return Environment(model, extras)


def _random_walk(cfg: RunConfig) -> Environment:
    p = dict(cfg.env_params)
    allowed = {"target", "initial_wealth", "safe_gain", "safe_loss_prob", "risky_gain",
               "risky_loss_prob", "loss", "lose_all", "step_penalty"}
    unknown = sorted(set(p) - allowed)
    if unknown:
        raise ConfigError(f"unknown random-walk parameters: {', '.join(unknown)}")
    default = RandomWalkSpec()
    safe, risky = default.actions
    spec = RandomWalkSpec(
        target=p.get("target", default.target),
        initial_wealth=p.get("initial_wealth", default.initial_wealth),
        actions=(WalkAction(p.get("safe_gain", safe.gain), p.get("safe_loss_prob", safe.loss_prob), "safe"),
                 WalkAction(p.get("risky_gain", risky.gain), p.get("risky_loss_prob", risky.loss_prob), "risky")),
        loss=p.get("loss", default.loss),
        lose_all=p.get("lose_all", default.lose_all),
        step_penalty=p.get("step_penalty", default.step_penalty),
    )
    model = build_random_walk_mdp(spec, cfg.discount, cfg.horizon)
    target = spec.target
    return Environment(model, lambda r: {"reached_target": float(r.final_state == target)})


ENVIRONMENTS = {"hallway": _hallway, "random_walk": _random_walk}


def build_environment(cfg: RunConfig) -> Environment:
    try:
        return ENVIRONMENTS[cfg.env](cfg)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {cfg.env} parameters: {exc}") from exc


# ------------------------------------------------------------- pipelines

def train(cfg: RunConfig, env: Optional[Environment] = None, progress=None) -> TrainResult:
    env = env or build_environment(cfg)
    return ralph_train(env.model, cfg.settings(), episodes=cfg.train_episodes,
                       batch_size=cfg.batch_size, delta=cfg.delta,
                       learning_rate=cfg.learning_rate, seed=cfg.seed, threads=cfg.threads,
                       r_init=cfg.r_init,
                       global_exploration_index=cfg.exploration_index == "global",
                       progress=progress)


def evaluate(cfg: RunConfig, table: PredictorTable, env: Optional[Environment] = None,
             train_result: Optional[TrainResult] = None) -> EvalResult:
    env = env or build_environment(cfg)
    return ralph_evaluate(env.model, cfg.settings(), table, episodes=cfg.eval_episodes,
                          delta=cfg.delta, seed=cfg.seed, threads=cfg.threads,
                          extras=env.extras, train=train_result)


def write_outputs(out_dir: "str | os.PathLike", cfg: RunConfig, env: Environment,
                  result: EvalResult, label: str = "run") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", [result.report], [label])
    write_run_json(out / "run.json", cfg.to_dict(), result, env.model.discount)
    write_probe_csv(out / "probe.csv", result.probe, env.model)
