import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.backend.classes import Constants, IntentKind


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WorldGenConfig(_Section):
    num_nodes: int = 40
    max_degree: int = Field(Constants.max_degree, ge=2)
    nodes_per_room: int = Field(4, ge=1)
    room_size: float = Field(4.0, gt=0)
    # extra edges (beyond the spanning tree) between nodes closer than this
    extra_edge_radius: float = 3.0
    extra_edge_prob: float = Field(0.35, ge=0, le=1)
    min_objects_per_node: int = Field(0, ge=0)
    max_objects_per_node: int = Field(5, ge=0)
    object_spread: float = Field(2.0, ge=0)
    zipf_exponent: float = Field(1.1, ge=0)
    room_affinity: float = Field(0.5, ge=0, le=1)
    room_names: List[str] = Field(default_factory=lambda: list(Constants.room_names))
    object_names: List[str] = Field(default_factory=lambda: list(Constants.object_names))


class CorpusConfig(_Section):
    num_worlds: int = Field(12, ge=1)
    # world i is generated from seed `seed * 1000 + i`
    world_prefix: str = "house"


class SplitConfig(_Section):
    train_only_worlds: int = Field(2, ge=0)
    val_env_worlds: int = Field(2, ge=0)
    test_env_worlds: int = Field(2, ge=0)
    num_held_out_objects: int = Field(15, ge=0)
    top_k: int = Field(Constants.top_k, ge=1)
    pretrain_size: int = 2000
    pretrain_val_size: int = 200
    train_size: int = 1500
    eval_size: int = 150
    pretrain_lengths: Tuple[int, int] = (1, 10)
    task_lengths: Tuple[int, int] = (5, 10)
    max_tries: int = 200


class CostConfig(_Section):
    gamma: Dict[IntentKind, float] = Field(
        default_factory=lambda: {
            IntentKind.CUR: Constants.action_cost,
            IntentKind.GOAL: Constants.action_cost,
            IntentKind.SUB: Constants.action_cost,
            IntentKind.DO: Constants.action_cost,
        }
    )
    shaping_enabled: bool = True
    H: int = Field(Constants.horizon, ge=1)

    @field_validator("gamma")
    @classmethod
    def check_gamma(cls, gamma):
        missing = {IntentKind.CUR, IntentKind.GOAL, IntentKind.SUB, IntentKind.DO} - set(gamma)
        if missing:
            raise ValueError(f"Missing action costs for {sorted(k.value for k in missing)}")
        if IntentKind.DONE in gamma:
            raise ValueError("DONE is priced by the task error, not by a constant cost")
        for kind, value in gamma.items():
            if value < 0:
                raise ValueError(f"Cost of {kind.value} must be non-negative, got {value}")
        return gamma

    @classmethod
    def uniform(cls, cost: float, **kwargs) -> "CostConfig":
        kinds = (IntentKind.CUR, IntentKind.GOAL, IntentKind.SUB, IntentKind.DO)
        return cls(gamma={kind: cost for kind in kinds}, **kwargs)


class EnvConfig(_Section):
    costs: CostConfig = Field(default_factory=CostConfig)
    stack_size: int = Field(Constants.stack_size, ge=1, le=Constants.max_stack_size)
    l_max: int = Field(Constants.l_max, ge=1)
    perception: Literal["sparse", "dense"] = "sparse"
    cooperative: bool = True
    top_k: int = Field(Constants.top_k, ge=1)
    subgoal_budget_factor: int = Field(Constants.subgoal_budget_factor, ge=1)
    # expose stack depth, step fraction and subgoal budget to the intention policy
    stack_features: bool = True


class ModelConfig(_Section):
    exec_hidden: int = 128
    intent_hidden: int = 128
    action_embedding: int = 16
    init_scale: float = 0.08


class PretrainConfig(_Section):
    iterations: int = Field(20000, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-4, gt=0)
    # epochs (passes over the pretrain split) rolled out by the expert before the learner takes over
    expert_epochs: int = Field(1, ge=0)
    horizon: int = Field(Constants.exec_horizon, ge=1)
    eval_every: int = Field(500, ge=1)
    checkpoint_every: int = Field(2000, ge=1)


class A2CConfig(_Section):
    iterations: int = Field(10000, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-5, gt=0)
    entropy_weight: float = Field(0.001, ge=0)
    critic_pretrain_iterations: int = Field(5000, ge=0)
    eval_every: int = Field(500, ge=1)
    checkpoint_every: int = Field(1000, ge=1)
    num_workers: int = Field(4, ge=1)


class EvalConfig(_Section):
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    bins: int = Field(10, ge=1)
    bootstrap_resamples: int = Field(1000, ge=1)
    gzip_traces: bool = False
    num_workers: int = Field(4, ge=1)


class RunConfig(_Section):
    preset: Literal["desk", "paper"] = "desk"
    seed: int = 0
    world: WorldGenConfig = Field(default_factory=WorldGenConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    splits: SplitConfig = Field(default_factory=SplitConfig)
    env: EnvConfig = Field(default_factory=EnvConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    a2c: A2CConfig = Field(default_factory=A2CConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def check_env_top_k(self):
        if self.env.top_k != self.splits.top_k:
            raise ValueError(f"env.top_k ({self.env.top_k}) and splits.top_k ({self.splits.top_k}) differ")
        return self


PAPER_PRESET: Dict = {
    "model": {"exec_hidden": 256, "intent_hidden": 512},
    "pretrain": {"iterations": 100000},
    "a2c": {"iterations": 50000, "critic_pretrain_iterations": 5000},
}


def _merge(base: Dict, override: Dict) -> Dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict] = None) -> RunConfig:
    """Read a YAML run config; `preset: paper` starts from the full-scale values."""
    raw: Dict = {}
    if path is not None:
        with open(path, "r") as file:
            raw = yaml.safe_load(file) or {}
    if overrides:
        raw = _merge(raw, overrides)
    if raw.get("preset") == "paper":
        raw = _merge(PAPER_PRESET, raw)
    return RunConfig.model_validate(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)


def default_out_dir() -> Path:
    return Path(os.getenv("INTENTION_NAV_OUT", "runs"))
