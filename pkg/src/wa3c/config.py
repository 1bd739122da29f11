"""Declarative experiment configuration: one YAML file covering workload,
environment, reward, and trainer sections, with flag overrides on top.

Precedence is flags > file > defaults; every section is validated when the
config object is built, before any run starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml

from .baselines import SchedulerKind
from .environment import ClusterConfig
from .errors import ConfigError
from .reward import ABLATION_WEIGHTS, RewardParams, RewardWeights
from .trainer import TrainerConfig
from .workload import TraceConfig, generate_synthetic, load_trace

_WEIGHT_KEYS = ("qos", "energy", "priority", "fairness", "dismissal")
_TUPLE_FIELDS = {"compute_range", "demand_range", "cpi_range", "mapi_range", "hidden"}


@dataclass(frozen=True)
class ExperimentConfig:
    workload: TraceConfig
    cluster: ClusterConfig
    weights: RewardWeights
    reward: RewardParams
    trainer: TrainerConfig
    trace_path: str | None = None
    scheduler: SchedulerKind = SchedulerKind.WA3C
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        reward = dataclasses.asdict(self.reward)
        w_base = reward.pop("w_base")
        w_max = reward.pop("w_max")
        z = reward.pop("z")
        reward["weights"] = dataclasses.asdict(self.weights)
        environment = dataclasses.asdict(self.cluster)
        environment.update({"w_base": w_base, "w_max": w_max, "z": z})
        data = {
            "workload": dataclasses.asdict(self.workload),
            "trace": self.trace_path,
            "environment": environment,
            "reward": reward,
            "trainer": dataclasses.asdict(self.trainer),
            "scheduler": self.scheduler.value,
            "output_dir": self.output_dir,
        }
        return _tuples_to_lists(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data or {})
        known = {"workload", "trace", "environment", "reward", "trainer", "scheduler", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")

        workload = _build(TraceConfig, data.get("workload") or {}, "workload")
        environment = dict(data.get("environment") or {})
        power = {k: environment.pop(k) for k in ("w_base", "w_max", "z") if k in environment}
        cluster = _build(ClusterConfig, environment, "environment")

        reward_section = dict(data.get("reward") or {})
        weight_map = reward_section.pop("weights", None) or {}
        unknown_w = set(weight_map) - set(_WEIGHT_KEYS)
        if unknown_w:
            raise ConfigError(f"unknown reward weights: {sorted(unknown_w)}")
        weights = _wrap_config_errors(lambda: RewardWeights(**weight_map), "reward.weights")
        reward = _build(RewardParams, {**reward_section, **power}, "reward")

        trainer = _build(TrainerConfig, data.get("trainer") or {}, "trainer")

        scheduler_name = data.get("scheduler", SchedulerKind.WA3C.value)
        try:
            scheduler = SchedulerKind(scheduler_name)
        except ValueError:
            valid = [k.value for k in SchedulerKind]
            raise ConfigError(f"unknown scheduler {scheduler_name!r}, expected one of {valid}") from None

        return cls(
            workload=workload,
            cluster=cluster,
            weights=weights,
            reward=reward,
            trainer=trainer,
            trace_path=data.get("trace"),
            scheduler=scheduler,
            output_dir=data.get("output_dir", "runs"),
        )

    def with_overrides(self, seed=None, scheduler=None, output_dir=None) -> "ExperimentConfig":
        """Apply CLI flag overrides; --seed drives both trace and trainer seeds."""
        exp = self
        if seed is not None:
            exp = dataclasses.replace(
                exp,
                workload=dataclasses.replace(exp.workload, seed=seed),
                trainer=dataclasses.replace(exp.trainer, seed=seed),
            )
        if scheduler is not None:
            exp = dataclasses.replace(exp, scheduler=SchedulerKind(scheduler))
        if output_dir is not None:
            exp = dataclasses.replace(exp, output_dir=str(output_dir))
        return exp

    def training_weights(self) -> RewardWeights:
        """Reward weights for the configured learner (ablation zeroes
        priority/fairness/dismissal and splits weight across QoS and energy)."""
        if self.scheduler is SchedulerKind.PLAIN_A3C:
            return ABLATION_WEIGHTS
        return self.weights

    def training_beta(self) -> float:
        return 0.0 if self.scheduler is SchedulerKind.PLAIN_A3C else self.trainer.beta

    def resolve_trace(self):
        """Full job list for evaluation (ingested file or generated trace)."""
        if self.trace_path is not None:
            return load_trace(self.trace_path)
        return generate_synthetic(self.workload)

    def trace_source(self):
        """Shard source handed to the trainer."""
        if self.trace_path is not None:
            return load_trace(self.trace_path)
        return self.workload


def _tuples_to_lists(obj):
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tuples_to_lists(v) for v in obj]
    return obj


def _wrap_config_errors(build, section):
    try:
        return build()
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _build(cls, section: dict, name: str):
    section = dict(section)
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - fields
    if unknown:
        raise ConfigError(f"{name}: unknown fields {sorted(unknown)}")
    for key in list(section):
        if key in _TUPLE_FIELDS and isinstance(section[key], list):
            section[key] = tuple(section[key])
    def build():
        cfg = cls(**section)
        if hasattr(cfg, "validate"):
            cfg.validate()
        return cfg
    return _wrap_config_errors(build, name)


def load_config(path) -> ExperimentConfig:
    """Parse a YAML experiment file into a validated config."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


def save_config(exp: ExperimentConfig, path) -> None:
    """Serialize a config so that load_config round-trips it exactly."""
    with open(path, "w") as fh:
        yaml.safe_dump(exp.to_dict(), fh, sort_keys=False)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(
        workload=TraceConfig(),
        cluster=ClusterConfig(),
        weights=RewardWeights(),
        reward=RewardParams(),
        trainer=TrainerConfig(),
    )
