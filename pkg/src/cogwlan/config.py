"""System configuration: one versioned JSON document drives the CLI, the
experiment harnesses and the admin server.

Runtime threshold changes made through the admin API are audited and land in
the audit journal, never back in the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .behavior import NormalizationTable, default_normalization_table, summary_size
from .errors import ConfigError, ValidationError
from .mlp import LayerSpec, TrainingConfig
from .policy import PolicyConfig

CONFIG_FORMAT = "cogwlan-config/1"

DEFAULT_SERVICES = ("data_server", "internet")


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8642


@dataclass
class SystemConfig:
    """Everything the security manager needs to run, minus the simulator."""

    norms: NormalizationTable = field(default_factory=default_normalization_table)
    services: tuple[str, ...] = DEFAULT_SERVICES
    generator_hidden: int = 12
    generator_training: TrainingConfig = field(
        default_factory=lambda: TrainingConfig(learning_rate=0.2, iterations=300, seed=11)
    )
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    history_capacity: int = 256
    activity_window: int = 64

    def __post_init__(self) -> None:
        if not self.services:
            raise ConfigError("at least one service must be declared")
        if self.generator_hidden < 1:
            raise ConfigError("generator_hidden must be positive")
        if self.history_capacity < 1 or self.activity_window < 1:
            raise ConfigError("history_capacity and activity_window must be positive")
        expected = summary_size(len(self.services))
        if self.policy.pattern_size != expected:
            raise ConfigError(
                f"policy pattern size {self.policy.pattern_size} does not match the "
                f"{expected}-component usage summary for {len(self.services)} services"
            )

    @property
    def pattern_size(self) -> int:
        return self.policy.pattern_size

    @property
    def generator_spec(self) -> LayerSpec:
        return LayerSpec((self.norms.dimension, self.generator_hidden, self.pattern_size))

    def to_obj(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "features": {
                "version": self.norms.version,
                "entries": [[n, c] for n, c in self.norms.entries],
            },
            "services": list(self.services),
            "generator": {
                "hidden_neurons": self.generator_hidden,
                "training": _training_to_obj(self.generator_training),
            },
            "policy": {
                "theta": self.policy.theta,
                "hidden_layers": list(self.policy.mfnn_spec.sizes[1:-1]),
                "min_history": self.policy.min_history,
                "training": _training_to_obj(self.policy.training),
            },
            "history_capacity": self.history_capacity,
            "activity_window": self.activity_window,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SystemConfig":
        if obj.get("format") != CONFIG_FORMAT:
            raise ConfigError(f"unsupported config format {obj.get('format')!r}")
        try:
            defaults = cls()
            norms = defaults.norms
            if "features" in obj:
                norms = NormalizationTable(
                    entries=tuple((n, float(c)) for n, c in obj["features"]["entries"]),
                    version=int(obj["features"].get("version", 1)),
                )
            services = tuple(obj.get("services", DEFAULT_SERVICES))
            gen = obj.get("generator", {})
            gen_training = _training_from_obj(gen.get("training"), defaults.generator_training)
            pol = obj.get("policy", {})
            pattern_size = summary_size(len(services))
            hidden = pol.get("hidden_layers", [24, 12])
            policy = PolicyConfig(
                theta=float(pol.get("theta", 0.1)),
                mfnn_spec=LayerSpec((pattern_size, *map(int, hidden), pattern_size)),
                training=_training_from_obj(pol.get("training"), defaults.policy.training),
                min_history=int(pol.get("min_history", 5)),
            )
            return cls(
                norms=norms,
                services=services,
                generator_hidden=int(gen.get("hidden_neurons", 12)),
                generator_training=gen_training,
                policy=policy,
                history_capacity=int(obj.get("history_capacity", 256)),
                activity_window=int(obj.get("activity_window", 64)),
            )
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def _training_to_obj(t: TrainingConfig) -> dict:
    return {
        "learning_rate": t.learning_rate,
        "iterations": t.iterations,
        "seed": t.seed,
        "init_scale": t.init_scale,
    }


def _training_from_obj(obj: dict | None, default: TrainingConfig) -> TrainingConfig:
    if obj is None:
        return default
    return TrainingConfig(
        learning_rate=float(obj.get("learning_rate", default.learning_rate)),
        iterations=int(obj.get("iterations", default.iterations)),
        seed=int(obj.get("seed", default.seed)),
        init_scale=float(obj.get("init_scale", default.init_scale)),
    )


@dataclass
class LoadedConfig:
    system: SystemConfig
    sim: dict
    server: ServerConfig


def load_config(path: str | Path | None) -> LoadedConfig:
    """Parse and validate a config file; None loads the built-in defaults."""
    if path is None:
        return LoadedConfig(system=SystemConfig(), sim={}, server=ServerConfig())
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    system = SystemConfig.from_obj(obj)
    server_obj = obj.get("server", {})
    server = ServerConfig(
        host=str(server_obj.get("host", "127.0.0.1")),
        port=int(server_obj.get("port", 8642)),
    )
    return LoadedConfig(system=system, sim=obj.get("sim", {}), server=server)
