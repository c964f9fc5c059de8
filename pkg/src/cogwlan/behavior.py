"""Relational behavior pattern generation.

Raw per-node activity windows are min-max scaled into a fixed, documented
feature order, then pushed through the node's own generator network (its
operational matrix) to produce a behavior pattern in (0, 1)^P. Calibration
trains that generator to compress each activity window into a normalized
per-service usage summary, so the pattern tracks how the node actually uses
each offered service.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, StructuralError, ValidationError
from .mlp import LayerSpec, NetworkWeights, Sample, TrainingConfig, forward, init_weights, train_backprop

FEATURE_TABLE_VERSION = 1

# calibration targets are squashed away from the sigmoid asymptotes
_TARGET_LO = 0.05
_TARGET_HI = 0.95


@dataclass
class ServiceUsage:
    """Raw counters for one offered service over one activity window."""

    bytes_up: int = 0
    bytes_down: int = 0
    session_count: int = 0

    def __post_init__(self) -> None:
        if min(self.bytes_up, self.bytes_down, self.session_count) < 0:
            raise ValidationError("service counters must be non-negative")


@dataclass
class NodeActivity:
    """One measurement window of a node's service usage."""

    node_id: str
    window_start: float
    window_end: float
    ap_id: int
    failed_auth_count: int
    services: dict[str, ServiceUsage]

    def __post_init__(self) -> None:
        if not self.window_end > self.window_start:
            raise ValidationError("window_end must be after window_start")
        if self.failed_auth_count < 0:
            raise ValidationError("failed_auth_count must be non-negative")
        if self.ap_id < 0:
            raise ValidationError("ap_id must be non-negative")

    @property
    def duration(self) -> float:
        return self.window_end - self.window_start

    def total(self, counter: str) -> int:
        return sum(getattr(u, counter) for u in self.services.values())

    def to_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "ap_id": self.ap_id,
            "failed_auth_count": self.failed_auth_count,
            "services": {
                name: {
                    "bytes_up": u.bytes_up,
                    "bytes_down": u.bytes_down,
                    "session_count": u.session_count,
                }
                for name, u in self.services.items()
            },
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "NodeActivity":
        return cls(
            node_id=obj["node_id"],
            window_start=obj["window_start"],
            window_end=obj["window_end"],
            ap_id=obj["ap_id"],
            failed_auth_count=obj["failed_auth_count"],
            services={
                name: ServiceUsage(
                    bytes_up=u["bytes_up"],
                    bytes_down=u["bytes_down"],
                    session_count=u["session_count"],
                )
                for name, u in obj["services"].items()
            },
        )


@dataclass(frozen=True)
class NormalizationTable:
    """Ordered feature list with per-feature caps for min-max scaling.

    The entry order defines the encoder's feature order and therefore the
    generator's input dimension. Changing entries or order is a version bump
    and invalidates previously issued operational matrices.
    """

    entries: tuple[tuple[str, float], ...]
    version: int = FEATURE_TABLE_VERSION

    def __post_init__(self) -> None:
        if not self.entries:
            raise ConfigError("normalization table must declare at least one feature")
        seen = set()
        for name, cap in self.entries:
            if cap <= 0:
                raise ConfigError(f"feature {name!r}: cap must be positive, got {cap}")
            if name in seen:
                raise ConfigError(f"feature {name!r} declared twice")
            seen.add(name)

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def cap(self, name: str) -> float:
        for n, c in self.entries:
            if n == name:
                return c
        raise ConfigError(f"no normalization cap for feature {name!r}")


def default_normalization_table() -> NormalizationTable:
    """The stock 20-feature encoding for the two offered services.

    Linear and square-root views of the volume counters. Scale-invariant
    ratios are deliberately absent from the default list: they stay flat
    under volumetric anomalies while still contributing window noise, which
    dilutes deviation visibility. The ratio extractors remain available for
    custom tables.
    """
    return NormalizationTable(
        entries=(
            ("data_server.bytes_up", 10e6),
            ("data_server.bytes_down", 50e6),
            ("data_server.sessions", 50.0),
            ("internet.bytes_up", 10e6),
            ("internet.bytes_down", 50e6),
            ("internet.sessions", 50.0),
            ("failed_auth", 20.0),
            ("total.bytes_up", 20e6),
            ("total.bytes_down", 100e6),
            ("total.sessions", 100.0),
            ("traffic_intensity", 400e3),
            ("data_server.bytes_up_sqrt", 10e6),
            ("data_server.bytes_down_sqrt", 50e6),
            ("data_server.sessions_sqrt", 50.0),
            ("internet.bytes_up_sqrt", 10e6),
            ("internet.bytes_down_sqrt", 50e6),
            ("internet.sessions_sqrt", 50.0),
            ("total.bytes_up_sqrt", 20e6),
            ("total.bytes_down_sqrt", 100e6),
            ("total.sessions_sqrt", 100.0),
        )
    )


def _service_usage(activity: NodeActivity, service: str) -> ServiceUsage:
    try:
        return activity.services[service]
    except KeyError:
        raise ConfigError(f"activity for {activity.node_id!r} lacks declared service {service!r}")


def _raw_feature(activity: NodeActivity, name: str) -> float:
    if "." in name:
        prefix, counter = name.split(".", 1)
        if prefix == "total":
            if counter == "bytes_up":
                return float(activity.total("bytes_up"))
            if counter == "bytes_down":
                return float(activity.total("bytes_down"))
            if counter == "sessions":
                return float(activity.total("session_count"))
        else:
            usage = _service_usage(activity, prefix)
            if counter == "bytes_up":
                return float(usage.bytes_up)
            if counter == "bytes_down":
                return float(usage.bytes_down)
            if counter == "sessions":
                return float(usage.session_count)
            if counter == "upload_ratio":
                vol = usage.bytes_up + usage.bytes_down
                return usage.bytes_up / vol if vol else 0.0
            if counter == "traffic_share":
                total = activity.total("bytes_up") + activity.total("bytes_down")
                return (usage.bytes_up + usage.bytes_down) / total if total else 0.0
            if counter == "bytes_per_session":
                if usage.session_count == 0:
                    return 0.0
                return (usage.bytes_up + usage.bytes_down) / usage.session_count
            if counter == "session_share":
                total = activity.total("session_count")
                return usage.session_count / total if total else 0.0
    elif name == "failed_auth":
        return float(activity.failed_auth_count)
    elif name == "auth_failure_ratio":
        denom = activity.total("session_count") + activity.failed_auth_count
        return activity.failed_auth_count / denom if denom else 0.0
    elif name == "window_duration":
        return activity.duration
    elif name == "ap_index":
        return float(activity.ap_id)
    elif name == "traffic_intensity":
        total = activity.total("bytes_up") + activity.total("bytes_down")
        return total / activity.duration
    raise ConfigError(f"unknown feature {name!r} in normalization table")


def encode_activity(activity: NodeActivity, norms: NormalizationTable) -> np.ndarray:
    """Scale one activity window into [0,1]^D following the table's feature order.

    Values at or above a feature's cap clamp to 1.0. A `_sqrt` suffix takes
    the square root of the capped base feature (still monotone, still [0,1]).
    """
    values = np.empty(norms.dimension, dtype=np.float64)
    for i, (name, cap) in enumerate(norms.entries):
        base = name[:-5] if name.endswith("_sqrt") else name
        scaled = min(max(_raw_feature(activity, base) / cap, 0.0), 1.0)
        values[i] = math.sqrt(scaled) if base is not name else scaled
    return values


@dataclass
class OperationalMatrix:
    """Per-node generator network plus issuing metadata."""

    generator_net: NetworkWeights
    issued_at: float = 0.0
    issuer: str = "auto-policy"
    table_version: int = FEATURE_TABLE_VERSION

    @property
    def input_size(self) -> int:
        return self.generator_net.layer_spec().input_size

    @property
    def pattern_size(self) -> int:
        return self.generator_net.layer_spec().output_size


@dataclass
class BehaviorPattern:
    """Generator output for one activity window; components strictly in (0, 1)."""

    values: np.ndarray
    produced_at: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise StructuralError("behavior pattern must be a vector")
        if ((self.values <= 0.0) | (self.values >= 1.0)).any():
            raise ValidationError("behavior pattern components must lie strictly in (0, 1)")

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def generate_pattern(
    om: OperationalMatrix, activity: NodeActivity, norms: NormalizationTable
) -> BehaviorPattern:
    """Encode the window and evaluate the node's generator on it.

    Pure function of its inputs: the pattern timestamp is the window end,
    so identical inputs always produce identical patterns.
    """
    if om.table_version != norms.version:
        raise StructuralError(
            f"operational matrix was issued for feature table v{om.table_version}, "
            f"encoder uses v{norms.version}"
        )
    x = encode_activity(activity, norms)
    if om.input_size != x.shape[0]:
        raise StructuralError(
            f"operational matrix expects {om.input_size} features, encoder produced {x.shape[0]}"
        )
    return BehaviorPattern(values=forward(om.generator_net, x), produced_at=activity.window_end)


def usage_summary(activity: NodeActivity, norms: NormalizationTable) -> np.ndarray:
    """Normalized per-service usage profile of one window, the calibration target.

    Layout: for each service in name order its scaled (bytes_up, bytes_down,
    sessions), then failed_auth and traffic_intensity; squashed into
    [0.05, 0.95] to stay in the sigmoid's comfortably reachable range.
    """
    parts: list[float] = []
    for service in sorted(activity.services):
        usage = activity.services[service]
        parts.append(usage.bytes_up / norms.cap(f"{service}.bytes_up"))
        parts.append(usage.bytes_down / norms.cap(f"{service}.bytes_down"))
        parts.append(usage.session_count / norms.cap(f"{service}.sessions"))
    parts.append(activity.failed_auth_count / norms.cap("failed_auth"))
    total = activity.total("bytes_up") + activity.total("bytes_down")
    parts.append(total / activity.duration / norms.cap("traffic_intensity"))
    raw = np.clip(np.asarray(parts, dtype=np.float64), 0.0, 1.0)
    return np.clip(_TARGET_LO + (_TARGET_HI - _TARGET_LO) * raw, _TARGET_LO, _TARGET_HI)


def summary_size(service_count: int) -> int:
    """Target/pattern dimension implied by the number of offered services."""
    return 3 * service_count + 2


def summary_source_features(services: Sequence[str]) -> list[str]:
    """Feature names that define each usage-summary dimension, in order."""
    sources: list[str] = []
    for service in sorted(services):
        sources.extend(
            (f"{service}.bytes_up", f"{service}.bytes_down", f"{service}.sessions")
        )
    sources.append("failed_auth")
    sources.append("traffic_intensity")
    return sources


# local gains of the passthrough seed: hidden sigmoid slope 4, output slope
# 3.6 reproduce the summary's d(target)/d(feature) = 0.9 at mid-range
_SEED_HIDDEN_GAIN = 4.0
_SEED_OUTPUT_GAIN = 3.6


def passthrough_seed(
    spec: LayerSpec, norms: NormalizationTable, services: Sequence[str]
) -> NetworkWeights | None:
    """Generator initialization wired dimension-for-dimension to the summary's
    source features.

    Each summary component is an affine function of exactly one encoded
    feature, so seeding training with that wiring (centered sigmoids of
    matching local slope) starts calibration at the right map; per-node
    training then only fine-tunes around the node's operating point. Falls
    back to None when the table lacks a source feature or the architecture
    cannot host the wiring.
    """
    if len(spec.sizes) != 3:
        return None
    d, h, p = spec.sizes
    sources = summary_source_features(services)
    if p != len(sources) or h < p or d != norms.dimension:
        return None
    names = [n for n, _ in norms.entries]
    if any(s not in names for s in sources):
        return None
    w1 = np.zeros((h, d))
    b1 = np.zeros(h)
    w2 = np.zeros((p, h))
    b2 = np.zeros(p)
    for k, src in enumerate(sources):
        w1[k, names.index(src)] = _SEED_HIDDEN_GAIN
        b1[k] = -_SEED_HIDDEN_GAIN * 0.5
        w2[k, k] = _SEED_OUTPUT_GAIN
        b2[k] = -_SEED_OUTPUT_GAIN * 0.5
    return NetworkWeights([w1, w2], [b1, b2])


def calibrate_om(
    history: Sequence[NodeActivity],
    targets: Sequence[np.ndarray],
    config: TrainingConfig,
    spec: LayerSpec,
    norms: NormalizationTable | None = None,
    issuer: str = "auto-policy",
) -> OperationalMatrix:
    """Train a generator on (encoded window -> target) pairs.

    Deterministic for a fixed seed; the issued_at stamp is the latest window
    end in the calibration history.
    """
    if not history:
        raise ValidationError("calibration history must not be empty")
    if len(targets) != len(history):
        raise ValidationError(
            f"got {len(history)} activity windows but {len(targets)} targets"
        )
    norms = norms if norms is not None else default_normalization_table()
    if spec.input_size != norms.dimension:
        raise StructuralError(
            f"generator spec expects {spec.input_size} inputs, feature table has {norms.dimension}"
        )
    samples = [
        Sample(encode_activity(a, norms), np.asarray(t, dtype=np.float64))
        for a, t in zip(history, targets)
    ]
    net = passthrough_seed(spec, norms, list(history[0].services))
    if net is None:
        net = init_weights(spec, config)
    trained, _ = train_backprop(net, samples, config)
    return OperationalMatrix(
        generator_net=trained,
        issued_at=max(a.window_end for a in history),
        issuer=issuer,
        table_version=norms.version,
    )
