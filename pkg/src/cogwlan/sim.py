"""Synthetic WLAN test bed: 60 nodes across 6 access points by default,
emitting windowed activity from per-node Gaussian usage profiles, with
sigma-scaled deviation injection for a malicious subset.

Everything is a deterministic function of the configured seed: fingerprints,
profiles, malicious-set selection and every activity window. Experiments
drive the security manager over the generated trace and measure node-level
detection and false-positive rates plus per-event evaluation latency.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import NodeActivity, ServiceUsage
from .config import SystemConfig
from .csm import (
    AdminAction,
    AdminActionKind,
    AdminPolicy,
    AdmissionMode,
    EventPath,
    NodeEvent,
    SecurityManager,
)
from .errors import ValidationError
from .mlp import (
    LayerSpec,
    NetworkWeights,
    Sample,
    TrainingConfig,
    forward,
    init_weights,
    train_backprop,
)
from .store import PadlFingerprint

_CHIPSETS = ("ath9k", "iwlwifi", "rt2800usb", "bcm4331", "mt7601u")
_BAND_SETS = ("b|g", "b|g|n", "b|g|n|ac", "a|b|g|n", "a|b|g|n|ac")


@dataclass
class ProfileClass:
    """Usage profile family: counter means drawn as a fraction of each cap."""

    name: str = "default"
    weight: float = 1.0
    mean_frac_lo: float = 0.25
    mean_frac_hi: float = 0.55
    std_frac: float = 0.05

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValidationError("profile class weight must be positive")
        if not (0.0 <= self.mean_frac_lo <= self.mean_frac_hi <= 1.0):
            raise ValidationError("mean fraction range must satisfy 0 <= lo <= hi <= 1")
        if self.std_frac < 0:
            raise ValidationError("std_frac must be >= 0")


@dataclass
class DeviationSpec:
    """How malicious nodes deviate: additive shift in units of profile std."""

    malicious_fraction: float = 0.25
    onset_epoch: int = 60
    shift_sigmas: float = 5.0
    simultaneous: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.malicious_fraction <= 1.0):
            raise ValidationError("malicious_fraction must be in [0, 1]")
        if self.onset_epoch < 0:
            raise ValidationError("onset_epoch must be >= 0")


@dataclass
class SimConfig:
    node_count: int = 60
    ap_count: int = 6
    epochs: int = 68
    seed: int = 0
    calibration_epochs: int = 10
    window_seconds: float = 300.0
    classes: list[ProfileClass] = field(default_factory=lambda: [ProfileClass()])
    deviation: DeviationSpec = field(default_factory=DeviationSpec)

    def __post_init__(self) -> None:
        if self.node_count < 1 or self.ap_count < 1:
            raise ValidationError("node_count and ap_count must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.calibration_epochs < 2:
            raise ValidationError("calibration_epochs must be >= 2 (admission plus one window)")
        if self.window_seconds <= 0:
            raise ValidationError("window_seconds must be positive")
        if not self.classes:
            raise ValidationError("at least one profile class is required")
        if self.deviation.malicious_fraction > 0 and self.deviation.onset_epoch < self.calibration_epochs:
            raise ValidationError("deviation onset must not precede calibration")

    @classmethod
    def from_obj(cls, obj: dict) -> "SimConfig":
        classes = [
            ProfileClass(
                name=c.get("name", f"class{i}"),
                weight=float(c.get("weight", 1.0)),
                mean_frac_lo=float(c.get("mean_frac_lo", 0.25)),
                mean_frac_hi=float(c.get("mean_frac_hi", 0.55)),
                std_frac=float(c.get("std_frac", 0.05)),
            )
            for i, c in enumerate(obj.get("classes", [{}]))
        ]
        dev = obj.get("deviation", {})
        return cls(
            node_count=int(obj.get("node_count", 60)),
            ap_count=int(obj.get("ap_count", 6)),
            epochs=int(obj.get("epochs", 68)),
            seed=int(obj.get("seed", 0)),
            calibration_epochs=int(obj.get("calibration_epochs", 10)),
            window_seconds=float(obj.get("window_seconds", 300.0)),
            classes=classes,
            deviation=DeviationSpec(
                malicious_fraction=float(dev.get("malicious_fraction", 0.0)),
                onset_epoch=int(dev.get("onset_epoch", 0)),
                shift_sigmas=float(dev.get("shift_sigmas", 5.0)),
                simultaneous=bool(dev.get("simultaneous", True)),
            ),
        )


_COUNTERS = (
    ("data_server", "bytes_up"),
    ("data_server", "bytes_down"),
    ("data_server", "session_count"),
    ("internet", "bytes_up"),
    ("internet", "bytes_down"),
    ("internet", "session_count"),
    (None, "failed_auth"),
)

_COUNTER_CAP_KEYS = {
    ("data_server", "bytes_up"): "data_server.bytes_up",
    ("data_server", "bytes_down"): "data_server.bytes_down",
    ("data_server", "session_count"): "data_server.sessions",
    ("internet", "bytes_up"): "internet.bytes_up",
    ("internet", "bytes_down"): "internet.bytes_down",
    ("internet", "session_count"): "internet.sessions",
    (None, "failed_auth"): "failed_auth",
}


@dataclass
class SimNode:
    index: int
    padl: PadlFingerprint
    digest: str
    ap_id: int
    profile_class: str
    means: dict
    stds: dict
    malicious: bool
    onset_epoch: int  # effective epoch this node starts deviating (if malicious)


def node_roster(config: SimConfig, system: SystemConfig) -> list[SimNode]:
    """Deterministic per-node fingerprints, profiles and malicious-set choice."""
    rng = np.random.default_rng((config.seed, 1))
    weights = np.array([c.weight for c in config.classes])
    weights = weights / weights.sum()
    n_mal = int(round(config.deviation.malicious_fraction * config.node_count))
    malicious = set(rng.choice(config.node_count, size=n_mal, replace=False).tolist()) if n_mal else set()

    nodes = []
    mal_rank = 0
    for idx in range(config.node_count):
        node_rng = np.random.default_rng((config.seed, 2, idx))
        mac = "02:" + ":".join(f"{b:02x}" for b in node_rng.integers(0, 256, size=5))
        padl = PadlFingerprint(
            attributes=(
                ("hardware_address", mac),
                ("chipset", _CHIPSETS[int(node_rng.integers(len(_CHIPSETS)))]),
                ("radio_bands", _BAND_SETS[int(node_rng.integers(len(_BAND_SETS)))]),
                ("rf_cal_0", round(float(node_rng.uniform(-1, 1)), 6)),
                ("rf_cal_1", round(float(node_rng.uniform(-1, 1)), 6)),
                ("rf_cal_2", round(float(node_rng.uniform(-1, 1)), 6)),
                ("rf_cal_3", round(float(node_rng.uniform(-1, 1)), 6)),
            )
        )
        cls = config.classes[int(node_rng.choice(len(config.classes), p=weights))]
        means, stds = {}, {}
        for key in _COUNTERS:
            cap = system.norms.cap(_COUNTER_CAP_KEYS[key])
            means[key] = float(node_rng.uniform(cls.mean_frac_lo, cls.mean_frac_hi)) * cap
            stds[key] = cls.std_frac * cap
        is_mal = idx in malicious
        onset = config.deviation.onset_epoch
        if is_mal and not config.deviation.simultaneous:
            onset += mal_rank  # staggered onsets, one epoch apart
            mal_rank += 1
        nodes.append(
            SimNode(
                index=idx,
                padl=padl,
                digest=padl.canonical_digest,
                ap_id=idx % config.ap_count,
                profile_class=cls.name,
                means=means,
                stds=stds,
                malicious=is_mal,
                onset_epoch=onset,
            )
        )
    return nodes


def _window_activity(node: SimNode, epoch: int, config: SimConfig) -> NodeActivity:
    rng = np.random.default_rng((config.seed, 3, node.index, epoch))
    shifted = node.malicious and epoch >= node.onset_epoch
    raw = {}
    for key in _COUNTERS:
        value = rng.normal(node.means[key], node.stds[key])
        if shifted:
            value += config.deviation.shift_sigmas * node.stds[key]
        raw[key] = max(0, int(round(value)))
    start = epoch * config.window_seconds
    return NodeActivity(
        node_id=node.digest,
        window_start=start,
        window_end=start + config.window_seconds,
        ap_id=node.ap_id,
        failed_auth_count=raw[(None, "failed_auth")],
        services={
            "data_server": ServiceUsage(
                bytes_up=raw[("data_server", "bytes_up")],
                bytes_down=raw[("data_server", "bytes_down")],
                session_count=raw[("data_server", "session_count")],
            ),
            "internet": ServiceUsage(
                bytes_up=raw[("internet", "bytes_up")],
                bytes_down=raw[("internet", "bytes_down")],
                session_count=raw[("internet", "session_count")],
            ),
        },
    )


def generate_trace(config: SimConfig, system: SystemConfig | None = None) -> list[NodeEvent]:
    """Epoch-major event stream; each node emits one window per epoch."""
    system = system if system is not None else SystemConfig()
    events = []
    roster = node_roster(config, system)
    for epoch in range(config.epochs):
        for node in roster:
            activity = _window_activity(node, epoch, config)
            events.append(
                NodeEvent(padl=node.padl, activity=activity, received_at=activity.window_end)
            )
    return events


def write_trace(path: str | Path, events: Sequence[NodeEvent]) -> None:
    """One JSON record per line, importable by read_trace."""
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_obj(), sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[NodeEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(NodeEvent.from_obj(json.loads(line)))
    return events


@dataclass
class SimMetrics:
    detection_rate: float
    false_positive_rate: float
    mean_eval_latency_ms: float
    mean_retrain_latency_ms: float
    injected_malicious: int
    benign_count: int
    vacuous_detection: bool
    detection_curve: list  # (epoch, cumulative detection rate)
    training_set_size: int
    onset_epoch: int
    epochs: int
    early_revocations: int

    def __post_init__(self) -> None:
        for rate in (self.detection_rate, self.false_positive_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValidationError(f"rates must be in [0, 1], got {rate}")

    def to_obj(self) -> dict:
        return {
            "detection_rate": self.detection_rate,
            "false_positive_rate": self.false_positive_rate,
            "mean_eval_latency_ms": self.mean_eval_latency_ms,
            "mean_retrain_latency_ms": self.mean_retrain_latency_ms,
            "injected_malicious": self.injected_malicious,
            "benign_count": self.benign_count,
            "vacuous_detection": self.vacuous_detection,
            "detection_curve": [[e, r] for e, r in self.detection_curve],
            "training_set_size": self.training_set_size,
            "onset_epoch": self.onset_epoch,
            "epochs": self.epochs,
            "early_revocations": self.early_revocations,
        }


def drive_trace(
    manager: SecurityManager,
    events: Sequence[NodeEvent],
    node_count: int,
    calibration_epochs: int,
    actor: str = "auto-policy",
) -> list:
    """Run the manager over an epoch-major trace, recalibrating every
    registered node's matrix once the calibration window has been observed."""
    outcomes = []
    for i, event in enumerate(events):
        epoch = i // node_count
        if epoch == calibration_epochs and i % node_count == 0:
            at = event.received_at - 1e-3
            for digest in manager.store.registered_ids():
                if manager.recent_activity.get(digest):
                    manager.apply_admin_action(
                        AdminAction(
                            kind=AdminActionKind.RECALIBRATE,
                            actor=actor,
                            issued_at=at,
                            target=digest,
                        )
                    )
        outcomes.append(manager.handle_event(event))
    return outcomes


def run_detection_experiment(
    config: SimConfig,
    system: SystemConfig,
    training_set_size: int,
) -> SimMetrics:
    """Admit every node, calibrate, accumulate `training_set_size` patterns,
    then inject deviations and measure node-level detection and FPR."""
    if training_set_size < 1:
        raise ValidationError("training_set_size must be >= 1")
    onset = config.calibration_epochs + training_set_size
    if config.epochs <= onset:
        raise ValidationError(
            f"epochs ({config.epochs}) must exceed calibration + training_set_size ({onset})"
        )
    config = copy.deepcopy(config)
    config.deviation.onset_epoch = onset
    system = copy.deepcopy(system)

    roster = node_roster(config, system)
    events = generate_trace(config, system)
    manager = SecurityManager(
        config=system, admin_policy=AdminPolicy(mode=AdmissionMode.AUTO_APPROVE)
    )
    outcomes = drive_trace(manager, events, config.node_count, config.calibration_epochs)

    by_digest = {n.digest: n for n in roster}
    # "injected" means the node actually emits shifted windows: a zero shift
    # (or zero profile noise, since shifts are sigma-scaled) injects nothing
    def actually_shifted(n) -> bool:
        return (
            n.malicious
            and n.onset_epoch < config.epochs
            and config.deviation.shift_sigmas > 0
            and max(n.stds.values()) > 0
        )

    malicious = {n.digest for n in roster if actually_shifted(n)}
    benign = {n.digest for n in roster if not n.malicious}
    revoked_at: dict[str, int] = {}
    for i, outcome in enumerate(outcomes):
        if outcome.path_taken is EventPath.AUTHORIZED_REVOKED:
            revoked_at[outcome.node_id] = i // config.node_count

    detected = {
        d for d, ep in revoked_at.items() if d in malicious and ep >= by_digest[d].onset_epoch
    }
    early = sum(1 for d, ep in revoked_at.items() if d in malicious and ep < by_digest[d].onset_epoch)
    false_pos = {d for d in revoked_at if d in benign}

    vacuous = len(malicious) == 0
    detection_rate = 1.0 if vacuous else len(detected) / len(malicious)
    fpr = 0.0 if not benign else len(false_pos) / len(benign)

    curve = []
    for epoch in range(onset, config.epochs):
        if vacuous:
            curve.append((epoch, 1.0))
        else:
            cum = sum(
                1
                for d in detected
                if revoked_at[d] <= epoch
            )
            curve.append((epoch, cum / len(malicious)))

    timings = manager.runtime.timings
    cached = [s for s, retrained in timings if not retrained]
    trained = [s for s, retrained in timings if retrained]
    return SimMetrics(
        detection_rate=detection_rate,
        false_positive_rate=fpr,
        mean_eval_latency_ms=float(np.mean(cached) * 1e3) if cached else 0.0,
        mean_retrain_latency_ms=float(np.mean(trained) * 1e3) if trained else 0.0,
        injected_malicious=len(malicious),
        benign_count=len(benign),
        vacuous_detection=vacuous,
        detection_curve=curve,
        training_set_size=training_set_size,
        onset_epoch=onset,
        epochs=config.epochs,
        early_revocations=early,
    )


# ---------- training-error sweep harnesses ----------

def _synthetic_task(
    input_size: int, pattern_size: int, sample_count: int, seed: int
) -> list[Sample]:
    """Fixed smooth mapping task: targets come from a frozen random teacher net."""
    rng = np.random.default_rng((seed, 101, input_size))
    teacher = NetworkWeights(
        [rng.uniform(-2, 2, (8, input_size)), rng.uniform(-2, 2, (pattern_size, 8))],
        [rng.uniform(-0.5, 0.5, 8), rng.uniform(-0.5, 0.5, pattern_size)],
    )
    samples = []
    for _ in range(sample_count):
        x = rng.uniform(0.0, 1.0, input_size)
        samples.append(Sample(x, forward(teacher, x)))
    return samples


def sweep_input_neurons(
    d_values: Sequence[int],
    seed: int = 0,
    hidden: int = 12,
    pattern_size: int = 8,
    iterations: int = 2000,
    learning_rate: float = 0.2,
    sample_count: int = 24,
) -> list[dict]:
    """Final training error of the generator for each input-layer width."""
    if not d_values:
        raise ValidationError("d_values must not be empty")
    rows = []
    for d in d_values:
        cfg = TrainingConfig(
            learning_rate=learning_rate, iterations=iterations, seed=seed, init_scale=0.5
        )
        data = _synthetic_task(int(d), pattern_size, sample_count, seed)
        net = init_weights(LayerSpec((int(d), hidden, pattern_size)), cfg)
        _, history = train_backprop(net, data, cfg)
        rows.append({"input_neurons": int(d), "final_mse": history[-1]})
    return rows


def sweep_lr_iterations(
    learning_rates: Sequence[float],
    iteration_counts: Sequence[int],
    seed: int = 0,
    input_size: int = 20,
    hidden: int = 12,
    pattern_size: int = 8,
    sample_count: int = 24,
) -> list[dict]:
    """Full factorial (learning rate x iteration count) grid of final errors.

    Per-sample SGD in fixed order makes training-by-k-passes a prefix of
    training-by-n-passes (k <= n), so each learning rate trains once to the
    largest requested count and the grid reads errors off the pass history.
    """
    if not learning_rates or not iteration_counts:
        raise ValidationError("learning_rates and iteration_counts must not be empty")
    counts = [int(c) for c in iteration_counts]
    if min(counts) < 1:
        raise ValidationError("iteration counts must be >= 1")
    rows = []
    data = _synthetic_task(input_size, pattern_size, sample_count, seed)
    for lr in learning_rates:
        cfg = TrainingConfig(
            learning_rate=float(lr), iterations=max(counts), seed=seed, init_scale=0.5
        )
        net = init_weights(LayerSpec((input_size, hidden, pattern_size)), cfg)
        _, history = train_backprop(net, data, cfg)
        for count in counts:
            rows.append(
                {
                    "learning_rate": float(lr),
                    "iterations": count,
                    "final_mse": history[count - 1],
                }
            )
    return rows
