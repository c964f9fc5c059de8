"""Policy and configuration assignment: deviation scoring against the
admin-set threshold, per-node detector training, and conservative matrix
issuing for newly admitted nodes.

The detector is a two-hidden-layer feedforward net trained as an
auto-associator on the node's own pattern history; the deviation score of a
fresh pattern is its mean absolute reconstruction error. Below `min_history`
patterns the net cannot be trained meaningfully, so scoring falls back to
the distance from the history mean (zero for an empty history).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .behavior import BehaviorPattern, OperationalMatrix
from .errors import StructuralError, ValidationError
from .mlp import (
    LayerSpec,
    NetworkWeights,
    Sample,
    TrainingConfig,
    forward,
    init_weights,
    train_backprop,
    zero_weights,
)


class Decision(str, Enum):
    NORMAL = "normal"
    DEVIATED = "deviated"


@dataclass
class PolicyConfig:
    """Deviation threshold, detector architecture and training settings."""

    theta: float = 0.12
    mfnn_spec: LayerSpec = field(default_factory=lambda: LayerSpec((8, 24, 12, 8)))
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(iterations=50))
    min_history: int = 5

    def __post_init__(self) -> None:
        if not (0.0 < self.theta < 1.0):
            raise ValidationError(f"theta must be in (0, 1), got {self.theta}")
        if len(self.mfnn_spec.sizes) != 4:
            raise ValidationError(
                f"detector needs exactly two hidden layers, spec has {len(self.mfnn_spec.sizes) - 2}"
            )
        if self.mfnn_spec.input_size != self.mfnn_spec.output_size:
            raise ValidationError("detector input and output sizes must both equal the pattern size")
        if self.min_history < 1:
            raise ValidationError("min_history must be positive")

    @property
    def pattern_size(self) -> int:
        return self.mfnn_spec.input_size


@dataclass
class DeviationReport:
    """Outcome of one behavior evaluation; decision is Deviated iff score >= theta."""

    node_id: str
    score: float
    theta_used: float
    decision: Decision
    history_len: int
    scored_by: str  # "neural" or "bootstrap"

    def __post_init__(self) -> None:
        if (self.decision is Decision.DEVIATED) != (self.score >= self.theta_used):
            raise ValidationError("decision inconsistent with score/theta comparison")

    def to_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "score": self.score,
            "theta_used": self.theta_used,
            "decision": self.decision.value,
            "history_len": self.history_len,
            "scored_by": self.scored_by,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "DeviationReport":
        return cls(
            node_id=obj["node_id"],
            score=obj["score"],
            theta_used=obj["theta_used"],
            decision=Decision(obj["decision"]),
            history_len=obj["history_len"],
            scored_by=obj["scored_by"],
        )


def train_policy_net(
    history: Sequence[BehaviorPattern], config: PolicyConfig
) -> Optional[NetworkWeights]:
    """Train the detector on (pattern, pattern) pairs from the node's history.

    Returns None when the history is still below min_history (bootstrap mode);
    that is a signal, not a failure.
    """
    if len(history) < config.min_history:
        return None
    for p in history:
        if p.dimension != config.pattern_size:
            raise StructuralError(
                f"history pattern has {p.dimension} components, detector expects {config.pattern_size}"
            )
    samples = [Sample(p.values, p.values) for p in history]
    net = init_weights(config.mfnn_spec, config.training)
    trained, _ = train_backprop(net, samples, config.training)
    return trained


def deviation_score(mfnn: NetworkWeights, bh: BehaviorPattern) -> float:
    """Mean absolute reconstruction error of the pattern under the detector."""
    spec = mfnn.layer_spec()
    if bh.dimension != spec.input_size:
        raise StructuralError(
            f"pattern has {bh.dimension} components, detector expects {spec.input_size}"
        )
    reconstruction = forward(mfnn, bh.values)
    return float(np.mean(np.abs(bh.values - reconstruction)))


def bootstrap_score(bh: BehaviorPattern, history: Sequence[BehaviorPattern]) -> float:
    """Cold-start score: mean absolute distance from the history mean (0 if empty)."""
    if not history:
        return 0.0
    mean = np.mean(np.stack([p.values for p in history]), axis=0)
    return float(np.mean(np.abs(bh.values - mean)))


def evaluate(
    bh: BehaviorPattern,
    history: Sequence[BehaviorPattern],
    config: PolicyConfig,
    cached_net: Optional[NetworkWeights] = None,
    node_id: str = "",
) -> DeviationReport:
    """Score one pattern against the node's history and decide Normal/Deviated.

    Equality with theta counts as Deviated: Normal requires the variation to
    be strictly below the threshold.
    """
    if bh.dimension != config.pattern_size:
        raise StructuralError(
            f"pattern has {bh.dimension} components, policy expects {config.pattern_size}"
        )
    if len(history) >= config.min_history:
        net = cached_net if cached_net is not None else train_policy_net(history, config)
        score = deviation_score(net, bh)
        scored_by = "neural"
    else:
        score = bootstrap_score(bh, history)
        scored_by = "bootstrap"
    decision = Decision.DEVIATED if score >= config.theta else Decision.NORMAL
    return DeviationReport(
        node_id=node_id,
        score=score,
        theta_used=config.theta,
        decision=decision,
        history_len=len(history),
        scored_by=scored_by,
    )


def conservative_om(
    spec: LayerSpec, issued_at: float = 0.0, issuer: str = "auto-policy", table_version: int = 1
) -> OperationalMatrix:
    """Zero-weight matrix for freshly admitted nodes.

    Every activity maps to the neutral pattern (0.5, ..., 0.5), so a new node
    carries no learned privilege signature until an admin calibrates it.
    """
    return OperationalMatrix(
        generator_net=zero_weights(spec),
        issued_at=issued_at,
        issuer=issuer,
        table_version=table_version,
    )


@dataclass
class _CacheSlot:
    net: NetworkWeights
    trained_at_len: int


class PolicyRuntime:
    """Per-node detector cache with the retrain-on-growth rule.

    The detector for a node is retrained once its history has grown by at
    least min_history patterns since the last training; otherwise the cached
    net is reused, keeping the per-event evaluation cheap.
    """

    def __init__(self) -> None:
        self._cache: dict[str, _CacheSlot] = {}
        self.timings: list[tuple[float, bool]] = []  # (seconds, retrained)

    def evaluate_for_node(
        self,
        node_id: str,
        bh: BehaviorPattern,
        history: Sequence[BehaviorPattern],
        config: PolicyConfig,
    ) -> DeviationReport:
        start = time.perf_counter()
        retrained = False
        cached = None
        if len(history) >= config.min_history:
            slot = self._cache.get(node_id)
            if slot is None or len(history) - slot.trained_at_len >= config.min_history:
                net = train_policy_net(history, config)
                self._cache[node_id] = _CacheSlot(net=net, trained_at_len=len(history))
                retrained = True
                cached = net
            else:
                cached = slot.net
        report = evaluate(bh, history, config, cached_net=cached, node_id=node_id)
        self.timings.append((time.perf_counter() - start, retrained))
        return report

    def drop(self, node_id: str) -> None:
        self._cache.pop(node_id, None)

    def clear_timings(self) -> None:
        self.timings.clear()
