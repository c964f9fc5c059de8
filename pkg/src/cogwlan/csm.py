"""The security manager's event loop.

Every node event is classified by fingerprint into new / authorized /
unauthorized and takes exactly one of six paths: new nodes are queued for
admin discretion (or resolved by a headless admission policy), authorized
nodes have their current window scored against their own pattern history
(normal windows extend the history, deviated ones trigger an immediate
revocation that purges the node's matrix and history and moves its
fingerprint to the unregistered section), and unauthorized nodes are
blocked without touching any state.

Every handled event and every successful admin action appends one audit
record carrying its full input, so replaying a log against an empty manager
reproduces the repository state byte for byte.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, TextIO

from .behavior import NodeActivity, calibrate_om, generate_pattern, usage_summary
from .config import SystemConfig
from .errors import NotFoundError, ValidationError
from .policy import Decision, DeviationReport, PolicyRuntime, conservative_om
from .store import NodeStatus, NodeStore, PadlFingerprint

AUDIT_FORMAT = "cogwlan-audit/1"


class EventPath(str, Enum):
    NEW_PENDING = "new_pending"
    NEW_AUTO_APPROVED = "new_auto_approved"
    NEW_AUTO_DENIED = "new_auto_denied"
    AUTHORIZED_NORMAL = "authorized_normal"
    AUTHORIZED_REVOKED = "authorized_revoked"
    UNAUTHORIZED_BLOCKED = "unauthorized_blocked"


@dataclass
class NodeEvent:
    """One arrival: the node's fingerprint plus its activity window."""

    padl: PadlFingerprint
    activity: NodeActivity
    received_at: float

    def __post_init__(self) -> None:
        if self.activity.node_id != self.padl.canonical_digest:
            raise ValidationError("activity node_id must equal the fingerprint digest")

    def to_obj(self) -> dict:
        return {
            "padl": self.padl.to_obj(),
            "activity": self.activity.to_obj(),
            "received_at": self.received_at,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "NodeEvent":
        return cls(
            padl=PadlFingerprint.from_obj(obj["padl"]),
            activity=NodeActivity.from_obj(obj["activity"]),
            received_at=obj["received_at"],
        )


class AdminActionKind(str, Enum):
    APPROVE_NEW = "approve_new"
    DENY_NEW = "deny_new"
    SET_THETA = "set_theta"
    OVERRIDE_REVOKE = "override_revoke"
    READMIT_NODE = "readmit_node"
    RECALIBRATE = "recalibrate"


_NODE_SCOPED = {
    AdminActionKind.APPROVE_NEW,
    AdminActionKind.DENY_NEW,
    AdminActionKind.OVERRIDE_REVOKE,
    AdminActionKind.READMIT_NODE,
    AdminActionKind.RECALIBRATE,
}


@dataclass
class AdminAction:
    kind: AdminActionKind
    actor: str
    issued_at: float
    target: Optional[str] = None
    theta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind in _NODE_SCOPED and not self.target:
            raise ValidationError(f"{self.kind.value} requires a target node")
        if self.kind is AdminActionKind.SET_THETA:
            if self.theta is None:
                raise ValidationError("set_theta requires a theta value")
            if not (0.0 < self.theta < 1.0):
                raise ValidationError(f"theta must be in (0, 1), got {self.theta}")

    def to_obj(self) -> dict:
        return {
            "kind": self.kind.value,
            "actor": self.actor,
            "issued_at": self.issued_at,
            "target": self.target,
            "theta": self.theta,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AdminAction":
        return cls(
            kind=AdminActionKind(obj["kind"]),
            actor=obj["actor"],
            issued_at=obj["issued_at"],
            target=obj.get("target"),
            theta=obj.get("theta"),
        )


@dataclass
class EventOutcome:
    node_id: str
    path_taken: EventPath
    deviation: Optional[DeviationReport]
    audit_seq: int


class AdmissionMode(str, Enum):
    INTERACTIVE = "interactive"
    AUTO_APPROVE = "auto_approve"
    AUTO_DENY = "auto_deny"
    SCRIPTED = "scripted"


@dataclass
class AdminPolicy:
    """How new fingerprints are resolved when no human is in the loop."""

    mode: AdmissionMode = AdmissionMode.INTERACTIVE
    rules: dict[str, str] = field(default_factory=dict)
    default: str = "pending"

    def decide(self, digest: str) -> str:
        if self.mode is AdmissionMode.INTERACTIVE:
            return "pending"
        if self.mode is AdmissionMode.AUTO_APPROVE:
            return "approve"
        if self.mode is AdmissionMode.AUTO_DENY:
            return "deny"
        return self.rules.get(digest, self.default)

    def to_obj(self) -> dict:
        return {"mode": self.mode.value, "rules": dict(self.rules), "default": self.default}

    @classmethod
    def from_obj(cls, obj: dict) -> "AdminPolicy":
        return cls(
            mode=AdmissionMode(obj["mode"]),
            rules=dict(obj.get("rules", {})),
            default=obj.get("default", "pending"),
        )


@dataclass
class AuditRecord:
    seq: int
    kind: str  # "event" or "admin"
    at: float
    payload: dict
    result: dict

    def to_obj(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "at": self.at,
            "payload": self.payload,
            "result": self.result,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AuditRecord":
        return cls(
            seq=obj["seq"],
            kind=obj["kind"],
            at=obj["at"],
            payload=obj["payload"],
            result=obj["result"],
        )


class SecurityManager:
    """Executes the admission/evaluation loop and mediates admin actions.

    All state-bearing timestamps come from the events and actions themselves,
    never from the wall clock, so a replayed log reproduces identical state.
    """

    def __init__(
        self,
        config: SystemConfig,
        store: NodeStore | None = None,
        admin_policy: AdminPolicy | None = None,
        audit_sink: TextIO | None = None,
    ):
        self.config = config
        self.store = store if store is not None else NodeStore(history_capacity=config.history_capacity)
        self.admin_policy = admin_policy if admin_policy is not None else AdminPolicy()
        self.runtime = PolicyRuntime()
        self.pending: dict[str, NodeEvent] = {}
        self.recent_activity: dict[str, deque] = {}
        self.last_report: dict[str, DeviationReport] = {}
        self.audit_records: list[AuditRecord] = []
        self._audit_sink = audit_sink
        self._seq = 0

    # ---------- audit ----------

    def _audit(self, kind: str, at: float, payload: dict, result: dict) -> int:
        self._seq += 1
        record = AuditRecord(seq=self._seq, kind=kind, at=at, payload=payload, result=result)
        self.audit_records.append(record)
        if self._audit_sink is not None:
            self._audit_sink.write(json.dumps(record.to_obj(), sort_keys=True) + "\n")
            self._audit_sink.flush()
        return self._seq

    def audit_log(self, since_seq: int = 0) -> list[AuditRecord]:
        """All records with seq greater than since_seq, in order."""
        return [r for r in self.audit_records if r.seq > since_seq]

    # ---------- the event loop ----------

    def handle_event(self, event: NodeEvent) -> EventOutcome:
        digest = event.padl.canonical_digest
        status = self.store.classify_padl(event.padl)
        report: Optional[DeviationReport] = None

        if status is NodeStatus.NEW:
            verdict = self.admin_policy.decide(digest)
            if verdict == "approve":
                self._admit(event.padl, issuer="auto-policy", at=event.received_at)
                path = EventPath.NEW_AUTO_APPROVED
            elif verdict == "deny":
                self.store.deny_node(event.padl, at=event.received_at)
                path = EventPath.NEW_AUTO_DENIED
            else:
                self.pending[digest] = event
                path = EventPath.NEW_PENDING
        elif status is NodeStatus.AUTHORIZED:
            om = self.store.get_om(digest)
            bh = generate_pattern(om, event.activity, self.config.norms)
            history = self.store.training_set(digest).as_list()
            report = self.runtime.evaluate_for_node(digest, bh, history, self.config.policy)
            self.last_report[digest] = report
            if report.decision is Decision.NORMAL:
                self.store.append_pattern(digest, bh)
                ring = self.recent_activity.setdefault(
                    digest, deque(maxlen=self.config.activity_window)
                )
                ring.append(event.activity)
                path = EventPath.AUTHORIZED_NORMAL
            else:
                self._quarantine(digest, at=event.received_at)
                path = EventPath.AUTHORIZED_REVOKED
        else:
            path = EventPath.UNAUTHORIZED_BLOCKED

        result = {"path": path.value, "deviation": report.to_obj() if report else None}
        seq = self._audit("event", event.received_at, event.to_obj(), result)
        return EventOutcome(node_id=digest, path_taken=path, deviation=report, audit_seq=seq)

    def _admit(self, padl: PadlFingerprint, issuer: str, at: float) -> None:
        om = conservative_om(
            self.config.generator_spec,
            issued_at=at,
            issuer=issuer,
            table_version=self.config.norms.version,
        )
        self.store.register_node(padl, om, at=at)

    def _quarantine(self, digest: str, at: float) -> None:
        # the last deviation report survives quarantine so operators can see
        # what triggered it; readmission starts the node from a clean slate
        self.store.revoke_node(digest, at=at)
        self.runtime.drop(digest)
        self.recent_activity.pop(digest, None)

    # ---------- admin actions ----------

    def apply_admin_action(self, action: AdminAction) -> None:
        kind = action.kind
        if kind is AdminActionKind.APPROVE_NEW:
            event = self.pending.pop(action.target, None)
            if event is None:
                raise NotFoundError(f"no pending node {action.target}")
            self._admit(event.padl, issuer=action.actor, at=action.issued_at)
        elif kind is AdminActionKind.DENY_NEW:
            event = self.pending.pop(action.target, None)
            if event is None:
                raise NotFoundError(f"no pending node {action.target}")
            self.store.deny_node(event.padl, at=action.issued_at)
        elif kind is AdminActionKind.SET_THETA:
            self.config.policy.theta = action.theta
        elif kind is AdminActionKind.OVERRIDE_REVOKE:
            self._quarantine(action.target, at=action.issued_at)
        elif kind is AdminActionKind.READMIT_NODE:
            om = conservative_om(
                self.config.generator_spec,
                issued_at=action.issued_at,
                issuer=action.actor,
                table_version=self.config.norms.version,
            )
            self.store.readmit_node(action.target, om, at=action.issued_at)
            self.last_report.pop(action.target, None)
        elif kind is AdminActionKind.RECALIBRATE:
            self._recalibrate(action)
        else:  # pragma: no cover
            raise ValidationError(f"unsupported action kind {kind}")
        self._audit("admin", action.issued_at, action.to_obj(), {"ok": True})

    def _recalibrate(self, action: AdminAction) -> None:
        digest = action.target
        if self.store.classify_digest(digest) is not NodeStatus.AUTHORIZED:
            raise NotFoundError(f"node {digest} is not registered")
        ring = self.recent_activity.get(digest)
        if not ring:
            raise ValidationError(f"node {digest} has no recent activity to calibrate from")
        activities = list(ring)
        targets = [usage_summary(a, self.config.norms) for a in activities]
        om = calibrate_om(
            activities,
            targets,
            self.config.generator_training,
            self.config.generator_spec,
            self.config.norms,
            issuer=action.actor,
        )
        self.store.put_om(digest, om)
        # patterns produced by the old matrix are no longer comparable
        self.store.clear_history(digest)
        self.runtime.drop(digest)
        self.last_report.pop(digest, None)

    # ---------- snapshots & replay ----------

    def snapshot_bytes(self) -> bytes:
        return self.store.snapshot_bytes()


def replay_records(
    records: Iterable[AuditRecord],
    config: SystemConfig,
    admin_policy: AdminPolicy,
) -> SecurityManager:
    """Rebuild a manager from scratch by re-executing an audit log.

    Raises ValidationError if any replayed event resolves to a different path
    than the recorded one (the log and code have diverged).
    """
    manager = SecurityManager(config=config, admin_policy=admin_policy)
    for record in records:
        if record.kind == "event":
            outcome = manager.handle_event(NodeEvent.from_obj(record.payload))
            recorded = record.result.get("path")
            if outcome.path_taken.value != recorded:
                raise ValidationError(
                    f"replay diverged at seq {record.seq}: "
                    f"recorded {recorded}, got {outcome.path_taken.value}"
                )
        elif record.kind == "admin":
            manager.apply_admin_action(AdminAction.from_obj(record.payload))
        else:
            raise ValidationError(f"unknown audit record kind {record.kind!r}")
    return manager


def write_audit_header(sink: TextIO, config: SystemConfig, admin_policy: AdminPolicy) -> None:
    header = {
        "format": AUDIT_FORMAT,
        "config": config.to_obj(),
        "admin_policy": admin_policy.to_obj(),
    }
    sink.write(json.dumps(header, sort_keys=True) + "\n")
    sink.flush()


def read_audit_log(path) -> tuple[SystemConfig, AdminPolicy, list[AuditRecord]]:
    """Parse an exported audit log; a torn trailing line is discarded."""
    from .config import SystemConfig as _SystemConfig

    records: list[AuditRecord] = []
    header = None
    with open(path, "rb") as fh:
        for raw in fh:
            if not raw.endswith(b"\n"):
                break
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                break
            if header is None:
                if obj.get("format") != AUDIT_FORMAT:
                    raise ValidationError(f"unsupported audit format {obj.get('format')!r}")
                header = obj
            else:
                records.append(AuditRecord.from_obj(obj))
    if header is None:
        raise ValidationError(f"audit log {path} has no header")
    return (
        _SystemConfig.from_obj(header["config"]),
        AdminPolicy.from_obj(header["admin_policy"]),
        records,
    )
