"""The security manager's three stores behind one facade: the fingerprint
repository (registered/unregistered sections), the operational-matrix
repository, and the behavior-pattern repository.

Node lifecycle transitions that touch several stores (register, revoke,
readmit) are journaled as a single record before being applied, so an
interrupted transition is either fully present or fully absent after
recovery. A periodic snapshot plus journal truncation keeps recovery cheap;
snapshot bytes are canonical (sorted keys, shortest round-trip floats) so
equal states serialize identically.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .behavior import BehaviorPattern, OperationalMatrix
from .errors import (
    ConflictError,
    NotFoundError,
    PersistenceError,
    StructuralError,
    ValidationError,
)
from .mlp import NetworkWeights

STORE_FORMAT = "cogwlan-store/1"
DEFAULT_HISTORY_CAPACITY = 256

AttrValue = Union[str, float, int]


@dataclass(frozen=True)
class PadlFingerprint:
    """Physical/radio-layer identity of a terminal.

    Attributes are an ordered list of (name, value) pairs; the digest is a
    pure function of the canonically ordered attributes, so logically equal
    fingerprints always collide on the same identity.
    """

    attributes: tuple[tuple[str, AttrValue], ...]

    def __post_init__(self) -> None:
        if not self.attributes:
            raise ValidationError("fingerprint needs at least one attribute")
        normalized = []
        for name, value in self.attributes:
            if not isinstance(name, str) or not name:
                raise ValidationError("attribute names must be non-empty strings")
            if isinstance(value, bool) or not isinstance(value, (str, int, float)):
                raise ValidationError(f"attribute {name!r}: values must be strings or numbers")
            if isinstance(value, float) and not np.isfinite(value):
                raise ValidationError(f"attribute {name!r}: numeric values must be finite")
            normalized.append((name, value))
        object.__setattr__(self, "attributes", tuple(normalized))

    @property
    def canonical_digest(self) -> str:
        hasher = hashlib.sha256()
        for name, value in sorted(self.attributes):
            rendered = repr(float(value)) if isinstance(value, (int, float)) else "s" + value
            hasher.update(f"{name}\x1f{rendered}\x1e".encode())
        return hasher.hexdigest()

    def to_obj(self) -> dict:
        return {"attributes": [[n, v] for n, v in self.attributes]}

    @classmethod
    def from_obj(cls, obj: dict) -> "PadlFingerprint":
        return cls(attributes=tuple((n, v) for n, v in obj["attributes"]))


class NodeStatus(str, Enum):
    NEW = "new"
    AUTHORIZED = "authorized"
    UNAUTHORIZED = "unauthorized"


@dataclass
class NodeRecord:
    node_id: str
    padl: PadlFingerprint
    status: NodeStatus
    admitted_at: float

    def __post_init__(self) -> None:
        if self.status is NodeStatus.NEW:
            raise ValidationError("stored records must be authorized or unauthorized")
        if self.node_id != self.padl.canonical_digest:
            raise ValidationError("node_id must equal the fingerprint digest")


@dataclass
class PatternHistory:
    """Capacity-bounded, chronologically ordered pattern ring for one node."""

    node_id: str
    capacity: int = DEFAULT_HISTORY_CAPACITY
    patterns: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValidationError("history capacity must be positive")
        self.patterns = deque(self.patterns, maxlen=self.capacity)

    def append(self, pattern: BehaviorPattern) -> None:
        if self.patterns and pattern.produced_at < self.patterns[-1].produced_at:
            raise ValidationError(
                f"pattern at {pattern.produced_at} is older than newest stored "
                f"({self.patterns[-1].produced_at})"
            )
        self.patterns.append(pattern)

    def as_list(self) -> list[BehaviorPattern]:
        return list(self.patterns)

    def __len__(self) -> int:
        return len(self.patterns)


def _om_to_obj(om: OperationalMatrix) -> dict:
    return {
        "net": om.generator_net.to_obj(),
        "issued_at": om.issued_at,
        "issuer": om.issuer,
        "table_version": om.table_version,
    }


def _om_from_obj(obj: dict) -> OperationalMatrix:
    return OperationalMatrix(
        generator_net=NetworkWeights.from_obj(obj["net"]),
        issued_at=obj["issued_at"],
        issuer=obj["issuer"],
        table_version=obj["table_version"],
    )


def _pattern_to_obj(p: BehaviorPattern) -> dict:
    return {"values": p.values.tolist(), "produced_at": p.produced_at}


def _pattern_from_obj(obj: dict) -> BehaviorPattern:
    return BehaviorPattern(values=np.asarray(obj["values"]), produced_at=obj["produced_at"])


class NodeStore:
    """Single logical owner of the three per-node repositories."""

    def __init__(self, path: str | Path | None = None, history_capacity: int = DEFAULT_HISTORY_CAPACITY):
        if history_capacity < 1:
            raise ValidationError("history capacity must be positive")
        self.history_capacity = history_capacity
        self._registered: dict[str, NodeRecord] = {}
        self._unregistered: dict[str, NodeRecord] = {}
        self._oms: dict[str, OperationalMatrix] = {}
        self._histories: dict[str, PatternHistory] = {}
        self._path = Path(path) if path is not None else None
        self._journal = None
        self._journal_gen = 0
        if self._path is not None:
            self._recover()

    # ---------- persistence ----------

    def _snapshot_path(self) -> Path:
        return self._path / "snapshot.json"

    def _journal_path(self, gen: int) -> Path:
        return self._path / f"journal-{gen:06d}.jsonl"

    def _recover(self) -> None:
        self._path.mkdir(parents=True, exist_ok=True)
        snap = self._snapshot_path()
        if snap.exists():
            try:
                obj = json.loads(snap.read_text())
            except json.JSONDecodeError as exc:
                raise PersistenceError(f"corrupt snapshot {snap}: {exc}") from exc
            self._load_snapshot_obj(obj)
            self._journal_gen = int(obj.get("journal_gen", 0))
        jpath = self._journal_path(self._journal_gen)
        if jpath.exists():
            good_offset = 0
            with open(jpath, "rb") as fh:
                for raw in fh:
                    if not raw.endswith(b"\n"):
                        break  # torn trailing write from an interrupted mutation
                    try:
                        record = json.loads(raw)
                    except json.JSONDecodeError:
                        break
                    self._apply(record)
                    good_offset += len(raw)
            size = jpath.stat().st_size
            if size != good_offset:
                with open(jpath, "r+b") as fh:
                    fh.truncate(good_offset)
        self._journal = open(jpath, "a", encoding="utf-8")

    def _journal_append(self, record: dict) -> None:
        if self._journal is None:
            return
        line = json.dumps(record, sort_keys=True) + "\n"
        try:
            self._journal.write(line)
            self._journal.flush()
            os.fsync(self._journal.fileno())
        except OSError as exc:
            raise PersistenceError(f"journal append failed: {exc}") from exc

    def checkpoint(self) -> None:
        """Write a snapshot and start a fresh journal generation."""
        if self._path is None:
            return
        next_gen = self._journal_gen + 1
        obj = self._snapshot_obj()
        obj["journal_gen"] = next_gen
        tmp = self._snapshot_path().with_suffix(".json.tmp")
        try:
            tmp.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))
            os.replace(tmp, self._snapshot_path())
        except OSError as exc:
            raise PersistenceError(f"snapshot write failed: {exc}") from exc
        old = self._journal
        old_path = self._journal_path(self._journal_gen)
        self._journal_gen = next_gen
        self._journal = open(self._journal_path(next_gen), "a", encoding="utf-8")
        if old is not None:
            old.close()
            old_path.unlink(missing_ok=True)

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    def _snapshot_obj(self) -> dict:
        def record_obj(rec: NodeRecord) -> dict:
            return {
                "padl": rec.padl.to_obj(),
                "status": rec.status.value,
                "admitted_at": rec.admitted_at,
            }

        return {
            "format": STORE_FORMAT,
            "registered": {nid: record_obj(r) for nid, r in self._registered.items()},
            "unregistered": {nid: record_obj(r) for nid, r in self._unregistered.items()},
            "oms": {nid: _om_to_obj(om) for nid, om in self._oms.items()},
            "histories": {
                nid: {
                    "capacity": h.capacity,
                    "patterns": [_pattern_to_obj(p) for p in h.patterns],
                }
                for nid, h in self._histories.items()
            },
        }

    def _load_snapshot_obj(self, obj: dict) -> None:
        if obj.get("format") != STORE_FORMAT:
            raise PersistenceError(f"unsupported store format {obj.get('format')!r}")
        for section, target, status in (
            ("registered", self._registered, NodeStatus.AUTHORIZED),
            ("unregistered", self._unregistered, NodeStatus.UNAUTHORIZED),
        ):
            for nid, rec in obj[section].items():
                target[nid] = NodeRecord(
                    node_id=nid,
                    padl=PadlFingerprint.from_obj(rec["padl"]),
                    status=status,
                    admitted_at=rec["admitted_at"],
                )
        for nid, om_obj in obj["oms"].items():
            self._oms[nid] = _om_from_obj(om_obj)
        for nid, h_obj in obj["histories"].items():
            hist = PatternHistory(node_id=nid, capacity=h_obj["capacity"])
            for p_obj in h_obj["patterns"]:
                hist.append(_pattern_from_obj(p_obj))
            self._histories[nid] = hist

    def snapshot_bytes(self) -> bytes:
        """Canonical byte serialization of the full store state."""
        return json.dumps(self._snapshot_obj(), sort_keys=True, separators=(",", ":")).encode()

    # ---------- journal application (shared by live path and recovery) ----------

    def _apply(self, record: dict) -> None:
        op = record["op"]
        nid = record["digest"]
        if op == "register":
            padl = PadlFingerprint.from_obj(record["padl"])
            self._registered[nid] = NodeRecord(nid, padl, NodeStatus.AUTHORIZED, record["at"])
            self._oms[nid] = _om_from_obj(record["om"])
            self._histories[nid] = PatternHistory(node_id=nid, capacity=self.history_capacity)
        elif op == "deny":
            padl = PadlFingerprint.from_obj(record["padl"])
            self._unregistered[nid] = NodeRecord(nid, padl, NodeStatus.UNAUTHORIZED, record["at"])
        elif op == "revoke":
            rec = self._registered.pop(nid)
            self._oms.pop(nid, None)
            self._histories.pop(nid, None)
            self._unregistered[nid] = NodeRecord(
                nid, rec.padl, NodeStatus.UNAUTHORIZED, record["at"]
            )
        elif op == "readmit":
            rec = self._unregistered.pop(nid)
            self._registered[nid] = NodeRecord(nid, rec.padl, NodeStatus.AUTHORIZED, record["at"])
            self._oms[nid] = _om_from_obj(record["om"])
            self._histories[nid] = PatternHistory(node_id=nid, capacity=self.history_capacity)
        elif op == "put_om":
            self._oms[nid] = _om_from_obj(record["om"])
        elif op == "append_pattern":
            self._histories[nid].append(_pattern_from_obj(record["pattern"]))
        elif op == "clear_history":
            self._histories[nid] = PatternHistory(node_id=nid, capacity=self.history_capacity)
        else:
            raise PersistenceError(f"unknown journal op {op!r}")

    def _commit(self, record: dict) -> None:
        if self._path is not None and self._journal is None:
            raise PersistenceError("store is closed")
        self._journal_append(record)
        self._apply(record)

    # ---------- queries ----------

    def classify_padl(self, padl: PadlFingerprint) -> NodeStatus:
        """Three-way admission classification by fingerprint digest."""
        return self.classify_digest(padl.canonical_digest)

    def classify_digest(self, digest: str) -> NodeStatus:
        if digest in self._registered:
            return NodeStatus.AUTHORIZED
        if digest in self._unregistered:
            return NodeStatus.UNAUTHORIZED
        return NodeStatus.NEW

    def get_record(self, node_id: str) -> NodeRecord:
        rec = self._registered.get(node_id) or self._unregistered.get(node_id)
        if rec is None:
            raise NotFoundError(f"unknown node {node_id}")
        return rec

    def registered_ids(self) -> list[str]:
        return list(self._registered)

    def unregistered_ids(self) -> list[str]:
        return list(self._unregistered)

    def records(self) -> Iterable[NodeRecord]:
        yield from self._registered.values()
        yield from self._unregistered.values()

    def get_om(self, node_id: str) -> OperationalMatrix:
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        return self._oms[node_id]

    def training_set(self, node_id: str) -> PatternHistory:
        """The node's full current pattern history, oldest first."""
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        hist = self._histories[node_id]
        return PatternHistory(node_id=node_id, capacity=hist.capacity, patterns=hist.patterns)

    # ---------- mutations ----------

    def register_node(self, padl: PadlFingerprint, om: OperationalMatrix, at: float) -> NodeRecord:
        """Admit a new fingerprint: one atomic transition across all three stores."""
        digest = padl.canonical_digest
        if self.classify_padl(padl) is not NodeStatus.NEW:
            raise ConflictError(f"fingerprint {digest} is already known")
        self._commit({"op": "register", "digest": digest, "padl": padl.to_obj(),
                      "om": _om_to_obj(om), "at": at})
        self._check_node(digest)
        return self._registered[digest]

    def deny_node(self, padl: PadlFingerprint, at: float) -> NodeRecord:
        """Place a new fingerprint directly in the unregistered section."""
        digest = padl.canonical_digest
        if self.classify_padl(padl) is not NodeStatus.NEW:
            raise ConflictError(f"fingerprint {digest} is already known")
        self._commit({"op": "deny", "digest": digest, "padl": padl.to_obj(), "at": at})
        self._check_node(digest)
        return self._unregistered[digest]

    def revoke_node(self, node_id: str, at: float) -> None:
        """Purge the node's matrix and history, then move its fingerprint to unregistered."""
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        self._commit({"op": "revoke", "digest": node_id, "at": at})
        self._check_node(node_id)

    def readmit_node(self, node_id: str, om: OperationalMatrix, at: float) -> NodeRecord:
        """Explicit admin inverse of revocation: fresh matrix, empty history."""
        if node_id in self._registered:
            raise ValidationError(f"node {node_id} is already registered")
        if node_id not in self._unregistered:
            raise NotFoundError(f"unknown node {node_id}")
        self._commit({"op": "readmit", "digest": node_id,
                      "om": _om_to_obj(om), "at": at})
        self._check_node(node_id)
        return self._registered[node_id]

    def put_om(self, node_id: str, om: OperationalMatrix) -> None:
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        self._commit({"op": "put_om", "digest": node_id, "om": _om_to_obj(om)})

    def append_pattern(self, node_id: str, pattern: BehaviorPattern) -> None:
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        hist = self._histories[node_id]
        if hist.patterns and pattern.produced_at < hist.patterns[-1].produced_at:
            raise ValidationError("patterns must be appended in chronological order")
        self._commit({"op": "append_pattern", "digest": node_id,
                      "pattern": _pattern_to_obj(pattern)})

    def clear_history(self, node_id: str) -> None:
        if node_id not in self._registered:
            raise NotFoundError(f"node {node_id} is not registered")
        self._commit({"op": "clear_history", "digest": node_id})

    # ---------- invariants ----------

    def _check_node(self, digest: str) -> None:
        in_reg = digest in self._registered
        in_unreg = digest in self._unregistered
        if in_reg and in_unreg:
            raise StructuralError(f"digest {digest} present in both sections")
        if (digest in self._oms or digest in self._histories) and not in_reg:
            raise StructuralError(f"derived data exists for non-registered digest {digest}")

    def check_invariants(self) -> None:
        """Full-store consistency check: section exclusivity and referential integrity."""
        overlap = self._registered.keys() & self._unregistered.keys()
        if overlap:
            raise StructuralError(f"digests in both sections: {sorted(overlap)}")
        for nid in self._oms:
            if nid not in self._registered:
                raise StructuralError(f"operational matrix for non-registered {nid}")
        for nid, hist in self._histories.items():
            if nid not in self._registered:
                raise StructuralError(f"pattern history for non-registered {nid}")
            times = [p.produced_at for p in hist.patterns]
            if times != sorted(times):
                raise StructuralError(f"history for {nid} is not chronological")
            if len(hist) > hist.capacity:
                raise StructuralError(f"history for {nid} exceeds capacity")
        for nid in self._registered:
            if nid not in self._oms or nid not in self._histories:
                raise StructuralError(f"registered node {nid} lacks matrix or history")
