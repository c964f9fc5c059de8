"""HTTP admin API wrapping the security manager.

Every mutation routes through the manager's admin-action or event paths, so
it lands in the audit log with the acting admin identity. Responses carry an
explicit schema version; errors use machine-readable codes. State-bearing
reads and writes share one lock, which serializes mutations per the
manager's single-owner model.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .behavior import NodeActivity, ServiceUsage
from .csm import AdminAction, AdminActionKind, NodeEvent, SecurityManager
from .errors import (
    CogwlanError,
    ConfigError,
    ConflictError,
    NotFoundError,
    StructuralError,
    ValidationError,
)
from .store import NodeStatus, PadlFingerprint

SCHEMA_VERSION = 1


class ActorBody(BaseModel):
    actor: str = "admin"


class ThetaBody(BaseModel):
    theta: float
    actor: str = "admin"


class UsageBody(BaseModel):
    bytes_up: int = 0
    bytes_down: int = 0
    session_count: int = 0


class EventBody(BaseModel):
    attributes: list[tuple[str, Union[float, str]]] = Field(min_length=1)
    services: dict[str, UsageBody] = Field(default_factory=dict)
    failed_auth_count: int = 0
    ap_id: int = 0
    window_start: Optional[float] = None
    window_end: Optional[float] = None


def _ok(payload: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **payload}


def create_app(manager: SecurityManager, console_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="cogwlan admin API", version="1.0")
    lock = threading.Lock()

    @app.exception_handler(NotFoundError)
    async def _not_found(_, exc):
        return JSONResponse(status_code=404, content=_error("not_found", exc))

    @app.exception_handler(ValidationError)
    async def _validation(_, exc):
        return JSONResponse(status_code=400, content=_error("validation_error", exc))

    @app.exception_handler(StructuralError)
    async def _structural(_, exc):
        return JSONResponse(status_code=400, content=_error("structural_error", exc))

    @app.exception_handler(ConflictError)
    async def _conflict(_, exc):
        return JSONResponse(status_code=409, content=_error("conflict", exc))

    @app.exception_handler(ConfigError)
    async def _config(_, exc):
        return JSONResponse(status_code=400, content=_error("config_error", exc))

    @app.exception_handler(CogwlanError)
    async def _internal(_, exc):
        return JSONResponse(status_code=500, content=_error("internal_error", exc))

    def _error(code: str, exc: Exception) -> dict:
        return {"schema_version": SCHEMA_VERSION, "error_code": code, "detail": str(exc)}

    def _admin(kind: AdminActionKind, actor: str, target: str | None = None,
               theta: float | None = None) -> None:
        action = AdminAction(
            kind=kind, actor=actor, issued_at=time.time(), target=target, theta=theta
        )
        manager.apply_admin_action(action)

    @app.get("/api/v1/health")
    def health():
        return _ok({"status": "ok"})

    @app.get("/api/v1/pending")
    def pending():
        with lock:
            rows = [
                {
                    "node_id": digest,
                    "received_at": event.received_at,
                    "attributes": [[n, v] for n, v in event.padl.attributes],
                }
                for digest, event in manager.pending.items()
            ]
        return _ok({"pending": rows})

    @app.post("/api/v1/pending/{node_id}/approve")
    def approve(node_id: str, body: ActorBody):
        with lock:
            _admin(AdminActionKind.APPROVE_NEW, body.actor, target=node_id)
        return _ok({"node_id": node_id, "status": "authorized"})

    @app.post("/api/v1/pending/{node_id}/deny")
    def deny(node_id: str, body: ActorBody):
        with lock:
            _admin(AdminActionKind.DENY_NEW, body.actor, target=node_id)
        return _ok({"node_id": node_id, "status": "unauthorized"})

    @app.get("/api/v1/theta")
    def get_theta():
        with lock:
            return _ok({"theta": manager.config.policy.theta})

    @app.put("/api/v1/theta")
    def put_theta(body: ThetaBody):
        with lock:
            _admin(AdminActionKind.SET_THETA, body.actor, theta=body.theta)
            return _ok({"theta": manager.config.policy.theta})

    @app.get("/api/v1/nodes")
    def nodes():
        with lock:
            rows = []
            for record in manager.store.records():
                report = manager.last_report.get(record.node_id)
                history_len = 0
                if record.status is NodeStatus.AUTHORIZED:
                    history_len = len(manager.store.training_set(record.node_id))
                rows.append(
                    {
                        "node_id": record.node_id,
                        "status": record.status.value,
                        "admitted_at": record.admitted_at,
                        "history_len": history_len,
                        "last_score": report.score if report else None,
                        "last_decision": report.decision.value if report else None,
                        "theta_used": report.theta_used if report else None,
                    }
                )
        return _ok({"nodes": rows})

    @app.post("/api/v1/nodes/{node_id}/revoke")
    def revoke(node_id: str, body: ActorBody):
        with lock:
            _admin(AdminActionKind.OVERRIDE_REVOKE, body.actor, target=node_id)
        return _ok({"node_id": node_id, "status": "unauthorized"})

    @app.post("/api/v1/nodes/{node_id}/readmit")
    def readmit(node_id: str, body: ActorBody):
        with lock:
            _admin(AdminActionKind.READMIT_NODE, body.actor, target=node_id)
        return _ok({"node_id": node_id, "status": "authorized"})

    @app.post("/api/v1/nodes/{node_id}/recalibrate")
    def recalibrate(node_id: str, body: ActorBody):
        with lock:
            _admin(AdminActionKind.RECALIBRATE, body.actor, target=node_id)
        return _ok({"node_id": node_id, "recalibrated": True})

    @app.get("/api/v1/audit")
    def audit(since_seq: int = 0):
        with lock:
            records = [r.to_obj() for r in manager.audit_log(since_seq=since_seq)]
        return _ok({"records": records})

    @app.post("/api/v1/events")
    def submit_event(body: EventBody):
        padl = PadlFingerprint(attributes=tuple((n, v) for n, v in body.attributes))
        unknown = set(body.services) - set(manager.config.services)
        if unknown:
            raise ValidationError(f"undeclared services: {sorted(unknown)}")
        window_end = body.window_end if body.window_end is not None else time.time()
        window_start = (
            body.window_start if body.window_start is not None else window_end - 300.0
        )
        services = {name: ServiceUsage() for name in manager.config.services}
        for name, usage in body.services.items():
            services[name] = ServiceUsage(
                bytes_up=usage.bytes_up,
                bytes_down=usage.bytes_down,
                session_count=usage.session_count,
            )
        activity = NodeActivity(
            node_id=padl.canonical_digest,
            window_start=window_start,
            window_end=window_end,
            ap_id=body.ap_id,
            failed_auth_count=body.failed_auth_count,
            services=services,
        )
        event = NodeEvent(padl=padl, activity=activity, received_at=window_end)
        with lock:
            outcome = manager.handle_event(event)
        return _ok(
            {
                "node_id": outcome.node_id,
                "path": outcome.path_taken.value,
                "audit_seq": outcome.audit_seq,
                "deviation": outcome.deviation.to_obj() if outcome.deviation else None,
            }
        )

    if console_dir is not None:
        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app
