"""HTTP API: query, auto-prompt scope, history, feedback, health, and the
admin retrain/audit endpoints, with role-based access checks and a local
append-only audit log.

Requests are stateless over immutable graph snapshots; retraining swaps the
snapshot atomically under a lock.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .adjudicator import DeterministicAdjudicator, default_adjudicator
from .connect import Connection, ConnectionSpec
from .errors import AccessDenied, AskdbError, ValidationError
from .graph import GraphBuilder, SemanticKnowledgeGraph, load_graph, save_graph
from .pipeline import QueryPipeline, autoprompt_scope, compile_autoprompt
from .sqlgen import decode_sql

ROLES = ("admin", "owner", "user", "viewer")


@dataclass
class Principal:
    name: str
    token: str
    role: str
    connections: set[str] = field(default_factory=set)
    row_limit: Optional[int] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r} for principal {self.name!r}")


@dataclass
class ServiceConfig:
    port: int = 8080
    connections: dict[str, ConnectionSpec] = field(default_factory=dict)
    graphs: dict[str, str] = field(default_factory=dict)  # connection id -> .skg path
    principals: dict[str, Principal] = field(default_factory=dict)  # token -> principal
    rls: dict[str, dict[str, dict[str, str]]] = field(default_factory=dict)  # conn -> table -> role -> pred
    row_limit_default: int = 1000
    audit_path: Optional[str] = None
    static_dir: Optional[str] = None
    adjudicator_kind: str = "deterministic"
    adjudicator_endpoint: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = tomllib.loads(Path(path).read_text("utf-8"))
        svc = data.get("service", {})
        cfg = cls(
            port=int(svc.get("port", 8080)),
            row_limit_default=int(svc.get("row_limit_default", 1000)),
            audit_path=svc.get("audit_log"),
            static_dir=svc.get("static_dir"),
            adjudicator_kind=svc.get("adjudicator", "deterministic"),
            adjudicator_endpoint=svc.get("adjudicator_endpoint", ""),
        )
        for cid, c in data.get("connections", {}).items():
            cfg.connections[cid] = ConnectionSpec(
                id=cid,
                dialect=c.get("dialect", "embedded"),
                location=c["location"],
                scope=c.get("scope"),
            )
            if "graph" in c:
                cfg.graphs[cid] = c["graph"]
        for name, p in data.get("principals", {}).items():
            principal = Principal(
                name=name,
                token=p["token"],
                role=p.get("role", "viewer"),
                connections=set(p.get("connections", [])),
                row_limit=p.get("row_limit"),
            )
            cfg.principals[principal.token] = principal
        for cid, tables in data.get("rls", {}).items():
            cfg.rls[cid] = {t: dict(roles) for t, roles in tables.items()}
        return cfg


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SQL_WORDS = {"and", "or", "not", "in", "between", "like", "is", "null", "true", "false"}


def validate_rls(graph: SemanticKnowledgeGraph, rls: dict[str, dict[str, str]]) -> None:
    """Predicates are vetted when config loads, never at query time."""
    for table, bindings in rls.items():
        entry = graph.table(table)
        if entry is None:
            raise ValidationError(f"RLS table {table!r} is not in the graph")
        columns = {c.name.lower() for c in entry.columns}
        for role, predicate in bindings.items():
            for ident in _IDENT.findall(predicate):
                low = ident.lower()
                if low in _SQL_WORDS or low in columns:
                    continue
                raise ValidationError(
                    f"RLS predicate for {table!r}/{role!r} references unknown column {ident!r}"
                )


def check_access(principal: Optional[Principal], resource: str, target: str = "") -> tuple[bool, str]:
    """Pure role check; deny reasons are enumerated (auth, role, connection)."""
    if principal is None:
        return False, "auth"
    if principal.role == "admin":
        return True, "admin"
    if resource == "connection":
        if target in principal.connections:
            return True, "granted"
        return False, "connection"
    if resource == "export":
        if principal.role == "viewer":
            return False, "role"
        return True, "granted"
    if resource == "admin":
        return False, "role"
    return False, "role"


class AuditStore:
    """Append-only audit records; deletes are soft."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self._records: list[dict] = []
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if line.strip():
                    self._records.append(json.loads(line))

    def append(self, record: dict) -> None:
        record = dict(record)
        record.setdefault("timestamp", datetime.now(timezone.utc).isoformat(timespec="seconds"))
        record.setdefault("deleted", False)
        with self._lock:
            self._records.append(record)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True, default=str) + "\n")

    def soft_delete(self, index: int) -> None:
        with self._lock:
            self._records[index]["deleted"] = True

    def records(self, include_deleted: bool = True) -> list[dict]:
        with self._lock:
            return [dict(r) for r in self._records if include_deleted or not r.get("deleted")]

    def count(self) -> int:
        with self._lock:
            return len(self._records)


@dataclass
class HistoryEntry:
    principal: str
    connection_id: str
    request_id: str
    question: str
    sql: str
    summary: Optional[str]
    timestamp: float
    feedback: Optional[str] = None
    shared: bool = False

    def to_dict(self) -> dict:
        return {
            "principal": self.principal,
            "connection_id": self.connection_id,
            "request_id": self.request_id,
            "question": self.question,
            "sql": self.sql,
            "summary": self.summary,
            "timestamp": self.timestamp,
            "feedback": self.feedback,
            "shared": self.shared,
        }


class ServiceState:
    """Mutable service spine: connections, graph snapshots, pipelines."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.audit = AuditStore(config.audit_path)
        self.history: list[HistoryEntry] = []
        self._lock = threading.Lock()
        self.connections: dict[str, Connection] = {}
        self.graphs: dict[str, SemanticKnowledgeGraph] = {}
        self.pipelines: dict[str, QueryPipeline] = {}
        if config.adjudicator_kind == "remote" and config.adjudicator_endpoint:
            self.adjudicator = default_adjudicator(
                "remote", endpoint=config.adjudicator_endpoint
            )
        else:
            self.adjudicator = DeterministicAdjudicator()
        for cid, spec in config.connections.items():
            self.connections[cid] = Connection(spec)
            graph_path = config.graphs.get(cid)
            if graph_path and Path(graph_path).exists():
                self.install_graph(cid, load_graph(graph_path))

    def install_graph(self, cid: str, graph: SemanticKnowledgeGraph) -> None:
        rls = self.config.rls.get(cid, {})
        if rls:
            validate_rls(graph, rls)
        pipeline = QueryPipeline(
            graph,
            self.connections[cid],
            adjudicator=self.adjudicator,
            rls=rls,
        )
        with self._lock:
            # atomic snapshot swap: in-flight requests keep the old pipeline
            self.graphs[cid] = graph
            self.pipelines[cid] = pipeline

    def pipeline_for(self, cid: str) -> QueryPipeline:
        with self._lock:
            pipeline = self.pipelines.get(cid)
        if pipeline is None:
            raise AskdbError(f"no trained graph installed for connection {cid!r}")
        return pipeline

    def principal_for(self, authorization: Optional[str]) -> Optional[Principal]:
        if not authorization or not authorization.lower().startswith("bearer "):
            return None
        return self.config.principals.get(authorization[7:].strip())


class QueryBody(BaseModel):
    connection_id: str
    question: str


class ScopeBody(BaseModel):
    connection_id: str
    selection: dict = {}
    run: bool = False


class FeedbackBody(BaseModel):
    request_id: str
    feedback: Optional[str] = None  # up | down
    shared: Optional[bool] = None


class RetrainBody(BaseModel):
    connection_id: str
    seed: Optional[int] = None


def _problem(stage: str, message: str, status: int, request_id: str = "", uninterpreted=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={
            "problem": {
                "stage": stage,
                "message": message,
                "uninterpreted": uninterpreted or [],
            },
            "request_id": request_id,
        },
    )


def create_app(config: ServiceConfig | str | Path, state: Optional[ServiceState] = None) -> FastAPI:
    if not isinstance(config, ServiceConfig):
        config = ServiceConfig.from_file(config)
    state = state or ServiceState(config)
    app = FastAPI(title="askdb", version="0.1.0")
    app.state.engine = state

    def audit(principal, endpoint: str, outcome: str, detail: str = "") -> None:
        state.audit.append(
            {
                "principal": principal.name if principal else "anonymous",
                "role": principal.role if principal else "",
                "endpoint": endpoint,
                "detail": detail,
                "outcome": outcome,
            }
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "connections": sorted(state.connections)}

    @app.post("/query")
    def query(body: QueryBody, request: Request, authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        allowed, reason = check_access(principal, "connection", body.connection_id)
        if not allowed:
            audit(principal, "/query", "denied", body.question)
            return _problem("access", f"access denied ({reason})", 403 if principal else 401)
        try:
            pipeline = state.pipeline_for(body.connection_id)
            row_limit = principal.row_limit or state.config.row_limit_default
            response = pipeline.answer(body.question, role=principal.role, row_limit=row_limit)
            state.history.append(
                HistoryEntry(
                    principal=principal.name,
                    connection_id=body.connection_id,
                    request_id=response.request_id,
                    question=body.question,
                    sql=response.sql.text,
                    summary=response.summary,
                    timestamp=time.time(),
                )
            )
            audit(principal, "/query", "ok", body.question)
            return response.to_dict()
        except AskdbError as exc:
            audit(principal, "/query", "error", body.question)
            uninterpreted = getattr(exc, "uninterpreted", None)
            return _problem(exc.stage, str(exc), 422, uninterpreted=uninterpreted)

    @app.post("/autoprompt/scope")
    def scope(body: ScopeBody, authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        allowed, reason = check_access(principal, "connection", body.connection_id)
        if not allowed:
            audit(principal, "/autoprompt/scope", "denied")
            return _problem("access", f"access denied ({reason})", 403 if principal else 401)
        try:
            pipeline = state.pipeline_for(body.connection_id)
            options = autoprompt_scope(pipeline.graph, body.selection)
            result = {"options": options}
            if body.run and options["complete"]:
                tree = compile_autoprompt(pipeline.graph, body.selection, state.adjudicator)
                from .plan import qualify_rls

                tree = qualify_rls(tree, pipeline.rls, principal.role)
                artifact = decode_sql(tree, pipeline.dialect, pipeline.graph)
                rows = state.connections[body.connection_id].execute_sql(
                    artifact.text,
                    row_limit=principal.row_limit or state.config.row_limit_default,
                )
                result["sql"] = artifact.text
                result["rows"] = {
                    "columns": [{"name": n, "type": t} for n, t in rows.columns],
                    "values": [list(r) for r in rows.rows],
                    "truncated": rows.truncated,
                }
            audit(principal, "/autoprompt/scope", "ok")
            return result
        except AskdbError as exc:
            audit(principal, "/autoprompt/scope", "error")
            return _problem(exc.stage, str(exc), 422)

    @app.get("/history")
    def history(limit: int = 50, authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        if principal is None:
            audit(principal, "/history", "denied")
            return _problem("access", "access denied (auth)", 401)
        entries = []
        for entry in reversed(state.history):
            own = entry.principal == principal.name
            visible_shared = entry.shared and check_access(
                principal, "connection", entry.connection_id
            )[0]
            if own or visible_shared:
                entries.append(entry.to_dict())
            if len(entries) >= limit:
                break
        audit(principal, "/history", "ok")
        return {"entries": entries}

    @app.post("/feedback")
    def feedback(body: FeedbackBody, authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        if principal is None:
            audit(principal, "/feedback", "denied")
            return _problem("access", "access denied (auth)", 401)
        if body.feedback is not None and body.feedback not in ("up", "down"):
            audit(principal, "/feedback", "error")
            return _problem("feedback", "feedback must be 'up' or 'down'", 422)
        for entry in state.history:
            if entry.request_id == body.request_id:
                if body.feedback is not None:
                    entry.feedback = body.feedback
                if body.shared is not None:
                    entry.shared = bool(body.shared)
                audit(principal, "/feedback", "ok", body.request_id)
                return {"request_id": body.request_id, "feedback": entry.feedback, "shared": entry.shared}
        audit(principal, "/feedback", "error", body.request_id)
        return _problem("feedback", f"unknown request_id {body.request_id!r}", 404)

    @app.post("/retrain")
    def retrain(body: RetrainBody, authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        allowed, reason = check_access(principal, "admin")
        if not allowed:
            audit(principal, "/retrain", "denied")
            return _problem("access", f"access denied ({reason})", 403 if principal else 401)
        try:
            conn = state.connections[body.connection_id]
            old = state.graphs.get(body.connection_id)
            builder = GraphBuilder(
                conn,
                adjudicator=state.adjudicator,
                seed=body.seed if body.seed is not None else (old.seed if old else 7),
            )
            if old is not None:
                graph, report = builder.incremental_update(old)
                lines = report.lines()
            else:
                graph = builder.build()
                lines = [f"trained {len(graph.tables)} tables"]
            state.install_graph(body.connection_id, graph)
            graph_path = state.config.graphs.get(body.connection_id)
            if graph_path:
                save_graph(graph, graph_path)
            audit(principal, "/retrain", "ok", body.connection_id)
            return {"version": graph.version, "changes": lines}
        except AskdbError as exc:
            audit(principal, "/retrain", "error", body.connection_id)
            return _problem(exc.stage, str(exc), 422)

    @app.get("/audit")
    def audit_log(authorization: Optional[str] = Header(None)):
        principal = state.principal_for(authorization)
        allowed, reason = check_access(principal, "admin")
        if not allowed:
            audit(principal, "/audit", "denied")
            return _problem("access", f"access denied ({reason})", 403 if principal else 401)
        records = state.audit.records()
        audit(principal, "/audit", "ok")
        return {"records": records}

    static_dir = config.static_dir
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(config_path: str | Path, host: str = "127.0.0.1", port: Optional[int] = None) -> None:
    import uvicorn

    config = ServiceConfig.from_file(config_path)
    app = create_app(config)
    uvicorn.run(app, host=host, port=port or config.port, log_level="warning")
