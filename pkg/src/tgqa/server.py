"""HTTP inference service with per-session conversational state.

The :class:`QaService` layer holds all behavior and is unit-testable without
sockets; the handler translates HTTP/JSON to service calls. Model parameters
are read-only and shared, each session's history is guarded by its own lock,
and requests for different sessions proceed concurrently.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from . import autodiff as ad
from .errors import InvalidSelectionError, InvalidTableError, SessionError, TgqaError
from .graph import GraphOptions, build_graph, graph_to_dump
from .network import decode_greedy, encode, tensorize
from .tables import CellCoord, Table, answer_texts, selection_to_cells
from .text import annotate_column_types, normalize_tokenize, parse_numeric_spans

log = logging.getLogger("tgqa.server")


@dataclass
class TurnRecord:
    question: str
    columns: list[int]
    rows: list[int]
    cells: list[CellCoord]
    texts: list[str]
    graph_dump: dict


@dataclass
class Session:
    session_id: str
    table_id: str
    history: list[TurnRecord] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class QaService:
    """Sessions + tables + one loaded model."""

    def __init__(self, checkpoint, tables: Optional[dict[str, Table]] = None):
        self.checkpoint = checkpoint
        self.tables: dict[str, Table] = {}
        for table_id, table in (tables or {}).items():
            annotate_column_types(table)
            self.tables[table_id] = table
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self._options = GraphOptions(rel_pos_clip=checkpoint.model_config.rel_pos_clip)

    def list_tables(self) -> list[dict]:
        return [
            {"table_id": tid, "n_rows": t.n_rows, "n_cols": t.n_cols}
            for tid, t in sorted(self.tables.items())
        ]

    def get_table(self, table_id: str) -> Table:
        table = self.tables.get(table_id)
        if table is None:
            raise SessionError(f"unknown table {table_id!r}")
        return table

    def create_session(self, table_id: Optional[str] = None, inline_table: Optional[dict] = None) -> str:
        if (table_id is None) == (inline_table is None):
            raise InvalidTableError("provide exactly one of table_id or an inline table")
        if inline_table is not None:
            columns = inline_table.get("columns")
            rows = inline_table.get("rows")
            if not isinstance(columns, list) or not isinstance(rows, list):
                raise InvalidTableError("inline table needs 'columns' and 'rows' lists")
            table_id = f"inline/{uuid.uuid4().hex[:8]}"
            table = Table(
                table_id=table_id,
                column_names=[str(c) for c in columns],
                cells=[[str(c) for c in row] for row in rows],
            )
            annotate_column_types(table)
            with self._registry_lock:
                self.tables[table_id] = table
        else:
            self.get_table(table_id)
        session_id = uuid.uuid4().hex[:16]
        with self._registry_lock:
            self.sessions[session_id] = Session(session_id=session_id, table_id=table_id)
        log.info("created session %s on table %s", session_id, table_id)
        return session_id

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown session {session_id!r}")
        return session

    def ask(self, session_id: str, question: str) -> dict:
        """Answer one question with the previous turn's answer as context."""
        if not question or not question.strip():
            raise SessionError("question must be non-empty")
        session = self._session(session_id)
        ckpt = self.checkpoint
        with session.lock:
            table = self.get_table(session.table_id)
            prev = session.history[-1].cells if session.history else None
            tokens = normalize_tokenize(question)
            spans = parse_numeric_spans(tokens)
            graph = build_graph(
                table, tokens, spans, ckpt.vocab, prev_cells=prev, options=self._options
            )
            gt = tensorize(graph, ckpt.model_config)
            with ad.no_grad():
                encoded = encode(gt, ckpt.params, ckpt.model_config, train_mode=False)
                selection = decode_greedy(encoded, gt, ckpt.params, ckpt.model_config)
            cells = selection_to_cells(selection, table)
            texts = answer_texts(cells, table)
            record = TurnRecord(
                question=question,
                columns=list(selection.columns),
                rows=list(selection.rows),
                cells=cells,
                texts=texts,
                graph_dump=graph_to_dump(graph, session_id, len(session.history) + 1, table.table_id),
            )
            session.history.append(record)
            return {
                "turn": len(session.history),
                "columns": record.columns,
                "rows": record.rows,
                "cells": [
                    {"row": c.row, "col": c.col, "text": t}
                    for c, t in zip(cells, texts)
                ],
            }

    def reset_session(self, session_id: str) -> None:
        session = self._session(session_id)
        with session.lock:
            session.history.clear()

    def delete_session(self, session_id: str) -> None:
        self._session(session_id)
        with self._registry_lock:
            self.sessions.pop(session_id, None)

    def debug_graph(self, session_id: str) -> dict:
        session = self._session(session_id)
        with session.lock:
            if not session.history:
                raise SessionError(f"session {session_id!r} has no turns yet")
            return session.history[-1].graph_dump


_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create"),
    ("GET", re.compile(r"^/tables$"), "tables"),
    ("GET", re.compile(r"^/tables/(?P<table_id>.+)$"), "table"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[^/]+)/ask$"), "ask"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[^/]+)/reset$"), "reset"),
    ("DELETE", re.compile(r"^/sessions/(?P<sid>[^/]+)$"), "delete"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[^/]+)/debug/graph$"), "debug"),
]


def handle_request(service: QaService, method: str, path: str, body: Optional[dict]) -> tuple[int, dict]:
    """Pure request dispatch: (status, payload). Used directly by tests."""
    try:
        for verb, pattern, action in _ROUTES:
            if verb != method:
                continue
            m = pattern.match(path)
            if not m:
                continue
            if action == "create":
                body = body or {}
                sid = service.create_session(
                    table_id=body.get("table_id"), inline_table=body.get("table")
                )
                return 200, {"session_id": sid}
            if action == "tables":
                return 200, {"tables": service.list_tables()}
            if action == "table":
                table = service.get_table(m.group("table_id"))
                return 200, {
                    "table_id": table.table_id,
                    "columns": table.column_names,
                    "rows": table.cells,
                }
            if action == "ask":
                question = (body or {}).get("question", "")
                return 200, service.ask(m.group("sid"), question)
            if action == "reset":
                service.reset_session(m.group("sid"))
                return 200, {"ok": True}
            if action == "delete":
                service.delete_session(m.group("sid"))
                return 200, {"ok": True}
            if action == "debug":
                return 200, service.debug_graph(m.group("sid"))
        return 404, {"error": "not_found", "detail": f"no route for {method} {path}"}
    except SessionError as exc:
        status = 404 if "unknown" in str(exc) else 400
        return status, {"error": "session_error", "detail": str(exc)}
    except (InvalidTableError, InvalidSelectionError) as exc:
        return 400, {"error": "invalid_request", "detail": str(exc)}
    except TgqaError as exc:
        return 500, {"error": "internal_error", "detail": str(exc)}


_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


def make_handler(service: QaService, static_dir: Optional[Path] = None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route through logging, not stderr
            log.debug("%s %s", self.address_string(), fmt % args)

        def _read_body(self) -> Optional[dict]:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return None
            raw = self.rfile.read(length)
            try:
                return json.loads(raw)
            except json.JSONDecodeError:
                return None

        def _send_json(self, status: int, payload: dict) -> None:
            blob = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)

        def _serve_static(self) -> bool:
            if static_dir is None:
                return False
            rel = self.path.split("?")[0].lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                return False
            blob = target.read_bytes()
            self.send_response(200)
            ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)
            return True

        def _dispatch(self, method: str) -> None:
            path = self.path.split("?")[0]
            if method == "GET" and not path.startswith(("/sessions", "/tables")):
                if self._serve_static():
                    return
            status, payload = handle_request(service, method, path, self._read_body())
            self._send_json(status, payload)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_DELETE(self):
            self._dispatch("DELETE")

    return Handler


def serve(service: QaService, port: int, static_dir: Optional[str] = None) -> ThreadingHTTPServer:
    """Start the HTTP server (non-blocking); caller owns serve_forever()."""
    handler = make_handler(service, Path(static_dir) if static_dir else None)
    return ThreadingHTTPServer(("0.0.0.0", port), handler)
