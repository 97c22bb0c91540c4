"""Metadata-only control plane.

Accepts run submissions over a TCP byte stream, compiles manifests into
physical plans against pinned catalog snapshots, dispatches plans to the
worker, and relays control and log events back to the client over the
same connection.  Table bytes never cross this service: previews flow
from the worker's data endpoint directly to the client, and a traffic tap
plus sentinel audit prove the property.
"""

import secrets
import socket
import threading
import time
import uuid
from dataclasses import dataclass

from .canon import digest_of
from .catalog import Catalog
from .errors import AuditFailed, CompileError, PlanforgeError, UnknownRun, WorkerUnavailable
from .netproto import (
    DISPATCH_PLAN,
    ERROR,
    EVENT,
    RUN_ACCEPTED,
    RUN_COMPLETE,
    SUBMIT_RUN,
    message,
    recv_message,
    send_message,
)
from .planner import build_logical, compile_physical, parse_manifest
from .planner.manifest import manifest_digest
from .planner.physical import PhysicalPlan
from .runtime.events import KIND_PREVIEW

RUN_STATES = ("queued", "compiling", "dispatched", "running",
              "succeeded", "failed")


@dataclass
class RunRecord:
    run_id: str
    manifest_digest: str = ""
    plan_digest: str = ""
    state: str = "queued"
    created_at: float = 0.0

    def to_json(self):
        return dict(self.__dict__)


class _RecordStore:
    """RunRecord owner: all mutation serialized behind one lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records = {}

    def create(self, run_id: str) -> RunRecord:
        with self._lock:
            record = RunRecord(run_id=run_id, created_at=time.time())
            self._records[run_id] = record
            return record

    def advance(self, run_id: str, state: str):
        with self._lock:
            record = self._records[run_id]
            if record.state in ("succeeded", "failed"):
                return  # terminal records are immutable
            if state == "failed" or RUN_STATES.index(state) > RUN_STATES.index(record.state):
                record.state = state

    def set_digests(self, run_id: str, manifest_dig: str, plan_dig: str):
        with self._lock:
            record = self._records[run_id]
            record.manifest_digest = manifest_dig
            record.plan_digest = plan_dig

    def get(self, run_id: str) -> RunRecord:
        with self._lock:
            if run_id not in self._records:
                raise UnknownRun(f"no run {run_id!r}")
            r = self._records[run_id]
            return RunRecord(r.run_id, r.manifest_digest, r.plan_digest,
                             r.state, r.created_at)


class ControlPlane:
    def __init__(self, blob, worker_control: str, worker_data: str,
                 host: str = "127.0.0.1", port: int = 7781,
                 worker_timeout_s: float = 5.0, capture_traffic: bool = False):
        self.catalog = Catalog(blob)
        self.worker_control = worker_control
        self.worker_data = worker_data
        self.worker_timeout_s = worker_timeout_s
        self.records = _RecordStore()
        self.capture = [] if capture_traffic else None
        self.compile_count = 0
        self._plan_cache = {}
        self._plan_lock = threading.Lock()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(32)
        self.endpoint = "%s:%d" % self._sock.getsockname()
        self._stopping = False
        self._thread = threading.Thread(target=self._serve, daemon=True,
                                        name="control-plane")

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stopping = True
        # shutdown wakes a thread blocked in accept(); close alone may not
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def _record_bytes(self, data: bytes):
        if self.capture is not None:
            self.capture.append(data)

    def get_run(self, run_id: str) -> RunRecord:
        return self.records.get(run_id)

    # --- compilation, cached per (manifest, pins, current catalog heads):
    # a head moving under an unpinned source must recompile, while identical
    # resubmissions skip the compilation step entirely ---

    def compile_plan(self, manifest_doc, pins: dict) -> PhysicalPlan:
        m_digest = manifest_digest(manifest_doc)
        models = parse_manifest(manifest_doc)
        logical = build_logical(models)
        heads = {}
        for table in sorted(logical.sources):
            try:
                heads[table] = self.catalog.head(table)
            except PlanforgeError:
                heads[table] = None  # compile_physical reports properly
        key = (m_digest, digest_of(pins or {}), digest_of(heads))
        with self._plan_lock:
            cached = self._plan_cache.get(key)
        if cached is not None:
            return cached
        plan = compile_physical(logical, self.catalog, pins=pins, run_id="")
        with self._plan_lock:
            self._plan_cache[key] = plan
            self.compile_count += 1
        return plan

    # --- serving ---

    def _serve(self):
        while not self._stopping:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            if self._stopping:
                conn.close()
                return
            threading.Thread(target=self._handle, args=(conn,),
                             daemon=True).start()

    def _handle(self, conn: socket.socket):
        with conn:
            try:
                msg = recv_message(conn, self._record_bytes)
            except (ValueError, OSError):
                return
            if msg is None or msg.get("type") != SUBMIT_RUN:
                return
            self._handle_submit(conn, msg["body"])

    def _handle_submit(self, conn: socket.socket, body: dict):
        run_id = uuid.uuid4().hex
        record = self.records.create(run_id)
        pins = body.get("pins") or {}
        limits = body.get("limits") or {}
        misroute = bool(body.get("misroute_previews"))
        preview_token = secrets.token_hex(16)

        def reply(doc):
            send_message(conn, doc, self._record_bytes)

        self.records.advance(run_id, "compiling")
        try:
            plan = self.compile_plan(body.get("manifest"), pins)
        except PlanforgeError as exc:
            self.records.advance(run_id, "failed")
            reply(message(ERROR, {
                "kind": "CompileError", "run_id": run_id,
                "detail": f"{type(exc).__name__}: {exc}",
            }))
            return
        run_plan = PhysicalPlan(run_id, plan.steps, plan.pins, plan.placement)
        self.records.set_digests(run_id, manifest_digest(body.get("manifest")),
                                 run_plan.digest())

        reply(message(RUN_ACCEPTED, {
            "run_id": run_id,
            "plan_digest": run_plan.digest(),
            "preview": {"endpoint": self.worker_data, "token": preview_token},
        }))

        host, port = self.worker_control.rsplit(":", 1)
        try:
            worker_conn = socket.create_connection(
                (host, int(port)), timeout=self.worker_timeout_s)
        except OSError:
            self.records.advance(run_id, "failed")
            reply(message(ERROR, {
                "kind": "WorkerUnavailable", "run_id": run_id,
                "detail": f"worker at {self.worker_control} unreachable "
                          f"within {self.worker_timeout_s}s",
            }))
            return

        with worker_conn:
            worker_conn.settimeout(None)
            send_message(worker_conn, message(DISPATCH_PLAN, {
                "plan": run_plan.to_json(),
                "limits": limits,
                "preview_token": preview_token,
                "misroute_previews": misroute,
            }), self._record_bytes)
            self.records.advance(run_id, "dispatched")
            while True:
                msg = recv_message(worker_conn, self._record_bytes)
                if msg is None:
                    self.records.advance(run_id, "failed")
                    reply(message(ERROR, {
                        "kind": "WorkerUnavailable", "run_id": run_id,
                        "detail": "worker connection ended mid-run",
                    }))
                    return
                if msg["type"] == EVENT:
                    self.records.advance(run_id, "running")
                    # row-bearing previews are excluded from the relay path
                    if msg["body"].get("kind") == KIND_PREVIEW and not misroute:
                        continue
                    reply(msg)
                elif msg["type"] == RUN_COMPLETE:
                    state = msg["body"].get("state", "failed")
                    self.records.advance(
                        run_id, "succeeded" if state == "succeeded" else "failed")
                    reply(msg)
                    return


def audit_no_data(capture, sentinel: bytes) -> dict:
    """Scan captured control-plane traffic for the sentinel byte pattern.

    Returns a report when clean; raises AuditFailed listing the offending
    message otherwise.
    """
    if isinstance(sentinel, str):
        sentinel = sentinel.encode("utf-8")
    offending = []
    for i, chunk in enumerate(capture):
        if sentinel in chunk:
            offending.append({"index": i, "bytes": len(chunk),
                              "preview": chunk[:200].decode("utf-8", "replace")})
    if offending:
        raise AuditFailed(
            f"sentinel crossed the control plane in {len(offending)} message(s)",
            offending)
    return {"passed": True, "messages_scanned": len(capture),
            "bytes_scanned": sum(len(c) for c in capture)}
