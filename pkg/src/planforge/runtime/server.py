"""Worker network surface.

Two listeners:

  * control — the control plane dials in, sends one DispatchPlan, and
    receives the event stream plus a terminal RunComplete.  Preview events
    never ride this channel (they carry table rows): the worker-side
    filter drops them unless the dispatch carries the test-only misroute
    switch used by the audit's negative control.
  * data — clients dial directly with a per-run token to fetch previews,
    so row bytes bypass the control plane entirely.
"""

import socket
import threading

from ..canon import canonical_json_bytes
from ..netproto import DISPATCH_PLAN, EVENT, RUN_COMPLETE, message, recv_message, send_message
from ..planner.physical import PhysicalPlan
from .events import EventSink, KIND_PREVIEW
from .worker import Worker


class WorkerServer:
    def __init__(self, worker: Worker, host: str = "127.0.0.1",
                 control_port: int = 0, data_port: int = 0):
        self.worker = worker
        self._control = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._control.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._control.bind((host, control_port))
        self._control.listen(16)
        self._data = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._data.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._data.bind((host, data_port))
        self._data.listen(16)
        self.control_endpoint = "%s:%d" % self._control.getsockname()
        self.data_endpoint = "%s:%d" % self._data.getsockname()
        self._tokens = {}  # run_id -> preview token
        self._stopping = False
        self._threads = [
            threading.Thread(target=self._serve_control, daemon=True,
                             name="worker-control"),
            threading.Thread(target=self._serve_data, daemon=True,
                             name="worker-data"),
        ]

    def start(self):
        for t in self._threads:
            t.start()
        return self

    def stop(self):
        self._stopping = True
        for sock in (self._control, self._data):
            # shutdown wakes a thread blocked in accept(); close may not
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass
        self.worker.close()

    # --- control channel ---

    def _serve_control(self):
        while not self._stopping:
            try:
                conn, _ = self._control.accept()
            except OSError:
                return
            if self._stopping:
                conn.close()
                return
            threading.Thread(target=self._handle_control, args=(conn,),
                             daemon=True).start()

    def _handle_control(self, conn: socket.socket):
        with conn:
            try:
                msg = recv_message(conn)
            except (ValueError, OSError):
                return
            if msg is None or msg.get("type") != DISPATCH_PLAN:
                return
            body = msg["body"]
            plan = PhysicalPlan.from_json(body["plan"])
            limits = body.get("limits") or {}
            misroute = bool(body.get("misroute_previews"))
            self._tokens[plan.run_id] = body.get("preview_token", "")
            lock = threading.Lock()

            def forward(event):
                if event.kind == KIND_PREVIEW and not misroute:
                    return  # data stays on the data plane
                with lock:
                    send_message(conn, message(EVENT, event.to_json()))

            sink = EventSink(plan.run_id, callback=forward)
            try:
                result = self.worker.execute_plan(plan, sink,
                                                   limits=limits)
                send_message(conn, message(RUN_COMPLETE, result.summary()))
            except Exception as exc:  # defensive: surface, don't wedge the CP
                send_message(conn, message(RUN_COMPLETE, {
                    "run_id": plan.run_id, "state": "failed",
                    "error": f"{type(exc).__name__}: {exc}",
                }))

    # --- data channel (previews) ---

    def _serve_data(self):
        while not self._stopping:
            try:
                conn, _ = self._data.accept()
            except OSError:
                return
            if self._stopping:
                conn.close()
                return
            threading.Thread(target=self._handle_data, args=(conn,),
                             daemon=True).start()

    def _handle_data(self, conn: socket.socket):
        with conn:
            try:
                f = conn.makefile("rb")
                line = f.readline().decode("ascii", "replace").strip()
            except OSError:
                return
            parts = line.split(" ")
            if len(parts) != 3 or parts[0] != "PREVIEW":
                conn.sendall(b'{"error":"bad request"}\n')
                return
            _, run_id, token = parts
            if self._tokens.get(run_id) != token:
                conn.sendall(b'{"error":"bad token"}\n')
                return
            previews = self.worker.previews.get(run_id, {})
            conn.sendall(canonical_json_bytes(previews) + b"\n")


def fetch_previews(data_endpoint: str, run_id: str, token: str) -> dict:
    """Client side of the preview data channel."""
    import json
    host, port = data_endpoint.rsplit(":", 1)
    with socket.create_connection((host, int(port)), timeout=10) as sock:
        sock.sendall(f"PREVIEW {run_id} {token}\n".encode("ascii"))
        f = sock.makefile("rb")
        doc = json.loads(f.readline().decode("utf-8"))
    if "error" in doc:
        raise ValueError(doc["error"])
    return doc
