"""Submit collected projects to a running control plane.

Speaks the control-plane wire protocol directly: u32-length-prefixed
canonical JSON messages over one TCP connection per run.
"""

import json
import socket
import struct
from dataclasses import dataclass, field

from .collect import collect_project


class RunError(RuntimeError):
    pass


@dataclass
class RunOutcome:
    run_id: str = ""
    state: str = "failed"
    plan_digest: str = ""
    preview: dict = None
    events: list = field(default_factory=list)
    summary: dict = None


def _send(sock, doc):
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"),
                         ensure_ascii=False).encode("utf-8")
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv(sock):
    head = b""
    while len(head) < 4:
        chunk = sock.recv(4 - len(head))
        if not chunk:
            return None
        head += chunk
    (length,) = struct.unpack("<I", head)
    payload = b""
    while len(payload) < length:
        chunk = sock.recv(length - len(payload))
        if not chunk:
            return None
        payload += chunk
    return json.loads(payload.decode("utf-8"))


def submit_manifest(cp_endpoint: str, manifest: dict, pins: dict = None,
                    limits: dict = None, on_event=None,
                    timeout_s: float = 120.0) -> RunOutcome:
    host, port = cp_endpoint.rsplit(":", 1)
    outcome = RunOutcome()
    with socket.create_connection((host, int(port)), timeout=timeout_s) as sock:
        _send(sock, {"type": "SubmitRun", "body": {
            "manifest": manifest, "pins": pins or {}, "limits": limits or {},
        }})
        while True:
            msg = _recv(sock)
            if msg is None:
                raise RunError("control plane closed the connection mid-run")
            mtype, body = msg["type"], msg["body"]
            if mtype == "RunAccepted":
                outcome.run_id = body["run_id"]
                outcome.plan_digest = body.get("plan_digest", "")
                outcome.preview = body.get("preview")
            elif mtype == "Event":
                outcome.events.append(body)
                if on_event is not None:
                    on_event(body)
            elif mtype == "RunComplete":
                outcome.state = body.get("state", "failed")
                outcome.summary = body
                return outcome
            elif mtype == "Error":
                raise RunError(f"{body.get('kind')}: {body.get('detail')}")


def submit_project(cp_endpoint: str, module_path, pins: dict = None,
                   limits: dict = None, on_event=None) -> RunOutcome:
    """Collect a decorated module and run it."""
    manifest = collect_project(module_path)
    return submit_manifest(cp_endpoint, manifest, pins=pins, limits=limits,
                           on_event=on_event)
