"""Client side of the control-plane protocol."""

import socket
from dataclasses import dataclass, field

from .errors import CompileError, PlanforgeError, WorkerUnavailable
from .netproto import (
    ERROR,
    EVENT,
    RUN_ACCEPTED,
    RUN_COMPLETE,
    SUBMIT_RUN,
    message,
    recv_message,
    send_message,
)
from .runtime.events import RunEvent


@dataclass
class RunOutcome:
    run_id: str = ""
    state: str = "failed"
    plan_digest: str = ""
    preview: dict = None
    events: list = field(default_factory=list)
    summary: dict = None


def submit_run(cp_endpoint: str, manifest_doc, pins: dict = None,
               limits: dict = None, on_event=None, misroute_previews: bool = False,
               timeout_s: float = 120.0) -> RunOutcome:
    """Submit a manifest and stream events until the run completes.

    ``on_event`` is invoked with each RunEvent as it arrives.  Raises
    CompileError / WorkerUnavailable; node failures surface as a failed
    outcome, not an exception.
    """
    host, port = cp_endpoint.rsplit(":", 1)
    outcome = RunOutcome()
    with socket.create_connection((host, int(port)), timeout=timeout_s) as sock:
        send_message(sock, message(SUBMIT_RUN, {
            "manifest": manifest_doc,
            "pins": pins or {},
            "limits": limits or {},
            "misroute_previews": misroute_previews,
        }))
        while True:
            msg = recv_message(sock)
            if msg is None:
                raise PlanforgeError("control plane closed the connection mid-run")
            mtype, body = msg["type"], msg["body"]
            if mtype == RUN_ACCEPTED:
                outcome.run_id = body["run_id"]
                outcome.plan_digest = body.get("plan_digest", "")
                outcome.preview = body.get("preview")
            elif mtype == EVENT:
                event = RunEvent.from_json(body)
                outcome.events.append(event)
                if on_event is not None:
                    on_event(event)
            elif mtype == RUN_COMPLETE:
                outcome.state = body.get("state", "failed")
                outcome.summary = body
                return outcome
            elif mtype == ERROR:
                kind = body.get("kind", "Error")
                detail = body.get("detail", "")
                if kind == "CompileError":
                    raise CompileError(detail)
                if kind == "WorkerUnavailable":
                    raise WorkerUnavailable(detail)
                raise PlanforgeError(f"{kind}: {detail}")
