"""Run events: logs, state changes, previews, errors.

Events carry a per-run strictly increasing sequence number assigned by the
sink under one lock, so concurrent nodes interleave without ties.  Sinks
deliver to their callback as events occur — nothing is batched until run
completion.
"""

import threading
from dataclasses import dataclass

KIND_LOG = "log"
KIND_STATE = "state"
KIND_PREVIEW = "preview"
KIND_ERROR = "error"
KIND_DONE = "done"

KINDS = (KIND_LOG, KIND_STATE, KIND_PREVIEW, KIND_ERROR, KIND_DONE)


@dataclass(frozen=True)
class RunEvent:
    run_id: str
    node: str
    kind: str
    payload: object
    seq: int

    def to_json(self) -> dict:
        return {"run_id": self.run_id, "node": self.node, "kind": self.kind,
                "payload": self.payload, "seq": self.seq}

    @classmethod
    def from_json(cls, doc: dict) -> "RunEvent":
        return cls(doc["run_id"], doc["node"], doc["kind"], doc["payload"],
                   doc["seq"])


class EventSink:
    def __init__(self, run_id: str, callback=None):
        self.run_id = run_id
        self.callback = callback
        self.events = []
        self._lock = threading.Lock()
        self._seq = 0

    def emit(self, node: str, kind: str, payload) -> RunEvent:
        assert kind in KINDS, kind
        with self._lock:
            self._seq += 1
            event = RunEvent(self.run_id, node, kind, payload, self._seq)
            self.events.append(event)
        if self.callback is not None:
            self.callback(event)
        return event

    def log(self, node: str, line: str) -> RunEvent:
        return self.emit(node, KIND_LOG, {"line": line})

    def state(self, node: str, state: str) -> RunEvent:
        return self.emit(node, KIND_STATE, {"state": state})
