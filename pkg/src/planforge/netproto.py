"""Control-channel message envelope: u32 length + canonical JSON.

A recorder callback, when attached, observes every byte a peer sends or
receives on the connection — the tap the metadata-only audit scans.
"""

import json
import socket
import struct

from .canon import canonical_json_bytes

MAX_MESSAGE = 64 << 20

# control message types
SUBMIT_RUN = "SubmitRun"
RUN_ACCEPTED = "RunAccepted"
DISPATCH_PLAN = "DispatchPlan"
EVENT = "Event"
RUN_COMPLETE = "RunComplete"
ERROR = "Error"


def message(mtype: str, body: dict) -> dict:
    return {"type": mtype, "body": body}


def send_message(sock: socket.socket, doc: dict, recorder=None):
    payload = canonical_json_bytes(doc)
    data = struct.pack("<I", len(payload)) + payload
    if recorder is not None:
        recorder(data)
    sock.sendall(data)


def _read_exact(sock: socket.socket, n: int):
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket, recorder=None):
    """Returns the decoded message, or None at end of stream."""
    head = _read_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack("<I", head)
    if length > MAX_MESSAGE:
        raise ValueError(f"message of {length} bytes exceeds cap")
    payload = _read_exact(sock, length)
    if payload is None:
        return None
    if recorder is not None:
        recorder(head + payload)
    return json.loads(payload.decode("utf-8"))
