"""Intermediate-table movement between function invocations.

Four strategies, picked automatically per edge:

  shared-region  one refcounted in-memory region of CBUF frames; consumers
                 get zero-copy views, resident bytes counted once
  local-file     COLF spill on worker disk; acquiring reads the bytes back
                 into one region and decodes views over it
  stream         record-batch wire protocol over a TCP byte stream
  blob           COLF object in the simulated blob store (archival writes)

Co-located edges use shared-region while the table fits the shared-memory
budget, spilling to local-file above it; cross-worker edges stream; the
blob store is reserved for archival policy.
"""

import gc
import io
import os
import secrets
import socket
import statistics
import struct
import threading
import time
import uuid
from dataclasses import dataclass

import numpy as np

from .blob import BlobConfig, BlobStore
from .columnar import (
    Field,
    RegionRegistry,
    Schema,
    Table,
    decode_frames,
    encode_table_frames,
    table_from_pydict,
    write_colf,
)
from .columnar.cbuf import decode_batch_at
from .columnar.colf import read_footer
from .columnar.region import BufferRegion
from .errors import HandleExpired, MalformedFrame, RegionBudgetExceeded

SHARED_REGION = "shared-region"
LOCAL_FILE = "local-file"
STREAM = "stream"
BLOB = "blob"

STRATEGIES = (SHARED_REGION, LOCAL_FILE, STREAM, BLOB)

POLICY_INTERMEDIATE = "intermediate"
POLICY_ARCHIVAL = "archival"

FRAME_SCHEMA = 1
FRAME_BATCH = 2
FRAME_END = 3


@dataclass(frozen=True)
class TransportHandle:
    """Location-tagged reference to a published table; metadata only."""
    strategy: str
    locator: str
    schema: dict
    rows: int
    bytes: int
    run_id: str = ""
    token: str = ""

    def to_json(self) -> dict:
        return {"strategy": self.strategy, "locator": self.locator,
                "schema": self.schema, "rows": self.rows, "bytes": self.bytes,
                "run_id": self.run_id, "token": self.token}

    @classmethod
    def from_json(cls, doc: dict) -> "TransportHandle":
        return cls(doc["strategy"], doc["locator"], doc["schema"], doc["rows"],
                   doc["bytes"], doc.get("run_id", ""), doc.get("token", ""))


def select_strategy(producer_worker: str, consumer_worker: str, nbytes: int,
                    policy: str = POLICY_INTERMEDIATE,
                    shm_budget: int = None) -> str:
    if policy == POLICY_ARCHIVAL:
        return BLOB
    if producer_worker != consumer_worker:
        return STREAM
    if shm_budget is not None and nbytes > shm_budget:
        return LOCAL_FILE
    return SHARED_REGION


class TransportContext:
    """Per-run transport state: regions, spills, stream endpoints.

    Teardown invalidates every run-scoped handle (shared regions, spills,
    stream endpoints); blob objects are archival and survive.
    """

    def __init__(self, run_id: str, registry: RegionRegistry = None,
                 spill_dir=None, blob: BlobStore = None,
                 shm_budget: int = 1 << 30, chunk_rows: int = 65536):
        self.run_id = run_id
        self.registry = registry if registry is not None else RegionRegistry()
        self.spill_dir = os.fspath(spill_dir) if spill_dir else None
        self.blob = blob
        self.shm_budget = shm_budget
        self.chunk_rows = chunk_rows
        self.closed = False
        self._lock = threading.Lock()
        self._regions = {}
        self._servers = {}
        self._spills = set()

    def _check_open(self):
        if self.closed:
            raise HandleExpired(f"run {self.run_id} transport already torn down")

    def teardown(self):
        with self._lock:
            if self.closed:
                return
            self.closed = True
            regions = list(self._regions.values())
            servers = list(self._servers.values())
            spills = list(self._spills)
            self._regions.clear()
            self._servers.clear()
            self._spills.clear()
        for server in servers:
            server.stop()
        for region in regions:
            while not region.closed:
                region.release()
        for path in spills:
            try:
                os.unlink(path)
            except OSError:
                pass


def publish(table: Table, strategy: str, ctx: TransportContext) -> TransportHandle:
    ctx._check_open()
    schema_doc = table.schema.to_json()
    if strategy == SHARED_REGION:
        payload = encode_table_frames(table)
        if len(payload) > ctx.shm_budget:
            raise RegionBudgetExceeded(
                f"{len(payload)} bytes exceed shared-memory budget {ctx.shm_budget}")
        region = BufferRegion(payload, ctx.registry)
        with ctx._lock:
            ctx._regions[region.region_id] = region
        return TransportHandle(SHARED_REGION, region.region_id, schema_doc,
                               table.rows, len(payload), ctx.run_id)
    if strategy == LOCAL_FILE:
        payload = write_colf(table, ctx.chunk_rows)
        os.makedirs(ctx.spill_dir, exist_ok=True)
        path = os.path.join(ctx.spill_dir, f"{uuid.uuid4().hex}.colf")
        with open(path, "wb") as f:
            f.write(payload)
        with ctx._lock:
            ctx._spills.add(path)
        return TransportHandle(LOCAL_FILE, path, schema_doc,
                               table.rows, len(payload), ctx.run_id)
    if strategy == STREAM:
        payload = encode_table_frames(table)
        token = secrets.token_hex(8)
        server = _StreamServer(ctx.run_id, token, table.schema, payload)
        server.start()
        with ctx._lock:
            ctx._servers[server.endpoint] = server
        return TransportHandle(STREAM, server.endpoint, schema_doc,
                               table.rows, len(payload), ctx.run_id, token)
    if strategy == BLOB:
        payload = write_colf(table, ctx.chunk_rows)
        key = f"runs/{ctx.run_id}/{uuid.uuid4().hex}.colf"
        ctx.blob.put(key, payload)
        return TransportHandle(BLOB, key, schema_doc,
                               table.rows, len(payload), ctx.run_id)
    raise ValueError(f"unknown transport strategy {strategy!r}")


def _decode_colf_region(payload: bytes, ctx: TransportContext) -> Table:
    """Zero-copy chunk views over one region holding a whole COLF file."""
    meta = read_footer(payload)
    region = BufferRegion(payload, ctx.registry)
    with ctx._lock:
        if ctx.closed:
            raise HandleExpired(f"run {ctx.run_id} transport already torn down")
        ctx._regions[region.region_id] = region
    batches = []
    for entry in meta.chunks:
        batch, _ = decode_batch_at(region, entry.offset)
        batches.append(batch)
    region.release()  # ownership now carried by the per-batch retains
    return Table(meta.schema, batches)


def acquire(handle: TransportHandle, ctx: TransportContext) -> Table:
    ctx._check_open()
    if handle.strategy == SHARED_REGION:
        with ctx._lock:
            region = ctx._regions.get(handle.locator)
        if region is None or region.closed:
            raise HandleExpired(f"region {handle.locator} is gone")
        return decode_frames(region)
    if handle.strategy == LOCAL_FILE:
        try:
            with open(handle.locator, "rb") as f:
                payload = f.read()
        except OSError:
            raise HandleExpired(f"spill file {handle.locator} is gone") from None
        return _decode_colf_region(payload, ctx)
    if handle.strategy == STREAM:
        schema, batches = _stream_consume(handle, ctx)
        return Table(schema, batches)
    if handle.strategy == BLOB:
        try:
            payload = ctx.blob.get(handle.locator)
        except KeyError:
            raise HandleExpired(f"blob {handle.locator} is gone") from None
        return _decode_colf_region(payload, ctx)
    raise ValueError(f"unknown transport strategy {handle.strategy!r}")


# --- the record-batch wire stream ---

class _StreamServer:
    def __init__(self, run_id: str, token: str, schema: Schema, payload: bytes):
        self.run_id = run_id
        self.token = token
        self.schema = schema
        self.payload = payload
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(4)
        self.endpoint = "%s:%d" % self._sock.getsockname()
        self._stopping = False
        self._thread = threading.Thread(target=self._serve, daemon=True,
                                        name=f"stream-{self.endpoint}")

    def start(self):
        self._thread.start()

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

    def _serve(self):
        from .canon import canonical_json_bytes
        from .columnar.cbuf import frame_length
        payload_view = memoryview(self.payload)
        while not self._stopping:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            if self._stopping:
                conn.close()
                return
            try:
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                head = io.BytesIO()
                head.write(f"PFT/1 {self.run_id} {self.token}\n".encode("ascii"))
                schema_payload = canonical_json_bytes(self.schema.to_json())
                head.write(struct.pack("<BI", FRAME_SCHEMA, len(schema_payload)))
                head.write(schema_payload)
                conn.sendall(head.getvalue())
                pos = 0
                while pos < len(self.payload):
                    flen = frame_length(self.payload, pos)
                    conn.sendall(struct.pack("<BI", FRAME_BATCH, flen))
                    conn.sendall(payload_view[pos:pos + flen])
                    pos += flen
                conn.sendall(struct.pack("<BI", FRAME_END, 0))
            except OSError:
                pass
            finally:
                conn.close()


def _read_exact(sock_file, n: int) -> bytes:
    data = sock_file.read(n)
    if data is None or len(data) != n:
        raise MalformedFrame("stream ended mid-frame")
    return data


def read_stream_frames(endpoint: str):
    """Protocol-level tap: returns (greeting, [(frame_type, payload), ...])."""
    host, port = endpoint.rsplit(":", 1)
    try:
        sock = socket.create_connection((host, int(port)), timeout=10)
    except OSError:
        raise HandleExpired(f"stream endpoint {endpoint} is gone") from None
    frames = []
    with sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        f = sock.makefile("rb", buffering=1 << 20)
        greeting = f.readline().decode("ascii").rstrip("\n")
        if not greeting.startswith("PFT/1 "):
            raise MalformedFrame(f"bad stream greeting {greeting!r}")
        while True:
            head = _read_exact(f, 5)
            ftype, flen = struct.unpack("<BI", head)
            payload = _read_exact(f, flen) if flen else b""
            frames.append((ftype, payload))
            if ftype == FRAME_END:
                break
    return greeting, frames


def _stream_consume(handle: TransportHandle, ctx: TransportContext):
    import json
    greeting, frames = read_stream_frames(handle.locator)
    parts = greeting.split(" ")
    if len(parts) != 3 or (handle.token and parts[2] != handle.token):
        # a recycled port may answer with some other run's stream
        raise HandleExpired("stream endpoint no longer serves this handle")
    schema = None
    batches = []
    for ftype, payload in frames:
        if ftype == FRAME_SCHEMA:
            schema = Schema.from_json(json.loads(payload.decode("utf-8")))
        elif ftype == FRAME_BATCH:
            region = BufferRegion(payload, ctx.registry)
            with ctx._lock:
                if ctx.closed:
                    raise HandleExpired("torn down during stream consume")
                ctx._regions[region.region_id] = region
            batch, _ = decode_batch_at(region, 0)
            batches.append(batch)
            region.release()
        elif ftype == FRAME_END:
            break
        else:
            raise MalformedFrame(f"unknown stream frame type {ftype}")
    if schema is None:
        raise MalformedFrame("stream carried no schema frame")
    return schema, batches


# --- benchmark (latency ordering harness) ---

def synthetic_table(rows: int) -> Table:
    rng = np.random.default_rng(7)
    ids = np.arange(rows, dtype=np.int64)
    values = rng.random(rows)
    tags = [f"tag-{i % 997:06d}-xx" for i in range(rows)]
    # all non-nullable: the bench stresses byte movement, not nulls
    schema = Schema([Field("id", "int64", False),
                     Field("value", "float64", False),
                     Field("tag", "utf8", False)])
    return table_from_pydict(schema, {"id": ids.tolist(), "value": values.tolist(),
                                      "tag": tags})


def bench_transports(rows: int, trials: int, blob_root=None,
                     blob_config: BlobConfig = BlobConfig(),
                     spill_dir=None) -> dict:
    """Mean/SD acquire latency per strategy on one synthetic table.

    Each trial publishes fresh and tears down after acquiring, so every
    sample includes the full cost a consumer would pay.
    """
    if rows < 0:
        raise ValueError("rows must be >= 0")
    if trials < 2:
        raise ValueError("trials must be >= 2 (SD undefined otherwise)")
    import tempfile
    tmp = None
    if blob_root is None or spill_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="planforge-bench-")
        blob_root = blob_root or os.path.join(tmp.name, "blob")
        spill_dir = spill_dir or os.path.join(tmp.name, "spill")
    table = synthetic_table(rows)
    blob = BlobStore(blob_root, blob_config)
    report = {"rows": rows, "trials": trials, "table_bytes": table.nbytes(),
              "strategies": {}}
    try:
        for strategy in STRATEGIES:
            samples = []
            for t in range(-1, trials):  # trial -1 is an untimed warmup
                ctx = TransportContext(f"bench-{strategy}-{t}", blob=blob,
                                       spill_dir=spill_dir,
                                       shm_budget=1 << 40)
                handle = publish(table, strategy, ctx)
                gc.collect()  # keep collector pauses out of the timed window
                t0 = time.perf_counter()
                acquired = acquire(handle, ctx)
                elapsed = time.perf_counter() - t0
                assert acquired.rows == table.rows
                ctx.teardown()
                if t >= 0:
                    samples.append(elapsed)
            report["strategies"][strategy] = {
                "mean_s": statistics.mean(samples),
                "sd_s": statistics.stdev(samples),
                "samples": samples,
            }
    finally:
        if tmp is not None:
            tmp.cleanup()
    means = {s: report["strategies"][s]["mean_s"] for s in STRATEGIES}
    slowest_local = max(means[LOCAL_FILE], means[STREAM])
    report["gaps"] = {
        "local_file_over_shared": means[LOCAL_FILE] / means[SHARED_REGION],
        "stream_over_shared": means[STREAM] / means[SHARED_REGION],
        "blob_over_shared": means[BLOB] / means[SHARED_REGION],
        "blob_over_slowest_local": means[BLOB] / slowest_local,
    }
    report["ordering_ok"] = (
        means[SHARED_REGION] < means[LOCAL_FILE]
        and means[SHARED_REGION] < means[STREAM]
        and slowest_local < means[BLOB]
    )
    report["ordering_2x_ok"] = (
        means[LOCAL_FILE] >= 2 * means[SHARED_REGION]
        and means[STREAM] >= 2 * means[SHARED_REGION]
        and means[BLOB] >= 2 * slowest_local
    )
    return report
