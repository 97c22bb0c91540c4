"""Plan execution on a worker.

Scans go through the differential column cache and ranged blob reads;
builtins evaluate natively; external models run inside freshly assembled
sandboxes.  Every exec step consults the result cache first, so re-running
an unchanged pipeline touches neither the blob store nor the operators.
Scan I/O is demand-driven: a scan step registers a memoized thunk and the
bytes move only when a cache-missing consumer actually needs them.

Failure of a node skips everything reachable from it; independent branches
still run.  Events stream through the sink as they happen.
"""

import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .. import expr as expr_mod
from ..blob import BlobByteSource, BlobStore
from ..cache import Cache, ResultKey
from ..catalog import Catalog
from ..columnar import (
    RecordBatch,
    RegionRegistry,
    Schema,
    Table,
    read_colf,
    write_colf,
)
from ..columnar.cbuf import decode_column
from ..columnar.colf import ColfReader, ReadReport, read_footer
from ..envbuild import EnvSpec, PackageCache, SimulatedRegistry, assemble, teardown
from ..errors import PlanforgeError
from ..planner.manifest import ModelSpec
from ..transport import (
    LOCAL_FILE,
    SHARED_REGION,
    TransportContext,
    acquire,
    publish,
)
from .builtins import eval_builtin, filter_table, project_table
from .events import EventSink, KIND_DONE, KIND_ERROR, KIND_PREVIEW
from .external import run_external
from .memory import MemoryAccount, enforce_memory

PREVIEW_ROWS = 10


@dataclass
class NodeResult:
    node: str
    status: str = "pending"  # running|succeeded|cached|failed|skipped
    duration_s: float = 0.0
    rows: int = None
    from_cache: bool = False
    memory_high_water: int = 0
    error: str = None

    def to_json(self):
        return dict(self.__dict__)


@dataclass
class RunResult:
    run_id: str
    state: str
    nodes: dict  # name -> NodeResult
    written: dict  # model -> commit_id
    duration_s: float
    cache_stats: dict
    scan_bytes_fetched: int
    plan_digest: str

    def summary(self) -> dict:
        return {
            "run_id": self.run_id,
            "state": self.state,
            "nodes": {n: r.to_json() for n, r in self.nodes.items()},
            "written": self.written,
            "duration_s": self.duration_s,
            "cache_stats": self.cache_stats,
            "scan_bytes_fetched": self.scan_bytes_fetched,
            "plan_digest": self.plan_digest,
        }


def _jsonable_rows(table: Table, limit: int):
    import datetime
    import math
    data = table.to_pydict()
    names = list(data)
    n = min(limit, table.rows)
    rows = []
    for i in range(n):
        row = []
        for name in names:
            v = data[name][i]
            if isinstance(v, datetime.date):
                v = v.isoformat()
            elif isinstance(v, float) and not math.isfinite(v):
                v = None
            row.append(v)
        rows.append(row)
    return {"columns": names, "rows": rows}


class _RunState:
    def __init__(self):
        self.results = {}  # node -> NodeResult
        self.out_tables = {}  # model -> Table
        self.handles = {}  # "exec:<model>" -> TransportHandle
        self.result_digests = {}  # model -> result key digest
        self.scan_tables = {}  # scan step id -> Table
        self.scan_lock = threading.Lock()
        self.written = {}
        self.report = ReadReport()


class Worker:
    """Single-tenant worker: the only component that touches table bytes."""

    def __init__(self, blob: BlobStore, state_dir, registry: SimulatedRegistry = None,
                 parallelism: int = 1, memory_limit_bytes: int = 2 << 30,
                 cache_capacity_bytes: int = 256 << 20, chunk_rows: int = 65536,
                 worker_id: str = "w0"):
        self.blob = blob
        self.state_dir = os.fspath(state_dir)
        os.makedirs(self.state_dir, exist_ok=True)
        self.worker_id = worker_id
        self.parallelism = max(1, parallelism)
        self.memory_limit_bytes = memory_limit_bytes
        self.shm_budget = memory_limit_bytes // 4
        self.chunk_rows = chunk_rows
        self.catalog = Catalog(blob, chunk_rows=chunk_rows)
        self.cache = Cache(cache_capacity_bytes,
                           state_dir=os.path.join(self.state_dir, "cache"))
        self.registry = registry
        self.pkg_cache = PackageCache(os.path.join(self.state_dir, "pkgcache"))
        self.sandbox_root = os.path.join(self.state_dir, "sandboxes")
        self.results_dir = os.path.join(self.state_dir, "cache", "results")
        os.makedirs(self.results_dir, exist_ok=True)
        self.meta_cache = {}  # blob path -> ColfMeta (files are immutable)
        self.previews = {}  # run_id -> {node: preview payload}
        self._meta_lock = threading.Lock()

    def close(self):
        self.cache.close()

    # --- scans (differential column fetch) ---

    def _file_meta(self, path: str):
        with self._meta_lock:
            meta = self.meta_cache.get(path)
        if meta is None:
            meta = read_footer(BlobByteSource(self.blob, path))
            with self._meta_lock:
                self.meta_cache[path] = meta
        return meta

    def _scan_table(self, plan, step_id: str, state: _RunState) -> Table:
        with state.scan_lock:
            if step_id in state.scan_tables:
                return state.scan_tables[step_id]
            table = self._run_scan(plan.step(step_id), state)
            state.scan_tables[step_id] = table
            return table

    def _run_scan(self, step, state: _RunState) -> Table:
        table_name = step["table"]
        commit_id = step["commit_id"]
        fetch_cols = step["columns"]
        schema = Schema.from_json(step["schema"])
        fetch_schema = schema.select(fetch_cols)
        predicate = step.get("predicate")
        ast = None
        if predicate:
            ast = expr_mod.type_check(expr_mod.parse_expr(predicate), schema)

        hits, misses = self.cache.probe_columns(table_name, commit_id, fetch_cols)
        cached_entries = {c: self.cache.get_column(table_name, commit_id, c)
                          for c in hits}
        # a cached entry may have been evicted between probe and get
        for c, entry in list(cached_entries.items()):
            if entry is None:
                hits.discard(c)
                misses.add(c)
                del cached_entries[c]

        fetched = {c: {} for c in misses}  # col -> path -> [chunk buffers]
        fetched_sizes = {c: 0 for c in misses}
        batches = []
        pruned_any = False
        for f in step["files"]:
            path = f["path"]
            meta = self._file_meta(path)
            reader = ColfReader(BlobByteSource(self.blob, path), meta)
            surviving = [ci for ci in range(len(meta.chunks))
                         if ast is None or reader.chunk_survives(ci, ast)]
            if len(surviving) != len(meta.chunks):
                pruned_any = True
            per_col = {}
            for col in fetch_cols:
                if col in hits:
                    chunk_buffers = cached_entries[col]["files"][path]
                    per_col[col] = {ci: chunk_buffers[ci] for ci in surviving}
                    self.cache.note_saved_bytes(sum(
                        sum(len(b) for b in chunk_buffers[ci].values())
                        for ci in surviving))
                else:
                    got = {}
                    for ci in surviving:
                        buffers = reader.read_chunk_column(ci, col, state.report)
                        got[ci] = buffers
                        fetched_sizes[col] += sum(len(b) for b in buffers.values())
                    per_col[col] = got
                    fetched[col][path] = got
            for ci in surviving:
                rows = meta.chunks[ci].rows
                cols = [decode_column(fetch_schema.field(c),
                                      rows, per_col[c][ci])
                        for c in fetch_cols]
                batches.append(RecordBatch(fetch_schema, cols, rows=rows))

        # only complete column reads enter the cache: a pruned read would
        # poison later full scans with missing chunks
        if misses and not pruned_any:
            entries = {}
            for col in misses:
                entries[col] = ({"files": fetched[col]}, fetched_sizes[col])
            self.cache.insert_columns(table_name, commit_id, entries)

        out = Table(fetch_schema, batches)
        if ast is not None:
            out = filter_table(out, ast)
        if step["output_columns"] != fetch_cols:
            out = project_table(out, step["output_columns"])
        return out

    # --- exec ---

    def _result_key(self, plan, step, state: _RunState) -> ResultKey:
        spec = ModelSpec.from_json(step["spec"])
        versions = []
        for entry in step["inputs"]:
            src = entry["from"]
            if src.startswith("scan:"):
                versions.append(plan.step(src)["commit_id"])
            else:
                versions.append(state.result_digests[src.split(":", 1)[1]])
        return ResultKey(spec.content_digest(), tuple(sorted(versions)),
                         step["env_hash"], spec.expr_digest())

    def _acquire_input(self, plan, entry, state: _RunState, ctx,
                       account: MemoryAccount) -> Table:
        src = entry["from"]
        if src.startswith("scan:"):
            table = self._scan_table(plan, src, state)
        else:
            handle = state.handles[src]
            table = acquire(handle, ctx)
            if handle.strategy != SHARED_REGION:
                # materialized copy: charge the consumer
                enforce_memory(account, table.nbytes())
        if entry.get("filter"):
            table = filter_table(table, entry["filter"])
        if entry.get("columns"):
            table = project_table(table, entry["columns"])
        return table

    def _exec_node(self, plan, step, state: _RunState, ctx, sink: EventSink,
                   account: MemoryAccount) -> Table:
        node = step["model"]
        spec = ModelSpec.from_json(step["spec"])
        key = self._result_key(plan, step, state)
        state.result_digests[node] = key.digest()

        handle = self.cache.probe_result(key)
        if handle is not None:
            table, _ = read_colf(handle["path"])
            # a hit still materializes the table for downstream use
            enforce_memory(account, table.nbytes())
            sink.log(node, f"result cache hit ({table.rows} rows)")
            state.results[node].from_cache = True
            return table

        tables = [self._acquire_input(plan, entry, state, ctx, account)
                  for entry in step["inputs"]]
        if spec.kind == "builtin":
            table = eval_builtin(spec.builtin_op, tables, expr=spec.expr_text,
                                 project_columns=spec.project_columns,
                                 aggregate=spec.aggregate)
            sink.log(node, f"{spec.builtin_op} produced {table.rows} rows")
        else:
            env = EnvSpec.from_json(step["spec"]["env"])
            sandbox = assemble(env, self.pkg_cache, self.registry,
                               self.sandbox_root)
            sink.log(node, f"sandbox assembled in {sandbox.duration_s * 1e3:.1f} ms")
            try:
                table = run_external(node, ctx.run_id, spec.entrypoint,
                                     spec.artifact_name, spec.artifact,
                                     sandbox, tables, sink)
            finally:
                teardown(sandbox)
            sink.log(node, f"external function produced {table.rows} rows")
        enforce_memory(account, table.nbytes())

        spill_path = os.path.join(self.results_dir, f"{key.digest()}.colf")
        payload = write_colf(table, self.chunk_rows)
        with open(spill_path, "wb") as f:
            f.write(payload)
        self.cache.insert_result(key, {"path": spill_path}, len(payload))
        return table

    # --- plan execution ---

    def _deps_of(self, step) -> list:
        if step["kind"] == "scan":
            return []
        if step["kind"] == "exec":
            deps = []
            for entry in step["inputs"]:
                src = entry["from"]
                if src.startswith("scan:"):
                    deps.append(src)
                else:
                    deps.append("publish:" + src.split(":", 1)[1])
            return deps
        return [step["source"]]  # publish / write

    def _upstream_models(self, step) -> list:
        if step["kind"] == "exec":
            return [e["from"].split(":", 1)[1] for e in step["inputs"]
                    if not e["from"].startswith("scan:")]
        if step["kind"] in ("publish", "write"):
            return [step["source"].split(":", 1)[1]]
        return []

    def execute_plan(self, plan, sink: EventSink,
                     limits: dict = None) -> RunResult:
        t_start = time.perf_counter()
        limits = limits or {}
        run_id = plan.run_id or uuid.uuid4().hex
        state = _RunState()
        self.previews.setdefault(run_id, {})
        ctx = TransportContext(run_id, RegionRegistry(),
                               spill_dir=os.path.join(self.state_dir, "spills", run_id),
                               blob=self.blob, shm_budget=self.shm_budget,
                               chunk_rows=self.chunk_rows)
        accounts = {}
        for step in plan.steps:
            if step["kind"] == "exec":
                node = step["model"]
                limit = limits.get(node, step.get("memory_limit_bytes"))
                accounts[node] = MemoryAccount(node, limit)
                state.results[node] = NodeResult(node)

        def run_step(step):
            kind = step["kind"]
            if kind == "scan":
                return  # demand-driven: consumers pull through the cache
            source_model = (step["model"] if kind == "exec"
                            else step["source"].split(":", 1)[1])
            upstream_bad = any(
                state.results[m].status in ("failed", "skipped")
                for m in self._upstream_models(step))
            if kind == "exec":
                node = step["model"]
                result = state.results[node]
                if upstream_bad:
                    result.status = "skipped"
                    sink.state(node, "skipped")
                    return
                sink.state(node, "running")
                result.status = "running"
                t0 = time.perf_counter()
                try:
                    table = self._exec_node(plan, step, state, ctx, sink,
                                            accounts[node])
                    state.out_tables[node] = table
                    result.rows = table.rows
                    result.status = "cached" if result.from_cache else "succeeded"
                    sink.state(node, result.status)
                except PlanforgeError as exc:
                    result.status = "failed"
                    result.error = f"{type(exc).__name__}: {exc}"
                    sink.emit(node, KIND_ERROR, {"error": result.error})
                    sink.state(node, "failed")
                finally:
                    result.duration_s = time.perf_counter() - t0
                    result.memory_high_water = accounts[node].high_water
                return
            if upstream_bad or state.results[source_model].status in (
                    "failed", "skipped"):
                return
            table = state.out_tables[source_model]
            if kind == "publish":
                strategy = step["strategy"]
                if strategy == SHARED_REGION and table.nbytes() > ctx.shm_budget:
                    strategy = LOCAL_FILE
                    sink.log(source_model,
                             "output exceeds shared-memory budget; spilling")
                state.handles["exec:" + source_model] = publish(table, strategy, ctx)
                return
            # write: materialize back to the catalog
            try:
                commit = self.catalog.overwrite(step["table"], table)
            except PlanforgeError as exc:
                result = state.results[source_model]
                result.status = "failed"
                result.error = f"{type(exc).__name__}: {exc}"
                sink.emit(source_model, KIND_ERROR, {"error": result.error})
                sink.state(source_model, "failed")
                return
            state.written[source_model] = commit.commit_id
            preview = _jsonable_rows(table, PREVIEW_ROWS)
            self.previews[run_id][source_model] = preview
            # preview events carry row bytes; the server keeps them off the
            # control channel and serves them on the data endpoint instead
            sink.emit(source_model, KIND_PREVIEW, preview)
            sink.log(source_model,
                     f"materialized {step['table']} at {commit.commit_id[:12]}")

        self._run_scheduled(plan.steps, run_step)

        exec_results = state.results.values()
        run_state = ("succeeded" if all(
            r.status in ("succeeded", "cached") for r in exec_results)
            else "failed")
        ctx.teardown()
        result = RunResult(
            run_id=run_id,
            state=run_state,
            nodes=dict(state.results),
            written=dict(state.written),
            duration_s=time.perf_counter() - t_start,
            cache_stats=self.cache.stats(),
            scan_bytes_fetched=state.report.bytes_read,
            plan_digest=plan.digest(),
        )
        sink.emit("", KIND_DONE, {"state": run_state})
        return result

    def _run_scheduled(self, steps, run_step):
        """Dependency-driven execution, ``parallelism`` steps in flight."""
        if self.parallelism == 1:
            for step in steps:
                run_step(step)
            return
        order = {s["id"]: i for i, s in enumerate(steps)}
        by_id = {s["id"]: s for s in steps}
        pending = {s["id"]: set(self._deps_of(s)) for s in steps}
        done = set()
        errors = []
        cond = threading.Condition()
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            in_flight = {}

            def finish(step_id, fut):
                exc = fut.exception()
                with cond:
                    done.add(step_id)
                    in_flight.pop(step_id, None)
                    if exc is not None:
                        errors.append(exc)
                    cond.notify_all()

            with cond:
                while len(done) < len(steps):
                    ready = sorted(
                        (sid for sid, deps in pending.items()
                         if deps <= done and sid not in in_flight
                         and sid not in done),
                        key=order.get)
                    for sid in ready:
                        fut = pool.submit(run_step, by_id[sid])
                        in_flight[sid] = fut
                        fut.add_done_callback(
                            lambda f, s=sid: finish(s, f))
                    cond.wait(timeout=0.5)
        if errors:
            raise errors[0]
