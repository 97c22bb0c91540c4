"""Control plane: submission flow, streaming, metadata-only audit."""

import base64
import json
import threading
import time

import pytest

from planforge.client import submit_run
from planforge.controlplane import audit_no_data
from planforge.errors import AuditFailed, CompileError, UnknownRun, WorkerUnavailable
from planforge.runtime.server import fetch_previews
from .fixtures import FIG1_MANIFEST, usd_by_country_oracle


def test_submit_streams_logs_before_complete(cp_stack):
    outcome = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))
    assert outcome.state == "succeeded"
    kinds = [e.kind for e in outcome.events]
    assert "log" in kinds
    assert all(k != "preview" for k in kinds)
    record = cp_stack.cp.get_run(outcome.run_id)
    assert record.state == "succeeded"
    assert record.plan_digest == outcome.plan_digest


def test_cycle_fails_compile_before_dispatch(cp_stack):
    doc = {"models": [
        {"name": "a", "inputs": [{"table": "b"}],
         "kind": {"builtin": {"op": "filter", "expr": "x = 1"}},
         "env": {"interpreter": "3.11", "packages": {}}},
        {"name": "b", "inputs": [{"table": "a"}],
         "kind": {"builtin": {"op": "filter", "expr": "x = 1"}},
         "env": {"interpreter": "3.11", "packages": {}}},
    ]}
    with pytest.raises(CompileError) as err:
        submit_run(cp_stack.endpoint, doc)
    assert "cycle" in str(err.value).lower()
    runs = list(cp_stack.cp.records._records.values())
    assert runs[-1].state == "failed"


def test_worker_down_raises_within_timeout(env, tmp_path):
    from planforge.controlplane import ControlPlane
    cp = ControlPlane(env.blob, "127.0.0.1:1", "127.0.0.1:1",
                      port=0, worker_timeout_s=1.0).start()
    try:
        t0 = time.perf_counter()
        with pytest.raises(WorkerUnavailable):
            submit_run(cp.endpoint, json.loads(FIG1_MANIFEST))
        assert time.perf_counter() - t0 < 5.0
    finally:
        cp.stop()


def test_get_run_unknown(cp_stack):
    with pytest.raises(UnknownRun):
        cp_stack.cp.get_run("nope")


def test_polling_states_monotone(cp_stack):
    states = []
    stop = threading.Event()
    run_holder = {}

    def poll():
        while not stop.is_set():
            run_id = run_holder.get("run_id")
            if run_id:
                try:
                    states.append(cp_stack.cp.get_run(run_id).state)
                except UnknownRun:
                    pass
            time.sleep(0.002)

    poller = threading.Thread(target=poll, daemon=True)
    poller.start()
    outcome = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST),
                         on_event=lambda e: run_holder.setdefault("run_id", e.run_id))
    run_holder["run_id"] = outcome.run_id
    states.append(cp_stack.cp.get_run(outcome.run_id).state)
    stop.set()
    poller.join(timeout=2)
    order = ["queued", "compiling", "dispatched", "running", "succeeded", "failed"]
    indices = [order.index(s) for s in states]
    assert indices == sorted(indices)
    assert states[-1] == "succeeded"


def test_concurrent_runs_both_complete(cp_stack):
    results = {}

    def run(tag):
        results[tag] = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))

    threads = [threading.Thread(target=run, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert len(results) == 3
    assert all(o.state == "succeeded" for o in results.values())
    assert len({o.run_id for o in results.values()}) == 3


def test_idempotent_submission_same_plan_digest(cp_stack):
    first = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))
    compiles_after_first = cp_stack.cp.compile_count
    second = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))
    assert first.plan_digest == second.plan_digest
    assert first.run_id != second.run_id
    assert cp_stack.cp.compile_count == compiles_after_first  # no recompilation


def test_previews_flow_via_worker_data_channel(cp_stack):
    outcome = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))
    previews = fetch_previews(outcome.preview["endpoint"], outcome.run_id,
                              outcome.preview["token"])
    assert "usd_by_country" in previews
    oracle = usd_by_country_oracle()
    assert previews["usd_by_country"]["columns"] == ["country", "usd_total"]
    assert [r[0] for r in previews["usd_by_country"]["rows"]] == oracle["country"]


def test_preview_requires_token(cp_stack):
    outcome = submit_run(cp_stack.endpoint, json.loads(FIG1_MANIFEST))
    with pytest.raises(ValueError):
        fetch_previews(outcome.preview["endpoint"], outcome.run_id, "wrong-token")


# --- the metadata-only audit ---

SENTINEL = "zq4-SENTINEL-7xk9-PAYLOAD"


def _sentinel_manifest(sentinel):
    # the sentinel rides in table data (a utf8 cell), then flows through a
    # filter that keeps its row, so it crosses every data-plane transport
    return {"models": [
        {"name": "keeper",
         "inputs": [{"table": "sentinels", "columns": ["id", "marker"]}],
         "kind": {"builtin": {"op": "filter", "expr": "id >= 0"}},
         "env": {"interpreter": "3.11", "packages": {}}},
        {"name": "sink_model",
         "inputs": [{"table": "keeper"}],
         "kind": {"builtin": {"op": "project", "columns": ["marker"]}},
         "env": {"interpreter": "3.11", "packages": {}},
         "materialize": True},
    ]}


def _seed_sentinel_table(env, sentinel):
    from planforge.columnar import Field, Schema, table_from_pydict
    schema = Schema([Field("id", "int64", False), Field("marker", "utf8", True)])
    table = table_from_pydict(schema, {"id": [0, 1],
                                       "marker": [sentinel, "plain"]})
    if env.catalog.table_exists("sentinels"):
        env.catalog.overwrite("sentinels", table)
    else:
        env.catalog.create_table("sentinels", schema, table)


def test_audit_passes_on_normal_run(cp_stack):
    _seed_sentinel_table(cp_stack.env, SENTINEL)
    outcome = submit_run(cp_stack.endpoint, _sentinel_manifest(SENTINEL))
    assert outcome.state == "succeeded"
    report = audit_no_data(cp_stack.cp.capture, SENTINEL.encode())
    assert report["passed"] and report["messages_scanned"] > 0
    # the sentinel did reach the client via the worker data channel
    previews = fetch_previews(outcome.preview["endpoint"], outcome.run_id,
                              outcome.preview["token"])
    assert SENTINEL in json.dumps(previews)


def test_audit_negative_control_misroute(cp_stack):
    _seed_sentinel_table(cp_stack.env, SENTINEL)
    outcome = submit_run(cp_stack.endpoint, _sentinel_manifest(SENTINEL),
                         misroute_previews=True)
    assert outcome.state == "succeeded"
    with pytest.raises(AuditFailed):
        audit_no_data(cp_stack.cp.capture, SENTINEL.encode())


def test_audit_empty_capture_vacuously_passes():
    report = audit_no_data([], b"anything")
    assert report["passed"] and report["messages_scanned"] == 0


def test_streaming_liveness_two_node_pipeline(cp_stack):
    chatty = "print('hello from node one', flush=True)\n" \
             "import os, shutil\n" \
             "shutil.copyfile(os.environ['BPLN_INPUT_0'], os.environ['BPLN_OUTPUT'])\n"
    sleeper = "import os, shutil, time\n" \
              "time.sleep(0.5)\n" \
              "shutil.copyfile(os.environ['BPLN_INPUT_0'], os.environ['BPLN_OUTPUT'])\n"

    def ext(name, script, inputs):
        return {"name": name, "inputs": inputs,
                "kind": {"external": {
                    "entrypoint": ["{python}", "{artifact}"],
                    "artifact": {"name": f"{name}.py",
                                 "content_b64": base64.b64encode(
                                     script.encode()).decode()}}},
                "env": {"interpreter": "3.11", "packages": {}}}

    doc = {"models": [
        ext("one", chatty, [{"table": "transactions", "columns": ["id"]}]),
        ext("two", sleeper, [{"table": "one"}]),
    ]}
    t0 = time.perf_counter()
    arrivals = {}

    def record(event):
        if event.kind == "log" and "hello" in event.payload.get("line", ""):
            arrivals["hello"] = time.perf_counter() - t0

    outcome = submit_run(cp_stack.endpoint, doc, on_event=record)
    total = time.perf_counter() - t0
    assert outcome.state == "succeeded"
    assert "hello" in arrivals
    # node two sleeps 500 ms after node one logged: live streaming means
    # the log beat RunComplete by at least 400 ms
    assert total - arrivals["hello"] >= 0.4, (arrivals, total)
