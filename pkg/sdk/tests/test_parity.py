"""SDK round-trip parity against the runtime (the authoring acceptance).

Boots the real worker + control plane (test-only dependency), then drives
everything through the SDK's own surfaces: collected manifests, the wire
protocol, and the in-sandbox shim.
"""

import json
import os
from types import SimpleNamespace

import pytest

planforge = pytest.importorskip("planforge")

from planforge.blob import BlobConfig, BlobStore  # noqa: E402
from planforge.catalog import Catalog  # noqa: E402
from planforge.columnar import Schema, read_colf, tables_equal  # noqa: E402
from planforge.controlplane import ControlPlane  # noqa: E402
from planforge.envbuild import SimulatedRegistry  # noqa: E402
from planforge.runtime import Worker  # noqa: E402
from planforge.runtime.server import WorkerServer  # noqa: E402
from planforge.scaffold import (  # noqa: E402
    MANIFEST as BUILTIN_MANIFEST,
    TRANSACTIONS_SCHEMA,
    transactions_table,
)

from planforge_sdk import collect_project, submit_project  # noqa: E402
from planforge_sdk.client import submit_manifest  # noqa: E402

HERE = os.path.dirname(__file__)
EXAMPLE = os.path.join(HERE, "example_pipeline.py")
INSPECT = os.path.join(HERE, "inspect_pipeline.py")


@pytest.fixture
def stack(tmp_path):
    blob = BlobStore(tmp_path / "blob",
                     BlobConfig(latency_s=0, bandwidth_bytes_per_s=0))
    catalog = Catalog(blob, chunk_rows=4)
    catalog.create_table("transactions", Schema.from_json(TRANSACTIONS_SCHEMA),
                         transactions_table())
    registry = SimulatedRegistry(tmp_path / "registry", fetch_latency_s=0)
    # the example module pins these; the sandbox mounts them
    registry.publish("pandas", "2.0", {"pandas/__init__.py": b"# pin 2.0\n"})
    registry.publish("pandas", "1.5.3", {"pandas/__init__.py": b"# pin 1.5.3\n"})
    worker = Worker(blob, tmp_path / "worker", registry=registry, chunk_rows=4)
    server = WorkerServer(worker).start()
    cp = ControlPlane(blob, server.control_endpoint, server.data_endpoint,
                      port=0).start()
    ns = SimpleNamespace(blob=blob, catalog=catalog, endpoint=cp.endpoint)
    yield ns
    cp.stop()
    server.stop()


def _read_table(ns, name):
    snap = ns.catalog.resolve(name)
    parts = [read_colf(ns.blob.get(f.path))[0] for f in snap.files]
    assert len(parts) == 1
    return parts[0]


def _semantic_view(manifest):
    """The fields authoring must preserve: names, edges, envs, materialize."""
    view = {}
    for m in manifest["models"]:
        view[m["name"]] = {
            "inputs": [{
                "table": r["table"],
                "columns": r.get("columns"),
                "filter": r.get("filter"),
            } for r in m["inputs"]],
            "env": m["env"],
            "materialize": bool(m.get("materialize", False)),
        }
    return view


def test_collected_manifest_semantically_equals_handwritten():
    collected = collect_project(EXAMPLE)
    assert _semantic_view(collected) == _semantic_view(BUILTIN_MANIFEST)


def test_sdk_pipeline_matches_builtin_run(stack):
    # builtin reference run first
    builtin = submit_manifest(stack.endpoint, BUILTIN_MANIFEST)
    assert builtin.state == "succeeded", builtin.summary
    builtin_out = _read_table(stack, "usd_by_country")

    outcome = submit_project(stack.endpoint, EXAMPLE)
    assert outcome.state == "succeeded", outcome.summary
    sdk_out = _read_table(stack, "usd_by_country")

    assert tables_equal(builtin_out, sdk_out)
    assert sdk_out.to_pydict() == {"country": ["FR", "IT"],
                                   "usd_total": [5.0, 10.0]}


def test_external_filter_equals_builtin_filter(stack):
    # builtin filter materialized under the same model name
    builtin_doc = {"models": [{
        "name": "euro_selection",
        "inputs": [{
            "table": "transactions",
            "columns": ["id", "usd", "country"],
            "filter": "eventTime BETWEEN 2023-01-01 AND 2023-02-01",
        }],
        "kind": {"builtin": {"op": "filter",
                             "expr": "country IN ('IT', 'FR', 'DE', 'ES')"}},
        "env": {"interpreter": "3.11", "packages": {}},
        "materialize": True,
    }]}
    ref = submit_manifest(stack.endpoint, builtin_doc)
    assert ref.state == "succeeded", ref.summary
    builtin_table = _read_table(stack, "euro_selection")

    outcome = submit_project(stack.endpoint, INSPECT)
    assert outcome.state == "succeeded", outcome.summary
    sdk_table = _read_table(stack, "euro_selection")
    assert tables_equal(builtin_table, sdk_table)


def test_print_fidelity_each_line_once_in_order(stack):
    outcome = submit_project(stack.endpoint, EXAMPLE)
    assert outcome.state == "succeeded"
    log_lines = [e["payload"]["line"] for e in outcome.events
                 if e["kind"] == "log"]
    expected = [
        "euro_selection saw 2 rows",
        "kept 2 european rows",
        "aggregated 2 countries",
    ]
    positions = []
    for line in expected:
        assert log_lines.count(line) == 1, (line, log_lines)
        positions.append(log_lines.index(line))
    assert positions == sorted(positions)
