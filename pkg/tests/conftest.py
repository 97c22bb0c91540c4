"""Shared fixtures: a seeded pipeline environment and a full CP stack."""

import json
from types import SimpleNamespace

import pytest

from planforge.blob import BlobConfig, BlobStore
from planforge.catalog import Catalog
from planforge.columnar import Schema
from planforge.controlplane import ControlPlane
from planforge.envbuild import SimulatedRegistry
from planforge.planner import build_logical, compile_physical, parse_manifest
from planforge.runtime import Worker
from planforge.runtime.server import WorkerServer
from planforge.scaffold import TRANSACTIONS_SCHEMA, transactions_table


@pytest.fixture
def env(tmp_path):
    """Blob + seeded catalog + worker, with zero simulated latency."""
    blob = BlobStore(tmp_path / "blob",
                     BlobConfig(latency_s=0, bandwidth_bytes_per_s=0))
    catalog = Catalog(blob, chunk_rows=4, clock=lambda: 0.0)
    catalog.create_table("transactions", Schema.from_json(TRANSACTIONS_SCHEMA),
                         transactions_table())
    registry = SimulatedRegistry(tmp_path / "registry", fetch_latency_s=0)
    worker = Worker(blob, tmp_path / "worker", registry=registry, chunk_rows=4)

    def compile_manifest(manifest, run_id="r1", pins=None, placement=None):
        doc = manifest if isinstance(manifest, (str, bytes)) else json.dumps(manifest)
        logical = build_logical(parse_manifest(doc))
        return compile_physical(logical, catalog, run_id=run_id, pins=pins,
                                placement=placement)

    ns = SimpleNamespace(tmp_path=tmp_path, blob=blob, catalog=catalog,
                         registry=registry, worker=worker,
                         compile=compile_manifest)
    yield ns
    worker.close()


@pytest.fixture
def cp_stack(env):
    """Worker server + control plane with traffic capture enabled."""
    server = WorkerServer(env.worker).start()
    cp = ControlPlane(env.blob, server.control_endpoint, server.data_endpoint,
                      port=0, worker_timeout_s=5.0, capture_traffic=True).start()
    ns = SimpleNamespace(env=env, server=server, cp=cp,
                         endpoint=cp.endpoint)
    yield ns
    cp.stop()
    server.stop()
