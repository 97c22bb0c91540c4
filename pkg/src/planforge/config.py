"""Project configuration (planforge.toml)."""

import os
from dataclasses import dataclass

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib


@dataclass
class Config:
    project_dir: str
    blob_root: str
    blob_latency_s: float = 0.005
    blob_bandwidth_bytes_s: float = 500e6
    registry_root: str = ""
    registry_latency_s: float = 0.2
    worker_dir: str = ""
    parallelism: int = 1
    memory_limit_bytes: int = 2 << 30
    cache_capacity_bytes: int = 256 << 20
    chunk_rows: int = 65536
    cp_host: str = "127.0.0.1"
    cp_port: int = 7781
    worker_timeout_s: float = 5.0

    @property
    def shm_budget(self) -> int:
        return self.memory_limit_bytes // 4


def load_config(project_dir) -> Config:
    project_dir = os.path.abspath(os.fspath(project_dir))

    def resolve(path):
        return path if os.path.isabs(path) else os.path.join(project_dir, path)

    doc = {}
    toml_path = os.path.join(project_dir, "planforge.toml")
    if os.path.exists(toml_path):
        with open(toml_path, "rb") as f:
            doc = tomllib.load(f)

    blob = doc.get("blobstore", {})
    registry = doc.get("registry", {})
    worker = doc.get("worker", {})
    cp = doc.get("control_plane", {})
    return Config(
        project_dir=project_dir,
        blob_root=resolve(blob.get("root", ".planforge/blob")),
        blob_latency_s=float(blob.get("latency_ms", 5.0)) / 1e3,
        blob_bandwidth_bytes_s=float(blob.get("bandwidth_mb_s", 500.0)) * 1e6,
        registry_root=resolve(registry.get("root", ".planforge/registry")),
        registry_latency_s=float(registry.get("fetch_latency_ms", 200.0)) / 1e3,
        worker_dir=resolve(worker.get("state_dir", ".planforge/worker")),
        parallelism=int(worker.get("parallelism", 1)),
        memory_limit_bytes=int(worker.get("memory_limit_bytes", 2 << 30)),
        cache_capacity_bytes=int(worker.get("cache_capacity_bytes", 256 << 20)),
        chunk_rows=int(worker.get("chunk_rows", 65536)),
        cp_host=cp.get("host", "127.0.0.1"),
        cp_port=int(cp.get("port", 7781)),
        worker_timeout_s=float(cp.get("worker_timeout_s", 5.0)),
    )
