"""The example project written by ``planforge init``.

A two-model pipeline over a small transactions fixture: a date-windowed
scan feeds a country filter (euro_selection), whose revenue is summed per
country (usd_by_country) and materialized back to the catalog.
"""

import json
import os

from .canon import canonical_json
from .columnar import Schema, table_from_pydict
from .errors import PlanforgeError

TRANSACTIONS_SCHEMA = {
    "fields": [
        {"name": "id", "dtype": "int64", "nullable": False},
        {"name": "usd", "dtype": "float64", "nullable": True},
        {"name": "country", "dtype": "utf8", "nullable": True},
        {"name": "eventTime", "dtype": "date32", "nullable": True},
        {"name": "client_id", "dtype": "utf8", "nullable": True},
    ]
}

TRANSACTIONS_ROWS = {
    "id": [1, 2, 3, 4, 5, 6],
    "usd": [10.0, 5.0, 2.5, 7.25, 3.5, 8.0],
    "country": ["IT", "FR", "IT", "US", "JP", "FR"],
    "eventTime": ["2023-01-15", "2023-01-20", "2023-03-05",
                  "2022-12-30", "2023-02-14", "2023-04-01"],
    "client_id": ["aa-01", "bb-02", "cc-03", "dd-04", "ee-05", "ff-06"],
}

MANIFEST = {
    "project": "euro_pipeline",
    "models": [
        {
            "name": "euro_selection",
            "inputs": [{
                "table": "transactions",
                "columns": ["id", "usd", "country"],
                "filter": "eventTime BETWEEN 2023-01-01 AND 2023-02-01",
            }],
            "kind": {"builtin": {
                "op": "filter",
                "expr": "country IN ('IT', 'FR', 'DE', 'ES')",
            }},
            "env": {"interpreter": "3.11", "packages": {"pandas": "2.0"}},
        },
        {
            "name": "usd_by_country",
            "inputs": [{"table": "euro_selection"}],
            "kind": {"builtin": {
                "op": "aggregate",
                "aggregate": {
                    "group_by": ["country"],
                    "aggs": [{"func": "sum", "column": "usd", "as": "usd_total"}],
                },
            }},
            "env": {"interpreter": "3.10", "packages": {"pandas": "1.5.3"}},
            "materialize": True,
        },
    ],
}

PROJECT_TOML = """\
# planforge project configuration
[blobstore]
root = ".planforge/blob"
latency_ms = 5.0
bandwidth_mb_s = 500.0

[registry]
root = ".planforge/registry"
fetch_latency_ms = 200.0

[worker]
state_dir = ".planforge/worker"
parallelism = 1
memory_limit_bytes = 2147483648
cache_capacity_bytes = 268435456

[control_plane]
host = "127.0.0.1"
port = 7781
worker_timeout_s = 5.0
"""


def transactions_table():
    return table_from_pydict(Schema.from_json(TRANSACTIONS_SCHEMA),
                             TRANSACTIONS_ROWS)


def write_scaffold(directory):
    """Write the example project; the directory must be empty or absent."""
    directory = os.fspath(directory)
    if os.path.exists(directory) and os.listdir(directory):
        raise PlanforgeError(f"directory {directory!r} is not empty")
    os.makedirs(os.path.join(directory, "data"), exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        f.write(json.dumps(MANIFEST, indent=2) + "\n")
    with open(os.path.join(directory, "planforge.toml"), "w") as f:
        f.write(PROJECT_TOML)
    with open(os.path.join(directory, "data", "transactions.json"), "w") as f:
        f.write(canonical_json({"table": "transactions",
                                "schema": TRANSACTIONS_SCHEMA,
                                "rows": TRANSACTIONS_ROWS}) + "\n")
    return directory


def load_fixture_tables(directory):
    """Tables declared under data/: {name: (Schema, Table)}."""
    data_dir = os.path.join(os.fspath(directory), "data")
    out = {}
    if not os.path.isdir(data_dir):
        return out
    for fn in sorted(os.listdir(data_dir)):
        if not fn.endswith(".json"):
            continue
        with open(os.path.join(data_dir, fn)) as f:
            doc = json.load(f)
        schema = Schema.from_json(doc["schema"])
        out[doc["table"]] = (schema, table_from_pydict(schema, doc["rows"]))
    return out
