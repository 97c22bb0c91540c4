"""Physical plan compilation: pinned scans, transports, writes.

The physical plan is a deterministic, topologically ordered step list:

  scan     read pinned table files through the cache, with columns and
           predicate pushed down
  exec     evaluate a builtin operator or run an external function
  publish  expose a model's output to its consumers via a transport
  write    materialize a model's output back to the catalog

Snapshots are pinned at compile time, so re-running a stored plan later
reads exactly the data it was compiled against.  Compilation is a pure
function of (logical plan, catalog heads, placement): byte-identical
output for identical inputs and run id.

Scan steps carry file paths and row counts only — chunk statistics stay in
the file footers on the data plane, so value-derived bytes never ride the
control-plane connection.
"""

from dataclasses import dataclass

from ..canon import canonical_json_bytes, digest_of
from ..columnar import Schema
from ..errors import ManifestSyntaxError, UnknownColumn, UnknownInput
from ..transport import POLICY_INTERMEDIATE, SHARED_REGION, STREAM, select_strategy
from .. import expr as expr_mod
from .logical import LogicalPlan

DEFAULT_WORKER = "w0"


@dataclass
class PhysicalPlan:
    run_id: str
    steps: list  # ordered step dicts
    pins: dict  # table -> commit_id
    placement: dict  # model -> worker

    def to_json(self, include_run_id: bool = True) -> dict:
        doc = {"steps": self.steps, "pins": self.pins, "placement": self.placement}
        if include_run_id:
            doc["run_id"] = self.run_id
        return doc

    def to_bytes(self, include_run_id: bool = True) -> bytes:
        return canonical_json_bytes(self.to_json(include_run_id))

    def digest(self) -> str:
        """Plan identity: invariant across runs of the same compilation."""
        return digest_of(self.to_json(include_run_id=False))

    @classmethod
    def from_json(cls, doc: dict) -> "PhysicalPlan":
        return cls(doc.get("run_id", ""), doc["steps"], doc["pins"], doc["placement"])

    def step(self, step_id: str) -> dict:
        for s in self.steps:
            if s["id"] == step_id:
                return s
        raise KeyError(step_id)


def _inferred_columns(model, schema: Schema):
    """Builtin models declare their column needs implicitly."""
    if model.builtin_op == "project":
        return tuple(model.project_columns)
    if model.builtin_op == "aggregate":
        agg = model.aggregate
        needed = list(agg.group_by) + [c for _, c, _ in agg.aggs]
        return tuple(n for n in schema.names if n in set(needed))
    # filter keeps every column
    return tuple(schema.names)


def _scan_spec(model, ref, snapshot, worker):
    schema = Schema.from_json(snapshot.schema)
    if ref.columns is not None:
        output_columns = ref.columns
    elif model.kind == "builtin":
        output_columns = _inferred_columns(model, schema)
    else:
        raise ManifestSyntaxError(
            f"external model {model.name!r} must declare explicit columns "
            f"for catalog input {ref.table!r}")
    for name in output_columns:
        if name not in schema:
            raise UnknownColumn(
                f"model {model.name!r}: column {name!r} not in table {ref.table!r}")
    predicate = ref.filter
    needed = set(output_columns)
    if predicate is not None:
        ast = expr_mod.type_check(expr_mod.parse_expr(predicate), schema)
        predicate = expr_mod.render(ast)
        needed |= expr_mod.referenced_columns(ast)
    fetch_columns = tuple(n for n in schema.names if n in needed)
    return {
        "kind": "scan",
        "table": ref.table,
        "commit_id": snapshot.commit_id,
        "schema": snapshot.schema,
        "files": [{"path": f.path, "rows": f.rows} for f in snapshot.files],
        "columns": list(fetch_columns),
        "output_columns": list(output_columns),
        "predicate": predicate,
        "worker": worker,
    }


def compile_physical(logical: LogicalPlan, catalog, placement: dict = None,
                     run_id: str = "", pins: dict = None) -> PhysicalPlan:
    """Compile the logical DAG against pinned catalog snapshots."""
    placement = dict(placement or {})
    for name in logical.models:
        placement.setdefault(name, DEFAULT_WORKER)
    pins = dict(pins or {})

    # resolve and pin every catalog source
    snapshots = {}
    for table in sorted(logical.sources):
        if not catalog.table_exists(table):
            raise UnknownInput(
                f"input {table!r} matches no model and no catalog table")
        snapshots[table] = catalog.resolve(table, at=pins.get(table))
    plan_pins = {t: s.commit_id for t, s in snapshots.items()}

    # scan steps, deduplicated by spec
    scan_specs = []  # (sort_key, spec)
    scan_id_by_canon = {}
    input_binding = {}  # (model, input index) -> step id or producer exec id
    for name in sorted(logical.models):
        model = logical.models[name]
        worker = placement[name]
        for idx, ref in enumerate(model.inputs):
            if ref.table in logical.models:
                input_binding[(name, idx)] = "exec:" + ref.table
                continue
            spec = _scan_spec(model, ref, snapshots[ref.table], worker)
            canon = canonical_json_bytes(spec)
            if canon not in scan_id_by_canon:
                scan_specs.append((spec["table"], canon, spec))
                scan_id_by_canon[canon] = None
            input_binding[(name, idx)] = canon

    scan_specs.sort(key=lambda item: (item[0], item[1]))
    per_table_counter = {}
    steps = []
    for table, canon, spec in scan_specs:
        k = per_table_counter.get(table, 0)
        per_table_counter[table] = k + 1
        step_id = f"scan:{table}@{k}"
        spec["id"] = step_id
        scan_id_by_canon[canon] = step_id
        steps.append(spec)

    # exec / publish / write steps in deterministic topological order
    for name in logical.topo_order():
        model = logical.models[name]
        worker = placement[name]
        exec_inputs = []
        for idx, ref in enumerate(model.inputs):
            bound = input_binding[(name, idx)]
            if isinstance(bound, bytes):
                bound = scan_id_by_canon[bound]
            entry = {"from": bound}
            if ref.table in logical.models:
                # pushdown hints on a model edge apply after acquisition
                if ref.columns is not None:
                    entry["columns"] = list(ref.columns)
                if ref.filter is not None:
                    entry["filter"] = ref.filter
            exec_inputs.append(entry)
        steps.append({
            "kind": "exec",
            "id": "exec:" + name,
            "model": name,
            "spec": model.to_json(),
            "env_hash": model.env_hash,
            "inputs": exec_inputs,
            "memory_limit_bytes": model.memory_limit_bytes,
            "worker": worker,
        })
        consumers = logical.consumers_of(name)
        if consumers:
            remote = [c for c in consumers if placement[c] != worker]
            strategy = STREAM if remote else select_strategy(
                worker, worker, 0, POLICY_INTERMEDIATE)
            assert strategy in (STREAM, SHARED_REGION)
            steps.append({
                "kind": "publish",
                "id": "publish:" + name,
                "source": "exec:" + name,
                "strategy": strategy,
                "worker": worker,
            })
        if model.materialize:
            steps.append({
                "kind": "write",
                "id": "write:" + name,
                "source": "exec:" + name,
                "table": name,
                "worker": worker,
            })

    return PhysicalPlan(run_id=run_id, steps=steps, pins=plan_pins,
                        placement=placement)
