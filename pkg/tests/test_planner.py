"""Plan compiler: manifest parsing, topology reconstruction, compilation."""

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planforge.blob import BlobConfig, BlobStore
from planforge.catalog import Catalog
from planforge.columnar import Field, Schema, table_from_pydict
from planforge.errors import (
    BadExpr,
    CycleDetected,
    DuplicateModel,
    ManifestSyntaxError,
    UnknownColumn,
    UnknownInput,
)
from planforge.planner import build_logical, compile_physical, parse_manifest

from .fixtures import FIG1_MANIFEST, transactions_table

TRANSACTIONS_SCHEMA = Schema([
    Field("id", "int64", False),
    Field("usd", "float64", True),
    Field("country", "utf8", True),
    Field("eventTime", "date32", True),
    Field("client_id", "utf8", True),
])


@pytest.fixture
def catalog(tmp_path):
    blob = BlobStore(tmp_path / "blob", BlobConfig(latency_s=0, bandwidth_bytes_per_s=0))
    cat = Catalog(blob, chunk_rows=4, clock=lambda: 0.0)
    cat.create_table("transactions", TRANSACTIONS_SCHEMA, transactions_table())
    return cat


def _model(name, inputs, op="filter", expr="id > 0", **kw):
    kind = {"builtin": {"op": op, "expr": expr}}
    if op == "project":
        kind = {"builtin": {"op": op, "columns": kw.pop("columns", ["id"])}}
    if op == "aggregate":
        kind = {"builtin": {"op": op, "aggregate": kw.pop("aggregate")}}
    if op == "external" or len(inputs) > 1:
        import base64
        kind = {"external": {
            "entrypoint": ["{python}", "{artifact}"],
            "artifact": {"name": f"{name}.py",
                         "content_b64": base64.b64encode(b"pass\n").decode()},
        }}
    return {
        "name": name,
        "inputs": [{"table": t} if isinstance(t, str) else t for t in inputs],
        "kind": kind,
        "env": {"interpreter": "3.11", "packages": {}},
        **kw,
    }


def test_fig1_manifest_parses_to_two_models():
    models = parse_manifest(FIG1_MANIFEST)
    assert [m.name for m in models] == ["euro_selection", "usd_by_country"]
    euro = models[0]
    assert euro.kind == "builtin" and euro.builtin_op == "filter"
    assert euro.inputs[0].table == "transactions"
    assert euro.inputs[0].columns == ("id", "usd", "country")
    assert "eventTime" in euro.inputs[0].filter
    agg = models[1]
    assert agg.materialize is True
    assert agg.aggregate.group_by == ("country",)
    assert agg.aggregate.aggs == (("sum", "usd", "usd_total"),)


def test_duplicate_model_rejected():
    doc = {"project": "p", "models": [_model("a", ["t"]), _model("a", ["t"])]}
    with pytest.raises(DuplicateModel):
        parse_manifest(json.dumps(doc))


def test_bad_expr_reports_offset():
    doc = {"project": "p",
           "models": [_model("a", ["t"], expr="usd BETWEEN AND 3")]}
    with pytest.raises(BadExpr) as err:
        parse_manifest(json.dumps(doc))
    assert err.value.offset == 12


def test_malformed_json_reports_location():
    with pytest.raises(ManifestSyntaxError) as err:
        parse_manifest('{"models": [,]}')
    assert "line 1" in err.value.location


def test_diamond_topology_and_order_count():
    models = parse_manifest(json.dumps({"models": [
        _model("a", ["src"]),
        _model("b", ["a"]),
        _model("c", ["a"]),
        _model("d", [{"table": "b"}, {"table": "c"}]),
    ]}))
    logical = build_logical(models)
    assert logical.edges == {("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")}
    assert logical.sources == {"src"}
    # oracle: brute-force count of permutations respecting the edges
    names = [m.name for m in models]
    valid = 0
    for perm in itertools.permutations(names):
        pos = {n: i for i, n in enumerate(perm)}
        if all(pos[p] < pos[c] for p, c in logical.edges):
            valid += 1
    assert valid == 2
    assert logical.topo_order() == ["a", "b", "c", "d"]


def test_single_model_catalog_source_only():
    logical = build_logical(parse_manifest(json.dumps(
        {"models": [_model("a", ["transactions"])]})))
    assert logical.edges == set()
    assert logical.sources == {"transactions"}


def test_cycle_detected():
    models = parse_manifest(json.dumps({"models": [
        _model("a", ["b"]), _model("b", ["a"]),
    ]}))
    with pytest.raises(CycleDetected) as err:
        build_logical(models)
    assert set(err.value.cycle) >= {"a", "b"}


def test_compile_fig1_single_worker_steps(catalog):
    logical = build_logical(parse_manifest(FIG1_MANIFEST))
    plan = compile_physical(logical, catalog, run_id="r1")
    kinds = [(s["kind"], s.get("model") or s.get("table") or s.get("source"))
             for s in plan.steps]
    assert kinds == [
        ("scan", "transactions"),
        ("exec", "euro_selection"),
        ("publish", "exec:euro_selection"),
        ("exec", "usd_by_country"),
        ("write", "usd_by_country"),
    ]
    scan = plan.steps[0]
    assert scan["output_columns"] == ["id", "usd", "country"]
    assert scan["columns"] == ["id", "usd", "country", "eventTime"]  # + predicate col
    assert scan["predicate"] is not None
    assert plan.steps[2]["strategy"] == "shared-region"
    assert plan.pins["transactions"] == catalog.resolve("transactions").commit_id


def test_compile_two_workers_streams(catalog):
    logical = build_logical(parse_manifest(FIG1_MANIFEST))
    plan = compile_physical(logical, catalog,
                            placement={"usd_by_country": "w1"}, run_id="r1")
    publish = plan.step("publish:euro_selection")
    assert publish["strategy"] == "stream"


def test_compile_deterministic_bytes(catalog):
    logical = build_logical(parse_manifest(FIG1_MANIFEST))
    blobs = {compile_physical(logical, catalog, run_id="fixed").to_bytes()
             for _ in range(3)}
    assert len(blobs) == 1


def _more_transactions():
    return table_from_pydict(TRANSACTIONS_SCHEMA, {
        "id": [7, 8], "usd": [1.0, 2.0], "country": ["DE", "ES"],
        "eventTime": ["2023-01-25", "2023-01-26"], "client_id": ["gg-07", "hh-08"],
    })


def test_pins_point_at_compile_time_commit(catalog):
    logical = build_logical(parse_manifest(FIG1_MANIFEST))
    plan = compile_physical(logical, catalog, run_id="r1")
    pinned = plan.pins["transactions"]
    catalog.append("transactions", _more_transactions())
    assert catalog.resolve("transactions").commit_id != pinned
    assert plan.pins["transactions"] == pinned
    pinned_files = {f["path"] for s in plan.steps if s["kind"] == "scan"
                    for f in s["files"]}
    now_files = {f.path for f in catalog.resolve("transactions").files}
    assert pinned_files < now_files


def test_explicit_pins_override_head(catalog):
    first = catalog.resolve("transactions").commit_id
    catalog.append("transactions", _more_transactions())
    logical = build_logical(parse_manifest(FIG1_MANIFEST))
    plan = compile_physical(logical, catalog, run_id="r1",
                            pins={"transactions": first})
    assert plan.pins["transactions"] == first


def test_unknown_input_at_compile(catalog):
    logical = build_logical(parse_manifest(json.dumps(
        {"models": [_model("a", ["no_such_table"])]})))
    with pytest.raises(UnknownInput):
        compile_physical(logical, catalog, run_id="r1")


def test_unknown_column_at_compile(catalog):
    logical = build_logical(parse_manifest(json.dumps({"models": [
        _model("a", [{"table": "transactions", "columns": ["id", "ghost"]}]),
    ]})))
    with pytest.raises(UnknownColumn):
        compile_physical(logical, catalog, run_id="r1")


def test_external_requires_explicit_columns(catalog):
    import base64
    doc = {"models": [{
        "name": "ext",
        "inputs": [{"table": "transactions"}],
        "kind": {"external": {
            "entrypoint": ["python", "{artifact}"],
            "artifact": {"name": "f.py",
                         "content_b64": base64.b64encode(b"pass").decode()},
        }},
        "env": {"interpreter": "3.11", "packages": {}},
    }]}
    logical = build_logical(parse_manifest(json.dumps(doc)))
    with pytest.raises(ManifestSyntaxError):
        compile_physical(logical, catalog, run_id="r1")


def test_builtin_scan_columns_inferred(catalog):
    doc = {"models": [_model("agg", ["transactions"], op="aggregate",
                             aggregate={"group_by": ["country"],
                                        "aggs": [{"func": "sum", "column": "usd",
                                                  "as": "usd_total"}]})]}
    logical = build_logical(parse_manifest(json.dumps(doc)))
    plan = compile_physical(logical, catalog, run_id="r1")
    scan = plan.steps[0]
    assert scan["output_columns"] == ["usd", "country"]  # schema order


# --- random DAG properties ---

@st.composite
def random_dags(draw):
    n = draw(st.integers(1, 8))
    names = [f"m{i}" for i in range(n)]
    inputs = {}
    for i, name in enumerate(names):
        if i == 0:
            inputs[name] = ["src"]
        else:
            k = draw(st.integers(1, min(3, i + 1)))
            pool = names[:i] + ["src"]
            chosen = draw(st.permutations(pool))[:k]
            inputs[name] = list(chosen)
    return inputs


def _manifest_for(inputs):
    return json.dumps({"models": [
        _model(name, parents) for name, parents in inputs.items()
    ]})


@settings(max_examples=100, deadline=None)
@given(random_dags())
def test_topology_matches_reference_scan(inputs):
    models = parse_manifest(_manifest_for(inputs))
    logical = build_logical(models)
    # naive reference reconstruction straight off the declared inputs
    names = set(inputs)
    expected_edges = {(p, c) for c, parents in inputs.items()
                      for p in parents if p in names}
    expected_sources = {p for parents in inputs.values()
                        for p in parents if p not in names}
    assert logical.edges == expected_edges
    assert logical.sources == expected_sources


@settings(max_examples=100, deadline=None)
@given(random_dags(), st.data())
def test_injected_back_edges_always_rejected(inputs, data):
    names = [n for n in inputs if n != "src"]
    if len(names) < 2:
        return
    # close a cycle: make `late` consume `early`, then `early` consume `late`
    late = data.draw(st.sampled_from(names[1:]))
    early = data.draw(st.sampled_from(names[:names.index(late)]))
    if early not in inputs[late]:
        inputs[late] = inputs[late] + [early]
    inputs[early] = inputs[early] + [late]
    models = parse_manifest(_manifest_for(inputs))
    with pytest.raises(CycleDetected):
        build_logical(models)
