"""Pipeline manifest parsing and validation.

A manifest is canonical JSON:

    {"project": "...",
     "models": [{"name": ...,
                 "inputs": [{"table": ..., "columns"?: [...], "filter"?: "..."}],
                 "kind": {"builtin": {"op": "filter", "expr": "..."}
                          | {"op": "project", "columns": [...]}
                          | {"op": "aggregate", "aggregate": {...}}}
                        | {"external": {"entrypoint": [...],
                                        "artifact": {"name", "content_b64"}}},
                 "env": {"interpreter": ..., "packages": {...}},
                 "materialize"?: bool,
                 "memory_limit_bytes"?: int}]}

Inputs may name other models or catalog tables; the DAG topology is
implicit in those references.
"""

import base64
import json
import re
from dataclasses import dataclass

from ..canon import digest_of, sha256_hex
from ..catalog import TableRef
from ..envbuild import EnvSpec, env_hash
from ..errors import BadExpr, DuplicateModel, ManifestSyntaxError
from .. import expr as expr_mod

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

AGG_FUNCS = ("sum", "count", "avg", "min", "max")


@dataclass(frozen=True)
class AggregateSpec:
    group_by: tuple
    aggs: tuple  # (func, column, output_name) triples

    def to_json(self):
        return {"group_by": list(self.group_by),
                "aggs": [{"func": f, "column": c, "as": o} for f, c, o in self.aggs]}

    @classmethod
    def from_json(cls, doc, where=""):
        group_by = tuple(doc.get("group_by", ()))
        aggs = []
        for a in doc.get("aggs", ()):
            func, column, out = a.get("func"), a.get("column"), a.get("as")
            if func not in AGG_FUNCS:
                raise ManifestSyntaxError(f"unknown aggregate func {func!r}", where)
            if not column or not out:
                raise ManifestSyntaxError("aggregate needs column and as", where)
            aggs.append((func, column, out))
        if not aggs:
            raise ManifestSyntaxError("aggregate spec has no aggregations", where)
        outs = [o for _, _, o in aggs] + list(group_by)
        if len(set(outs)) != len(outs):
            raise ManifestSyntaxError("aggregate output names must be unique", where)
        return cls(group_by, tuple(aggs))


@dataclass
class ModelSpec:
    name: str
    inputs: list  # TableRef; .table may name another model
    kind: str  # builtin | external
    builtin_op: str = None  # filter | project | aggregate
    expr_text: str = None  # canonical filter expression
    project_columns: tuple = None
    aggregate: AggregateSpec = None
    entrypoint: tuple = None
    artifact_name: str = None
    artifact: bytes = None
    env: EnvSpec = None
    materialize: bool = False
    memory_limit_bytes: int = None

    @property
    def env_hash(self) -> str:
        return env_hash(self.env)

    def content_digest(self) -> str:
        """Identity of the model's code for the result cache."""
        if self.kind == "external":
            return sha256_hex(self.artifact)
        return digest_of({
            "op": self.builtin_op,
            "expr": self.expr_text,
            "columns": list(self.project_columns) if self.project_columns else None,
            "aggregate": self.aggregate.to_json() if self.aggregate else None,
        })

    def expr_digest(self) -> str:
        """Digest of the model's declared expressions incl. input pushdowns."""
        return digest_of({
            "expr": self.expr_text,
            "inputs": [{"table": r.table,
                        "columns": list(r.columns) if r.columns else None,
                        "filter": r.filter}
                       for r in self.inputs],
        })

    def to_json(self) -> dict:
        doc = {
            "name": self.name,
            "inputs": [{"table": r.table,
                        **({"columns": list(r.columns)} if r.columns else {}),
                        **({"filter": r.filter} if r.filter else {})}
                       for r in self.inputs],
            "env": self.env.to_json(),
            "materialize": self.materialize,
        }
        if self.memory_limit_bytes is not None:
            doc["memory_limit_bytes"] = self.memory_limit_bytes
        if self.kind == "builtin":
            inner = {"op": self.builtin_op}
            if self.expr_text is not None:
                inner["expr"] = self.expr_text
            if self.project_columns is not None:
                inner["columns"] = list(self.project_columns)
            if self.aggregate is not None:
                inner["aggregate"] = self.aggregate.to_json()
            doc["kind"] = {"builtin": inner}
        else:
            doc["kind"] = {"external": {
                "entrypoint": list(self.entrypoint),
                "artifact": {
                    "name": self.artifact_name,
                    "content_b64": base64.b64encode(self.artifact).decode("ascii"),
                },
            }}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ModelSpec":
        return _parse_model(doc)


def _canon_expr(text: str, where: str) -> str:
    try:
        return expr_mod.render(expr_mod.parse_expr(text))
    except BadExpr as exc:
        raise BadExpr(f"{where}: {exc.detail}", exc.offset) from None


def _parse_ref(doc, where: str) -> TableRef:
    if not isinstance(doc, dict) or "table" not in doc:
        raise ManifestSyntaxError("input must be an object with a table name", where)
    table = doc["table"]
    if not isinstance(table, str) or not _NAME_RE.match(table):
        raise ManifestSyntaxError(f"bad input table name {table!r}", where)
    columns = doc.get("columns")
    if columns is not None:
        if (not isinstance(columns, list) or not columns
                or len(set(columns)) != len(columns)):
            raise ManifestSyntaxError("columns must be a non-empty unique list", where)
    filt = doc.get("filter")
    if filt is not None:
        filt = _canon_expr(filt, where)
    return TableRef(table, tuple(columns) if columns else None, filt)


def _parse_env(doc, where: str) -> EnvSpec:
    if not isinstance(doc, dict) or not isinstance(doc.get("interpreter"), str):
        raise ManifestSyntaxError("env needs an interpreter string", where)
    packages = doc.get("packages", {})
    if not isinstance(packages, dict):
        raise ManifestSyntaxError("env packages must be a map", where)
    for name, version in packages.items():
        if not isinstance(name, str) or not isinstance(version, str) or not version:
            raise ManifestSyntaxError(f"bad package pin {name!r}: {version!r}", where)
    return EnvSpec(doc["interpreter"], packages)


def _parse_model(doc: dict) -> ModelSpec:
    name = doc.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ManifestSyntaxError(f"bad model name {name!r}", str(name))
    where = f"model {name}"
    inputs = doc.get("inputs")
    if not isinstance(inputs, list) or not inputs:
        raise ManifestSyntaxError("model needs at least one input", where)
    refs = [_parse_ref(r, where) for r in inputs]
    env = _parse_env(doc.get("env", {}), where)
    materialize = bool(doc.get("materialize", False))
    memory_limit = doc.get("memory_limit_bytes")
    if memory_limit is not None and (not isinstance(memory_limit, int) or memory_limit < 1):
        raise ManifestSyntaxError("memory_limit_bytes must be a positive int", where)

    kind_doc = doc.get("kind")
    if not isinstance(kind_doc, dict) or len(kind_doc) != 1:
        raise ManifestSyntaxError("kind must be {builtin: …} or {external: …}", where)
    spec = ModelSpec(name=name, inputs=refs, kind="", env=env,
                     materialize=materialize, memory_limit_bytes=memory_limit)
    if "builtin" in kind_doc:
        inner = kind_doc["builtin"]
        op = inner.get("op")
        spec.kind = "builtin"
        spec.builtin_op = op
        if op == "filter":
            if "expr" not in inner:
                raise ManifestSyntaxError("filter needs expr", where)
            spec.expr_text = _canon_expr(inner["expr"], where)
            if len(refs) != 1:
                raise ManifestSyntaxError("filter takes exactly one input", where)
        elif op == "project":
            cols = inner.get("columns")
            if not isinstance(cols, list) or not cols:
                raise ManifestSyntaxError("project needs a column list", where)
            spec.project_columns = tuple(cols)
            if len(refs) != 1:
                raise ManifestSyntaxError("project takes exactly one input", where)
        elif op == "aggregate":
            if "aggregate" not in inner:
                raise ManifestSyntaxError("aggregate needs an aggregate spec", where)
            spec.aggregate = AggregateSpec.from_json(inner["aggregate"], where)
            if len(refs) != 1:
                raise ManifestSyntaxError("aggregate takes exactly one input", where)
        else:
            raise ManifestSyntaxError(f"unknown builtin op {op!r}", where)
    elif "external" in kind_doc:
        inner = kind_doc["external"]
        spec.kind = "external"
        entrypoint = inner.get("entrypoint")
        if not isinstance(entrypoint, list) or not entrypoint:
            raise ManifestSyntaxError("external needs an entrypoint argv list", where)
        spec.entrypoint = tuple(entrypoint)
        artifact = inner.get("artifact")
        if not isinstance(artifact, dict) or "content_b64" not in artifact:
            raise ManifestSyntaxError("external needs an inline artifact", where)
        spec.artifact_name = artifact.get("name", "artifact.bin")
        try:
            spec.artifact = base64.b64decode(artifact["content_b64"])
        except (ValueError, TypeError):
            raise ManifestSyntaxError("artifact content_b64 is not base64", where) from None
    else:
        raise ManifestSyntaxError("kind must be builtin or external", where)
    return spec


def parse_manifest(document):
    """Parse and validate a manifest; returns the list of ModelSpecs.

    ``document`` may be JSON text/bytes or an already-decoded dict.
    """
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ManifestSyntaxError(
                f"manifest is not valid JSON: {exc.msg}",
                f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(document, dict) or not isinstance(document.get("models"), list):
        raise ManifestSyntaxError("manifest must carry a models list")
    models = []
    seen = set()
    for doc in document["models"]:
        spec = _parse_model(doc)
        if spec.name in seen:
            raise DuplicateModel(f"duplicate model name {spec.name!r}")
        seen.add(spec.name)
        models.append(spec)
    return models


def manifest_digest(document) -> str:
    """Digest of the parsed, canonicalized manifest."""
    models = document if isinstance(document, list) else parse_manifest(document)
    return digest_of({"models": [m.to_json() for m in models]})
