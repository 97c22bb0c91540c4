"""In-sandbox runner: bridges CBUF files to the user function.

Invoked by the worker as ``planforge-shim <artifact> <model-name>`` (or
``python -m planforge_sdk.shim ...``) under the external-process contract:
inputs arrive as BPLN_INPUT_0..n-1 files, the return value is encoded to
BPLN_OUTPUT.  Print output flows to stdout, which the worker captures as
live log events.

Exit codes: 0 ok · 10 the function returned a non-table · 11 the return
value could not be encoded · 1 the function raised.
"""

import os
import sys
import traceback

from .collect import load_module
from .table import Table, TableError, read_table_file, write_table_file

EXIT_NON_TABLE = 10
EXIT_ENCODE = 11


def _gather_inputs():
    tables = []
    i = 0
    while True:
        path = os.environ.get(f"BPLN_INPUT_{i}")
        if path is None:
            return tables
        tables.append(read_table_file(path))
        i += 1


def _infer_dtype(name, values):
    import datetime
    kinds = {type(v) for v in values if v is not None}
    if kinds <= {bool}:
        return "bool"
    if kinds <= {int}:
        return "int64"
    if kinds <= {int, float}:
        return "float64"
    if kinds <= {str}:
        return "utf8"
    if kinds <= {datetime.date}:
        return "date32"
    raise TableError(f"column {name!r} mixes types {sorted(k.__name__ for k in kinds)}")


def as_table(value) -> Table:
    """Accept an SDK Table or a {column: list} mapping."""
    if isinstance(value, Table):
        return value
    if isinstance(value, dict) and value and all(
            isinstance(v, (list, tuple)) for v in value.values()):
        schema = [(name, _infer_dtype(name, list(vals)), True)
                  for name, vals in value.items()]
        return Table(schema, {n: list(v) for n, v in value.items()})
    raise TypeError(f"model must return a table, got {type(value).__name__}")


def run(artifact_path: str, model_name: str) -> int:
    pkgs = os.environ.get("BPLN_SANDBOX_PKGS")
    if pkgs and pkgs not in sys.path:
        sys.path.insert(0, pkgs)
    module = load_module(artifact_path)
    fn = getattr(module, model_name, None)
    if fn is None or not getattr(fn, "_planforge_model", False):
        print(f"no decorated model {model_name!r} in {artifact_path}",
              file=sys.stderr)
        return 1
    inputs = _gather_inputs()
    try:
        result = fn(*inputs)
    except Exception:
        traceback.print_exc()
        return 1
    try:
        table = as_table(result)
    except TypeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NON_TABLE
    except TableError as exc:
        print(f"cannot infer a table schema: {exc}", file=sys.stderr)
        return EXIT_ENCODE
    try:
        write_table_file(os.environ["BPLN_OUTPUT"], table)
    except (TableError, ValueError) as exc:
        print(f"cannot encode returned table: {exc}", file=sys.stderr)
        return EXIT_ENCODE
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: planforge-shim <artifact.py> <model-name>",
              file=sys.stderr)
        return 1
    return run(argv[0], argv[1])


if __name__ == "__main__":
    sys.exit(main())
