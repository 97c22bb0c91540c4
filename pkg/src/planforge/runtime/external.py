"""External function invocations inside assembled sandboxes.

The process contract (bit-exact):

    env BPLN_INPUT_0..n-1   paths to input files, one table each, encoded
                            as one or more concatenated CBUF frames
    env BPLN_OUTPUT         path where the process must write one table in
                            the same encoding
    env BPLN_SCRATCH        run-scoped scratch directory
    env BPLN_RUN_ID         the run id
    exit 0                  success; anything else fails the node

Standard output is captured line by line into log events while the
process runs; standard error feeds the failure diagnostics.
"""

import os
import subprocess
import sys
import threading

from ..columnar import Table, decode_frames, encode_table_frames
from ..columnar.region import BufferRegion
from ..errors import (
    MalformedFrame,
    MalformedOutput,
    OutputMissing,
    ProcessFailed,
)
from .events import EventSink


def write_table_file(path, table: Table):
    with open(path, "wb") as f:
        f.write(encode_table_frames(table))


def read_table_file(path) -> Table:
    with open(path, "rb") as f:
        payload = f.read()
    region = BufferRegion(payload)
    return decode_frames(region)


def resolve_entrypoint(entrypoint, artifact_path: str):
    """Substitute {python} and {artifact} tokens in the argv template."""
    argv = []
    for part in entrypoint:
        part = part.replace("{python}", sys.executable)
        part = part.replace("{artifact}", artifact_path)
        argv.append(part)
    return argv


def run_external(node: str, run_id: str, entrypoint, artifact_name: str,
                 artifact: bytes, sandbox, input_tables, sink: EventSink,
                 extra_env: dict = None) -> Table:
    """Spawn the node's process inside the sandbox and collect its output."""
    work = sandbox.path
    artifact_path = os.path.join(work, artifact_name)
    with open(artifact_path, "wb") as f:
        f.write(artifact)

    env = dict(os.environ)
    env["BPLN_SCRATCH"] = sandbox.scratch_dir
    env["BPLN_RUN_ID"] = run_id
    env["BPLN_SANDBOX_PKGS"] = sandbox.packages_dir
    for i, table in enumerate(input_tables):
        path = os.path.join(work, f"input_{i}.cbuf")
        write_table_file(path, table)
        env[f"BPLN_INPUT_{i}"] = path
    output_path = os.path.join(work, "output.cbuf")
    env["BPLN_OUTPUT"] = output_path
    if extra_env:
        env.update(extra_env)

    argv = resolve_entrypoint(entrypoint, artifact_path)
    proc = subprocess.Popen(argv, cwd=sandbox.scratch_dir, env=env,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                            text=True, bufsize=1)

    stderr_chunks = []

    def pump_stderr():
        for line in proc.stderr:
            stderr_chunks.append(line)

    stderr_thread = threading.Thread(target=pump_stderr, daemon=True)
    stderr_thread.start()
    # stream stdout as log events while the process is still running
    for line in proc.stdout:
        sink.log(node, line.rstrip("\n"))
    code = proc.wait()
    stderr_thread.join(timeout=5)
    if code != 0:
        raise ProcessFailed(code, "".join(stderr_chunks))
    if not os.path.exists(output_path):
        raise OutputMissing(f"node {node!r} wrote no output table")
    try:
        return read_table_file(output_path)
    except MalformedFrame as exc:
        raise MalformedOutput(f"node {node!r}: {exc}") from None
