"""Exception hierarchy shared across the runtime."""


class PlanforgeError(Exception):
    """Base class for all planforge errors."""


# --- columnar / framing ---

class UnsupportedDtype(PlanforgeError):
    pass


class MalformedFrame(PlanforgeError):
    pass


class ChecksumMismatch(PlanforgeError):
    pass


class MalformedFile(PlanforgeError):
    pass


class UnknownColumn(PlanforgeError):
    pass


# --- expressions ---

class BadExpr(PlanforgeError):
    def __init__(self, detail: str, offset: int = -1):
        self.detail = detail
        self.offset = offset
        suffix = f" at offset {offset}" if offset >= 0 else ""
        super().__init__(f"{detail}{suffix}")


class ExprTypeError(PlanforgeError):
    pass


# --- catalog ---

class TableExists(PlanforgeError):
    pass


class UnknownTable(PlanforgeError):
    pass


class UnknownCommit(PlanforgeError):
    pass


class SchemaMismatch(PlanforgeError):
    pass


# --- cache ---

class EntryTooLarge(PlanforgeError):
    pass


# --- transport ---

class RegionBudgetExceeded(PlanforgeError):
    pass


class HandleExpired(PlanforgeError):
    pass


# --- environments ---

class PackageNotFound(PlanforgeError):
    pass


class DigestMismatch(PlanforgeError):
    pass


# --- planning ---

class ManifestSyntaxError(PlanforgeError):
    def __init__(self, detail: str, location: str = ""):
        self.detail = detail
        self.location = location
        suffix = f" ({location})" if location else ""
        super().__init__(f"{detail}{suffix}")


class DuplicateModel(PlanforgeError):
    pass


class CycleDetected(PlanforgeError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class UnknownInput(PlanforgeError):
    pass


# --- runtime ---

class NodeFailed(PlanforgeError):
    def __init__(self, node: str, cause: str):
        self.node = node
        self.cause = cause
        super().__init__(f"node {node!r} failed: {cause}")


class ProcessFailed(PlanforgeError):
    def __init__(self, exit_code: int, stderr_tail: str):
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail
        super().__init__(f"process exited {exit_code}: {stderr_tail[-400:]}")


class OutputMissing(PlanforgeError):
    pass


class MalformedOutput(PlanforgeError):
    pass


class MemoryLimitExceeded(PlanforgeError):
    def __init__(self, node: str, requested: int, high_water: int, limit: int):
        self.node = node
        self.requested = requested
        self.high_water = high_water
        self.limit = limit
        super().__init__(
            f"node {node!r}: {high_water} + {requested} bytes exceeds limit {limit}"
        )


# --- control plane / client ---

class CompileError(PlanforgeError):
    pass


class WorkerUnavailable(PlanforgeError):
    pass


class UnknownRun(PlanforgeError):
    pass


class AuditFailed(PlanforgeError):
    def __init__(self, detail: str, offending=None):
        self.detail = detail
        self.offending = offending
        super().__init__(detail)
