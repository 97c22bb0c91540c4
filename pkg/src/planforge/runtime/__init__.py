from .events import EventSink, RunEvent
from .memory import MemoryAccount, enforce_memory
from .builtins import eval_builtin
from .worker import RunResult, Worker

__all__ = ["EventSink", "RunEvent", "MemoryAccount", "enforce_memory",
           "eval_builtin", "RunResult", "Worker"]
