"""planforge-sdk: author dataframe pipelines as decorated Python functions.

    import planforge_sdk as pf

    @pf.model()
    @pf.python("3.11", pip={"pandas": "2.0"})
    def euro_selection(
        data=pf.Model("transactions",
                      columns=["id", "usd", "country"],
                      filter="eventTime BETWEEN 2023-01-01 AND 2023-02-01"),
    ):
        return data.filter_rows(lambda row: row["country"] in {"IT", "FR"})

The DAG topology is implicit in the function inputs: a parameter default
of ``pf.Model("name")`` declares a dependency on another model or a
catalog table.  ``collect_project`` turns a module of decorated functions
into a runnable manifest; the platform persists whatever you return.
"""

from dataclasses import dataclass, field

from .table import Table

__version__ = "0.1.0"
__all__ = ["Model", "Table", "model", "python", "collect_project",
           "submit_project"]


@dataclass(frozen=True)
class Model:
    """Reference to an input table (another model or a catalog table)."""
    name: str
    columns: tuple = None
    filter: str = None

    def __init__(self, name, columns=None, filter=None):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "columns",
                           tuple(columns) if columns is not None else None)
        object.__setattr__(self, "filter", filter)


@dataclass
class ModelDecoration:
    materialize: bool = False
    memory_limit_bytes: int = None
    interpreter: str = None
    packages: dict = field(default_factory=dict)
    has_env: bool = False


def _decoration(fn) -> ModelDecoration:
    if not hasattr(fn, "_planforge"):
        fn._planforge = ModelDecoration()
    return fn._planforge


def model(materialize: bool = False, memory_limit_bytes: int = None):
    """Mark a function as a pipeline model; its name names its output."""
    def apply(fn):
        deco = _decoration(fn)
        deco.materialize = materialize
        deco.memory_limit_bytes = memory_limit_bytes
        fn._planforge_model = True
        return fn
    return apply


def python(interpreter: str, pip: dict = None):
    """Declare the interpreter and exact package pins for one function."""
    def apply(fn):
        deco = _decoration(fn)
        deco.interpreter = interpreter
        deco.packages = dict(pip or {})
        deco.has_env = True
        return fn
    return apply


from .collect import collect_project  # noqa: E402
from .client import submit_project  # noqa: E402
