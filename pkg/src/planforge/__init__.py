"""planforge: a miniature FaaS runtime for dataframe pipelines.

Declarative DAG manifests are compiled into physical plans and executed in
ephemeral per-invocation sandboxes on a worker.  Intermediate tables move
zero-copy where possible and columns are cached differentially against an
immutable-commit catalog.
"""

__version__ = "0.1.0"
