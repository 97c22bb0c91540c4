from .manifest import AggregateSpec, ModelSpec, parse_manifest
from .logical import LogicalPlan, build_logical
from .physical import PhysicalPlan, compile_physical

__all__ = [
    "AggregateSpec", "ModelSpec", "parse_manifest",
    "LogicalPlan", "build_logical",
    "PhysicalPlan", "compile_physical",
]
