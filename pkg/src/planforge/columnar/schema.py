"""Schemas over the closed dtype set {int64, float64, bool, utf8, date32}.

date32 is days since 1970-01-01.  Field order is significant and preserved
through every encode/decode path.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import UnsupportedDtype

DTYPES = ("int64", "float64", "bool", "utf8", "date32")

# byte width of the values buffer per slot; utf8 has no fixed width
FIXED_WIDTH = {"int64": 8, "float64": 8, "bool": 1, "date32": 4}

NUMPY_DTYPE = {
    "int64": np.dtype("<i8"),
    "float64": np.dtype("<f8"),
    "bool": np.dtype("u1"),
    "date32": np.dtype("<i4"),
}


def check_dtype(dtype: str) -> str:
    if dtype not in DTYPES:
        raise UnsupportedDtype(f"unsupported dtype {dtype!r}")
    return dtype


@dataclass(frozen=True)
class Field:
    name: str
    dtype: str
    nullable: bool = True

    def __post_init__(self):
        check_dtype(self.dtype)
        if not self.name:
            raise ValueError("field name must be non-empty")

    def to_json(self) -> dict:
        return {"name": self.name, "dtype": self.dtype, "nullable": self.nullable}

    @classmethod
    def from_json(cls, doc: dict) -> "Field":
        return cls(doc["name"], doc["dtype"], bool(doc["nullable"]))


@dataclass(frozen=True)
class Schema:
    fields: tuple

    def __init__(self, fields):
        fields = tuple(fields)
        names = [f.name for f in fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in schema: {names}")
        object.__setattr__(self, "fields", fields)

    @property
    def names(self):
        return [f.name for f in self.fields]

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(f.name == name for f in self.fields)

    def __len__(self):
        return len(self.fields)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise KeyError(name)

    def select(self, names) -> "Schema":
        return Schema([self.field(n) for n in names])

    def to_json(self) -> dict:
        return {"fields": [f.to_json() for f in self.fields]}

    @classmethod
    def from_json(cls, doc: dict) -> "Schema":
        return cls([Field.from_json(f) for f in doc["fields"]])
