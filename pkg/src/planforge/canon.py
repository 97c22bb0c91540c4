"""Canonical JSON and content digests.

Every persisted or hashed document in the system goes through
``canonical_json`` so that equal values always produce identical bytes:
sorted keys, minimal separators, UTF-8, no NaN/Infinity.
"""

import hashlib
import json


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonical_json_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj) -> str:
    """sha256 of the canonical JSON encoding of ``obj``."""
    return sha256_hex(canonical_json_bytes(obj))
