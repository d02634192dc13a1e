"""Canonical JSON helpers shared by all serialized artifacts.

Every artifact (concept vectors, models, transcripts, verdict reports)
serializes through :func:`canonical_dumps` so that serialize -> parse ->
serialize is byte-identical: keys are sorted, separators fixed, floats
use Python's shortest round-trip repr, and NaN/inf are rejected.
"""

from __future__ import annotations

import json
from typing import Any, Iterable


def canonical_dumps(obj: Any) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def dumps_jsonl(records: Iterable[Any]) -> str:
    """One canonical JSON object per line, trailing newline included."""
    return "".join(canonical_dumps(r) + "\n" for r in records)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()
