"""Canonical JSON and digest helpers used for fixtures, transcripts, configs."""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    """Stable JSON encoding: sorted keys, no whitespace, plain unicode."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def short_digest(data, n: int = 16) -> str:
    return sha256_hex(data)[:n]
