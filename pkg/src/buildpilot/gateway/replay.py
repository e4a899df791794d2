"""Record/replay fixtures so every agent run can be reproduced offline.

Archive layout (one directory per recorded project/run):

    meta.json        format_version, free-form run metadata
    chat/<tag>.jsonl one JSON object per recorded completion
    search.jsonl     optional canned web-search results (read by the solver)

Chat records carry the raw tag inside the record, so the per-tag filenames
are cosmetic. Lookup is keyed by (tag, per-tag sequence index) first; if the
sequence for a tag is exhausted, a prompt-digest match against that tag's
records is tried before giving up with FixtureMiss. Replay never touches the
network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from pathlib import Path

import numpy as np

from buildpilot.digests import canonical_json, sha256_hex
from buildpilot.errors import CorruptFixture, FixtureMiss
from buildpilot.gateway.types import (
    ChatRequest,
    ChatResponse,
    EmbeddingResult,
    ModelProfile,
    ToolCall,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_REQUIRED_FIELDS = ("tag", "seq", "prompt_digest", "text", "input_tokens", "output_tokens")


def prompt_digest(request: ChatRequest) -> str:
    """Digest of the conversation content; ignores sampling parameters."""
    return sha256_hex(canonical_json([[m.role, m.content] for m in request.messages]))


def deterministic_embedding(text: str, dim: int) -> np.ndarray:
    """Unit vector derived only from sha256(text); stable across processes."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim).astype(np.float32)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec = np.ones(dim, dtype=np.float32)
        norm = float(np.linalg.norm(vec))
    return vec / norm


class ReplayArchive:
    """Parsed, validated fixture archive. Read-only after load."""

    def __init__(self, root: Path, records: dict[str, list[dict]], meta: dict):
        self.root = root
        self.records = records
        self.meta = meta

    @classmethod
    def load(cls, root: Path | str) -> "ReplayArchive":
        root = Path(root)
        if not root.is_dir():
            # absence means nothing was recorded, which is a miss, not rot
            raise FixtureMiss(message=f"no replay archive at {root}")
        meta = {"format_version": FORMAT_VERSION}
        meta_path = root / "meta.json"
        if meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except ValueError as exc:
                raise CorruptFixture(f"{meta_path}: invalid JSON: {exc}") from exc
            if meta.get("format_version") != FORMAT_VERSION:
                raise CorruptFixture(
                    f"{meta_path}: unsupported format_version {meta.get('format_version')!r}"
                )
        by_tag: dict[str, list[dict]] = {}
        seen: set[tuple[str, int]] = set()
        chat_dir = root / "chat"
        for path in sorted(chat_dir.glob("*.jsonl")) if chat_dir.is_dir() else []:
            for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except ValueError as exc:
                    raise CorruptFixture(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                for field in _REQUIRED_FIELDS:
                    if field not in record:
                        raise CorruptFixture(f"{path}:{lineno}: missing field {field!r}")
                if record["input_tokens"] < 0 or record["output_tokens"] < 0:
                    raise CorruptFixture(f"{path}:{lineno}: negative token count")
                key = (record["tag"], record["seq"])
                if key in seen:
                    raise CorruptFixture(f"{path}:{lineno}: duplicate (tag, seq) {key}")
                seen.add(key)
                by_tag.setdefault(record["tag"], []).append(record)
        for records in by_tag.values():
            records.sort(key=lambda r: r["seq"])
        return cls(root=root, records=by_tag, meta=meta)

    def tags(self) -> list[str]:
        return sorted(self.records)


def _response_from_record(record: dict) -> ChatResponse:
    tool_calls = tuple(
        ToolCall(name=c.get("name", ""), arguments=c.get("arguments") or {},
                 call_id=c.get("call_id", ""))
        for c in record.get("tool_calls") or []
    )
    return ChatResponse(
        text=record["text"],
        input_tokens=int(record["input_tokens"]),
        output_tokens=int(record["output_tokens"]),
        latency_ms=0.0,
        estimated=False,
        tool_calls=tool_calls,
    )


class ReplayProvider:
    """Serves completions from a ReplayArchive; zero network use.

    namespace, when set, prefixes every tag ("proj/MasterAgent") so one shared
    archive can hold several projects' transcripts.
    """

    def __init__(self, archive: ReplayArchive, namespace: str = "",
                 supports_tool_calls: bool = True):
        self.archive = archive
        self.namespace = namespace
        self.supports_tool_calls = supports_tool_calls
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def _full_tag(self, tag: str) -> str:
        return f"{self.namespace}/{tag}" if self.namespace else tag

    def chat(self, request: ChatRequest, profile: ModelProfile) -> ChatResponse:
        tag = self._full_tag(request.tag)
        digest = prompt_digest(request)
        with self._lock:
            records = self.archive.records.get(tag, [])
            cursor = self._cursors.get(tag, 0)
            if cursor < len(records):
                self._cursors[tag] = cursor + 1
                return _response_from_record(records[cursor])
            for record in records:
                if record["prompt_digest"] == digest:
                    logger.debug("replay digest fallback for tag=%s", tag)
                    return _response_from_record(record)
        raise FixtureMiss(tag=tag, seq=self._cursors.get(tag, 0), prompt_digest=digest)

    def embed(self, texts: list[str], profile: ModelProfile) -> EmbeddingResult:
        vectors = [deterministic_embedding(t, profile.embedding_dim) for t in texts]
        input_tokens = sum(len(t.encode("utf-8")) // 4 + 1 for t in texts)
        return EmbeddingResult(vectors=vectors, input_tokens=input_tokens)


_SAFE_TAG = re.compile(r"[^A-Za-z0-9._-]+")


class ArchiveWriter:
    """Accumulates records during a recorded run and writes the archive."""

    def __init__(self, root: Path | str, meta: dict | None = None):
        self.root = Path(root)
        self.meta = dict(meta or {})
        self._records: dict[str, list[dict]] = {}
        self._lock = threading.Lock()

    def add_chat(self, tag: str, digest: str, response: ChatResponse) -> None:
        record = {
            "tag": tag,
            "prompt_digest": digest,
            "text": response.text,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
        }
        if response.tool_calls:
            record["tool_calls"] = [
                {"name": c.name, "arguments": c.arguments, "call_id": c.call_id}
                for c in response.tool_calls
            ]
        with self._lock:
            bucket = self._records.setdefault(tag, [])
            record["seq"] = len(bucket)
            bucket.append(record)

    def set_meta(self, **fields) -> None:
        self.meta.update(fields)

    def flush(self) -> Path:
        chat_dir = self.root / "chat"
        chat_dir.mkdir(parents=True, exist_ok=True)
        used_names: dict[str, str] = {}
        with self._lock:
            for tag, records in sorted(self._records.items()):
                base = _SAFE_TAG.sub("_", tag) or "tag"
                name = base
                suffix = 1
                while used_names.get(name, tag) != tag:
                    name = f"{base}.{suffix}"
                    suffix += 1
                used_names[name] = tag
                lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
                (chat_dir / f"{name}.jsonl").write_text(
                    "\n".join(lines) + "\n", encoding="utf-8"
                )
            meta = {"format_version": FORMAT_VERSION, **self.meta}
            (self.root / "meta.json").write_text(
                json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return self.root


class RecordingProvider:
    """Pass-through provider that mirrors every chat into an ArchiveWriter."""

    def __init__(self, inner, writer: ArchiveWriter, namespace: str = ""):
        self.inner = inner
        self.writer = writer
        self.namespace = namespace

    @property
    def supports_tool_calls(self) -> bool:
        return getattr(self.inner, "supports_tool_calls", False)

    def chat(self, request: ChatRequest, profile: ModelProfile) -> ChatResponse:
        response = self.inner.chat(request, profile)
        tag = f"{self.namespace}/{request.tag}" if self.namespace else request.tag
        self.writer.add_chat(tag, prompt_digest(request), response)
        return response

    def embed(self, texts: list[str], profile: ModelProfile) -> EmbeddingResult:
        return self.inner.embed(texts, profile)
