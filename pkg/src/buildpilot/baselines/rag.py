"""Retrieval baseline: chunk the docs, embed, rank by cosine, generate.

The index is an exact-scan store: one unit vector per chunk, similarity is
a dot product. Persistence is a JSONL chunk sidecar plus a raw float32
vector file so an index can be audited or reloaded without re-embedding.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path

import numpy as np

from buildpilot import prompts
from buildpilot.errors import (
    BinaryFile,
    ExtractionFailure,
    FileNotFound,
    NoCandidateFiles,
)
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.navigator.extract import InstructionPlan
from buildpilot.parsing import extract_commands
from buildpilot.sandbox.listing import parse_tree_paths

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1000
CHUNK_OVERLAP = 200
TOP_K = 4

BUILD_QUERY = "how to compile and build this project from source"

CHUNKS_FILE = "chunks.jsonl"
VECTORS_FILE = "vectors.bin"

_MAGIC = b"BPIX"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, count, dim

NORM_TOLERANCE = 1e-6

# Documentation candidates; root-level names plus the docs directory
# (one level only, so * never crosses a path separator).
_ROOT_PATTERNS = ("README*", "INSTALL*", "BUILD*", "COMPILE*", "*.md")
_DOCS_PATTERNS = ("*.md", "*.txt")


def candidate_doc_paths(paths) -> list[str]:
    """Documentation files worth indexing, in stable sorted order."""
    hits = set()
    for path in paths:
        if "/" not in path:
            if any(fnmatchcase(path, pat) for pat in _ROOT_PATTERNS):
                hits.add(path)
            continue
        prefix, _, name = path.partition("/")
        if prefix == "docs" and "/" not in name and any(
                fnmatchcase(name, pat) for pat in _DOCS_PATTERNS):
            hits.add(path)
    return sorted(hits)


def chunk_windows(length: int, chunk_size: int = CHUNK_SIZE,
                  overlap: int = CHUNK_OVERLAP) -> list[tuple[int, int]]:
    """Window [start, end) pairs: fixed stride, last windows clipped."""
    if overlap < 0 or chunk_size <= overlap:
        raise ValueError("require chunk_size > overlap >= 0")
    stride = chunk_size - overlap
    return [(start, min(start + chunk_size, length))
            for start in range(0, length, stride)]


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    source_path: str
    start: int
    end: int
    text: str


@dataclass
class ChunkIndex:
    chunks: tuple
    vectors: np.ndarray  # shape (count, dim), unit rows
    embed_model_id: str
    chunk_size: int = CHUNK_SIZE
    overlap: int = CHUNK_OVERLAP

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if len(self.chunks) != len(self.vectors):
            raise ValueError(
                f"{len(self.chunks)} chunks but {len(self.vectors)} vectors")
        for chunk in self.chunks:
            if len(chunk.text) > self.chunk_size:
                raise ValueError(
                    f"chunk {chunk.chunk_id} exceeds chunk_size {self.chunk_size}")
        if len(self.vectors):
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=NORM_TOLERANCE):
                raise ValueError("stored vectors must be unit length")

    def __len__(self) -> int:
        return len(self.chunks)

    def reconstruct(self, source_path: str) -> str:
        """Rebuild one file's text from its chunks, overlap deduplicated."""
        parts = []
        pos = 0
        for chunk in self.chunks:
            if chunk.source_path != source_path:
                continue
            if chunk.end <= pos:
                continue
            parts.append(chunk.text[pos - chunk.start:])
            pos = chunk.end
        return "".join(parts)


def rag_index(session, gateway, model_id: str,
              chunk_size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP,
              paths_filter=None) -> ChunkIndex:
    """Chunk the repo's documentation files and embed every chunk (batched)."""
    paths = candidate_doc_paths(parse_tree_paths(session.fetch_structure()))
    if paths_filter is not None:
        paths = [p for p in paths if paths_filter(p)]
    chunks: list[Chunk] = []
    for path in paths:
        try:
            text = session.read_file(path)
        except (BinaryFile, FileNotFound):
            continue
        for start, end in chunk_windows(len(text), chunk_size, overlap):
            chunks.append(Chunk(
                chunk_id=len(chunks), source_path=path,
                start=start, end=end, text=text[start:end]))
    if not chunks:
        raise NoCandidateFiles("no documentation files to index")
    vectors = gateway.embed([c.text for c in chunks], model_id)
    return ChunkIndex(chunks=tuple(chunks), vectors=np.stack(vectors),
                      embed_model_id=model_id,
                      chunk_size=chunk_size, overlap=overlap)


def save_index(index: ChunkIndex, dir_path: Path) -> Path:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    with (dir_path / CHUNKS_FILE).open("w", encoding="utf-8") as handle:
        meta = {"kind": "meta", "embed_model_id": index.embed_model_id,
                "chunk_size": index.chunk_size, "overlap": index.overlap}
        handle.write(json.dumps(meta, sort_keys=True) + "\n")
        for chunk in index.chunks:
            handle.write(json.dumps(
                {"kind": "chunk", "chunk_id": chunk.chunk_id,
                 "source_path": chunk.source_path, "start": chunk.start,
                 "end": chunk.end, "text": chunk.text},
                sort_keys=True) + "\n")
    count, dim = index.vectors.shape if len(index.vectors) else (0, 0)
    with (dir_path / VECTORS_FILE).open("wb") as handle:
        handle.write(_HEADER.pack(_MAGIC, _VERSION, count, dim))
        handle.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
    return dir_path


def load_index(dir_path: Path) -> ChunkIndex:
    dir_path = Path(dir_path)
    lines = (dir_path / CHUNKS_FILE).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{dir_path / CHUNKS_FILE} is empty")
    meta = json.loads(lines[0])
    if meta.get("kind") != "meta":
        raise ValueError("chunk sidecar must start with a meta record")
    chunks = []
    for line in lines[1:]:
        rec = json.loads(line)
        chunks.append(Chunk(chunk_id=rec["chunk_id"],
                            source_path=rec["source_path"],
                            start=rec["start"], end=rec["end"],
                            text=rec["text"]))
    raw = (dir_path / VECTORS_FILE).read_bytes()
    magic, version, count, dim = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"bad vector file magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported vector file version {version}")
    vectors = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if vectors.size != count * dim:
        raise ValueError("vector file truncated")
    return ChunkIndex(chunks=tuple(chunks),
                      vectors=vectors.reshape(count, dim).copy(),
                      embed_model_id=meta["embed_model_id"],
                      chunk_size=meta.get("chunk_size", CHUNK_SIZE),
                      overlap=meta.get("overlap", CHUNK_OVERLAP))


def rank_chunks(index: ChunkIndex, query_vector: np.ndarray,
                k: int = TOP_K) -> list[int]:
    """Chunk ids of the top-k cosine matches; ties resolve to earlier chunks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = index.vectors @ np.asarray(query_vector, dtype=np.float32)
    order = sorted(range(len(index)), key=lambda i: (-float(sims[i]), i))
    return order[:k]


def rag_query(index: ChunkIndex, query: str, gateway, model_id: str,
              k: int = TOP_K, project_name: str = "",
              audit_path: Path | None = None) -> InstructionPlan:
    """Retrieve top-k chunks for the query and generate the command plan.

    audit_path, when given, receives a JSON record of the retrieved chunk
    ids so a reviewer can check what the generation actually saw.
    """
    if not len(index):
        raise ValueError("index is empty")
    query_vector = gateway.embed([query], model_id)[0]
    retrieved = rank_chunks(index, query_vector, k)
    excerpts = [(index.chunks[i].source_path, index.chunks[i].text)
                for i in retrieved]
    sources = sorted({index.chunks[i].source_path for i in retrieved})
    if audit_path is not None:
        audit_path = Path(audit_path)
        audit_path.parent.mkdir(parents=True, exist_ok=True)
        audit_path.write_text(json.dumps(
            {"query": query, "k": k, "retrieved_chunk_ids": retrieved,
             "sources": sources}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    system, user = prompts.rag_generate(project_name, excerpts)
    response = gateway.complete(ChatRequest(
        model_id=model_id,
        messages=[ChatMessage("system", system), ChatMessage("user", user)],
        tag=prompts.TAG_RAG,
    ))
    commands = extract_commands(response.text)
    if not commands:
        raise ExtractionFailure("retrieval generation yielded no commands")
    return InstructionPlan(
        steps=tuple(commands),
        source_path=",".join(sources),
        notes="retrieved chunks: " + ",".join(str(i) for i in retrieved),
    )
