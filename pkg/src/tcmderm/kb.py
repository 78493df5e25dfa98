"""Lexical knowledge base: heading-aware chunking plus BM25 retrieval.

Documents are split at markdown headings, then each section is greedily
packed into chunks of at most `max_chunk_chars` characters along paragraph
boundaries.  Retrieval is BM25 (k1 = 1.2, b = 0.75) with the always-positive
idf variant ln(1 + (N - df + 0.5) / (df + 0.5)), so a chunk scores 0 exactly
when it shares no term with the query; zero-score chunks are omitted and
ties break on ascending chunk id.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .metrics import tokenize

INDEX_VERSION = 1
DEFAULT_MAX_CHUNK_CHARS = 800
K1 = 1.2
B = 0.75


class IndexError_(Exception):
    """Index file is missing, corrupt, or has an unsupported version."""


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    heading_path: tuple[str, ...]
    text: str
    term_counts: dict[str, int]

    @property
    def length(self) -> int:
        return sum(self.term_counts.values())


def _terms(text: str) -> list[str]:
    return [t.lower() for t in tokenize(text).tokens]


def split_document(text: str, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS) -> list[tuple[tuple[str, ...], str]]:
    """Split at headings, then greedily pack paragraphs up to max_chunk_chars."""
    sections: list[tuple[tuple[str, ...], list[str]]] = []
    heading_stack: list[tuple[int, str]] = []
    current: list[str] = []

    def close() -> None:
        body = "\n".join(current).strip()
        if body:
            sections.append((tuple(h for _, h in heading_stack), current.copy()))
        current.clear()

    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            close()
            level = len(stripped) - len(stripped.lstrip("#"))
            title = stripped[level:].strip()
            while heading_stack and heading_stack[-1][0] >= level:
                heading_stack.pop()
            heading_stack.append((level, title))
        else:
            current.append(line)
    close()

    chunks: list[tuple[tuple[str, ...], str]] = []
    for heading_path, lines in sections:
        paragraphs = [p.strip() for p in "\n".join(lines).split("\n\n") if p.strip()]
        packed: list[str] = []
        size = 0
        for para in paragraphs:
            pieces = [para[i : i + max_chunk_chars] for i in range(0, len(para), max_chunk_chars)] or [para]
            for piece in pieces:
                extra = len(piece) + (2 if packed else 0)
                if packed and size + extra > max_chunk_chars:
                    chunks.append((heading_path, "\n\n".join(packed)))
                    packed, size = [], 0
                packed.append(piece)
                size += len(piece) + (2 if len(packed) > 1 else 0)
        if packed:
            chunks.append((heading_path, "\n\n".join(packed)))
    return chunks


@dataclass
class Index:
    chunks: list[Chunk]
    df: dict[str, int]
    avg_length: float

    @classmethod
    def build(cls, chunks: list[Chunk]) -> "Index":
        df: dict[str, int] = {}
        for chunk in chunks:
            for term in chunk.term_counts:
                df[term] = df.get(term, 0) + 1
        avg = sum(c.length for c in chunks) / len(chunks) if chunks else 0.0
        return cls(chunks=chunks, df=df, avg_length=avg)


def index_corpus(
    corpus_dir: str | Path, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS
) -> Index:
    """Index every .md/.txt under corpus_dir; unreadable files are skipped."""
    corpus_dir = Path(corpus_dir)
    chunks: list[Chunk] = []
    for path in sorted(corpus_dir.glob("**/*")):
        if path.suffix.lower() not in (".md", ".txt") or not path.is_file():
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError):
            continue  # skipped with a shrug; corpus files are advisory
        doc_id = str(path.relative_to(corpus_dir))
        for i, (heading_path, chunk_text) in enumerate(split_document(text, max_chunk_chars)):
            chunks.append(
                Chunk(
                    chunk_id=f"{doc_id}#{i:04d}",
                    doc_id=doc_id,
                    heading_path=heading_path,
                    text=chunk_text,
                    term_counts=dict(Counter(_terms(chunk_text))),
                )
            )
    return Index.build(chunks)


def bm25_score(index: Index, chunk: Chunk, query_terms: list[str]) -> float:
    n = len(index.chunks)
    score = 0.0
    for term in query_terms:
        tf = chunk.term_counts.get(term, 0)
        if tf == 0:
            continue
        df = index.df.get(term, 0)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        denom = tf + K1 * (1.0 - B + B * chunk.length / index.avg_length)
        score += idf * tf * (K1 + 1.0) / denom
    return score


def retrieve(index: Index, query: str, k: int = 5) -> list[tuple[Chunk, float]]:
    """Top-k chunks by BM25; zero scores omitted; ties break on chunk id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.chunks:
        return []
    query_terms = _terms(query)
    scored = [
        (chunk, bm25_score(index, chunk, query_terms)) for chunk in index.chunks
    ]
    scored = [(c, s) for c, s in scored if s > 0.0]
    scored.sort(key=lambda cs: (-cs[1], cs[0].chunk_id))
    return scored[:k]


def save_index(index: Index, path: str | Path) -> None:
    doc = {
        "version": INDEX_VERSION,
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "doc_id": c.doc_id,
                "heading_path": list(c.heading_path),
                "text": c.text,
                "term_counts": c.term_counts,
            }
            for c in index.chunks
        ],
    }
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )


def load_index(path: str | Path) -> Index:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexError_(f"cannot read index {path}: {exc}") from exc
    if doc.get("version") != INDEX_VERSION:
        raise IndexError_(f"unsupported index version {doc.get('version')!r}")
    chunks = [
        Chunk(
            chunk_id=c["chunk_id"],
            doc_id=c["doc_id"],
            heading_path=tuple(c["heading_path"]),
            text=c["text"],
            term_counts={t: int(v) for t, v in c["term_counts"].items()},
        )
        for c in doc["chunks"]
    ]
    return Index.build(chunks)


def build_rag_query(model_output: str, syndrome: str | None = None) -> str:
    """Judge retrieval query: the output under evaluation plus the case syndrome."""
    return f"{model_output}\n{syndrome}" if syndrome else model_output
