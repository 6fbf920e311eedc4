"""Lexical embeddings, cosine top-k search, and the FileQA / CSVQA tools."""
from __future__ import annotations

import csv
import hashlib
import io
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

EMBED_DIM = 2 ** 15
NORM_TOL = 1e-6
FILE_QA_K = 5

_TOKEN = re.compile(r"[a-z0-9]+")


class EmptyTextError(ValueError):
    pass


class ProviderUnreachableError(ConnectionError):
    pass


class CsvError(ValueError):
    pass


def tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % dim


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> sp.csr_matrix: ...


@dataclass
class LexicalEmbedder:
    """Hashed term frequencies over lowercase alphanumeric tokens, L2-normalized."""

    dim: int = EMBED_DIM

    def embed(self, text: str) -> sp.csr_matrix:
        toks = tokens(text)
        if not toks:
            raise EmptyTextError("empty text")
        counts: dict[int, float] = {}
        for t in toks:
            b = _bucket(t, self.dim)
            counts[b] = counts.get(b, 0.0) + 1.0
        cols = np.array(sorted(counts), dtype=np.int64)
        vals = np.array([counts[c] for c in cols])
        vals /= np.linalg.norm(vals)
        return sp.csr_matrix((vals, (np.zeros(len(cols), dtype=np.int64), cols)), shape=(1, self.dim))


@dataclass
class RemoteEmbedder:
    """Embeddings endpoint speaking ``{"model", "input"} -> {"data": [{"embedding": [...]}]}``."""

    endpoint: str
    model: str
    dim: int
    timeout: float = 30.0
    api_key_env: str = "LEAN_OPT_API_KEY"

    def embed(self, text: str) -> sp.csr_matrix:
        import httpx

        if not text.strip():
            raise EmptyTextError("empty text")
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(self.endpoint, json={"model": self.model, "input": text},
                              headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderUnreachableError(f"embedding provider failed: {exc}") from exc
        if vec.shape != (self.dim,):
            raise ProviderUnreachableError(f"provider returned dimension {vec.shape}, expected {self.dim}")
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise EmptyTextError("provider returned a zero vector")
        return sp.csr_matrix(vec / norm)


_DEFAULT = LexicalEmbedder()


def embed(text: str, provider: Optional[Embedder] = None) -> sp.csr_matrix:
    return (provider or _DEFAULT).embed(text)


def cosine(a: sp.csr_matrix, b: sp.csr_matrix) -> float:
    return float(a.multiply(b).sum())


@dataclass(frozen=True)
class DocRecord:
    id: str
    text: str
    payload: Any = None


@dataclass
class VectorIndex:
    records: list[DocRecord] = field(default_factory=list)
    vectors: Optional[sp.csr_matrix] = None
    provider: Embedder = field(default_factory=LexicalEmbedder)

    @classmethod
    def build(cls, records: Iterable[DocRecord], provider: Optional[Embedder] = None) -> "VectorIndex":
        provider = provider or _DEFAULT
        recs = list(records)
        seen: set[str] = set()
        for r in recs:
            if r.id in seen:
                raise ValueError(f"duplicate record id {r.id!r}")
            seen.add(r.id)
        if not recs:
            return cls([], None, provider)
        mat = sp.vstack([provider.embed(r.text) for r in recs]).tocsr()
        norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValueError("provider returned vectors that are not unit-normalized")
        return cls(recs, mat, provider)

    def __len__(self) -> int:
        return len(self.records)


def top_k(index: VectorIndex, query: str, k: int) -> list[tuple[DocRecord, float]]:
    """Records ranked by descending cosine similarity, ties broken by id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not index.records:
        return []
    q = index.provider.embed(query)
    scores = np.asarray((index.vectors @ q.T).todense()).ravel()
    order = sorted(range(len(index.records)), key=lambda i: (-scores[i], index.records[i].id))
    return [(index.records[i], float(scores[i])) for i in order[:k]]


def build_reference_index(entries: Iterable[Any], provider: Optional[Embedder] = None) -> VectorIndex:
    """Index reference entries (objects with ``id``, ``q`` and ``t``) by their query text."""
    return VectorIndex.build((DocRecord(e.id, e.q, e) for e in entries), provider)


def file_qa(index: VectorIndex, query: str, k: int = FILE_QA_K) -> list[tuple[str, str]]:
    """Top-k (problem description, problem type) pairs from the reference index."""
    if not index.records:
        raise ValueError("reference store is empty")
    out = []
    for rec, _ in top_k(index, query, k):
        t = getattr(rec.payload, "t", None)
        out.append((rec.text, getattr(t, "value", t) if t is not None else ""))
    return out


def render_file_qa(hits: Sequence[tuple[str, str]]) -> str:
    """Observation text handed back to the classification agent."""
    lines = []
    for k, (q, t) in enumerate(hits, 1):
        lines.append(f"{k}. Problem type: {t}\n   Description: {q}")
    return "\n".join(lines)


# --------------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvTable:
    name: str
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def column(self, name: str) -> list[str]:
        try:
            k = self.header.index(name)
        except ValueError:
            raise KeyError(f"{self.name} has no column {name!r}") from None
        return [r[k] for r in self.rows]


def parse_csv(text: str, name: str) -> CsvTable:
    reader = csv.reader(io.StringIO(text))
    try:
        all_rows = [row for row in reader]
    except csv.Error as exc:
        raise CsvError(f"{name}: {exc}") from exc
    all_rows = [r for r in all_rows if any(c.strip() for c in r)]
    if not all_rows:
        raise CsvError(f"{name}: missing header row")
    header = tuple(c.strip().lstrip("﻿") for c in all_rows[0])
    rows = []
    for k, r in enumerate(all_rows[1:], 2):
        if len(r) != len(header):
            raise CsvError(f"{name}: line {k} has {len(r)} fields, header has {len(header)}")
        rows.append(tuple(c.strip() for c in r))
    return CsvTable(name, header, tuple(rows))


def read_csv(path: str | os.PathLike) -> CsvTable:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise CsvError(f"cannot read {p}: {exc}") from exc
    return parse_csv(text, p.name)


def within_one_edit(a: str, b: str) -> bool:
    if a == b:
        return True
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la == lb:
        diff = [k for k in range(la) if a[k] != b[k]]
        return len(diff) == 1 or (len(diff) == 2 and diff[1] == diff[0] + 1
                                  and a[diff[0]] == b[diff[1]] and a[diff[1]] == b[diff[0]])
    if la > lb:
        a, b = b, a
    # b is one longer: a must equal b with one character removed
    for k in range(len(b)):
        if b[:k] + b[k + 1:] == a:
            return True
    return False


_GENERIC = {"brand", "brands", "product", "products", "data", "item", "items", "all", "the",
            "information", "info", "related", "row", "rows", "dataset", "datasets"}
_RELATED = re.compile(r"related\s+to\s+(.+?)(?:\s+to\s+formulate\b|[.;\n]|$)", re.IGNORECASE | re.DOTALL)


def extract_keywords(request: str) -> list[str]:
    """Entity keywords named by a retrieval request; empty means 'everything'."""
    m = _RELATED.search(request)
    phrase = m.group(1) if m else request
    parts = re.split(r",|\band\b|&|/", phrase)
    out = []
    for p in parts:
        words = [w for w in re.findall(r"[\w'’-]+", p) if w.lower() not in _GENERIC]
        kw = " ".join(words).strip()
        if kw and kw.lower() not in out:
            out.append(kw.lower())
    return out


def _compact(s: str) -> str:
    return re.sub(r"[^a-z0-9]", "", s.lower())


def keyword_matches(keyword: str, cell: str) -> bool:
    """Case-insensitive substring, or every keyword token within one edit of a cell token."""
    kw, text = keyword.lower(), cell.lower()
    if kw in text:
        return True
    ck = _compact(kw)
    if ck and ck in _compact(text):
        return True
    ktoks, ctoks = tokens(kw), tokens(text)
    if not ktoks or not ctoks:
        return False

    def tok_ok(k: str) -> bool:
        if len(k) < 4:
            return k in ctoks
        return any(within_one_edit(k, c) for c in ctoks)

    return all(tok_ok(k) for k in ktoks)


def format_rows(table: CsvTable, rows: Sequence[tuple[str, ...]]) -> list[str]:
    return [f"{k}. " + ", ".join(f"{h}: {v}" for h, v in zip(table.header, r)) for k, r in enumerate(rows, 1)]


def select_rows(table: CsvTable, keywords: Sequence[str]) -> list[tuple[str, ...]]:
    """Matching rows in source order; a file with no match (or no keywords) yields all rows."""
    if not keywords:
        return list(table.rows)
    hit = [r for r in table.rows if any(keyword_matches(k, c) for k in keywords for c in r)]
    return hit if hit else list(table.rows)


def csv_qa(tables: Sequence[CsvTable], request: str) -> str:
    """Row-by-row "Column: value" rendering of the rows a request asks for."""
    keywords = extract_keywords(request)
    blocks = []
    for k, table in enumerate(tables, 1):
        blocks.append(f"----------------DataFrame {k} - {table.name}:----------------")
        blocks.extend(format_rows(table, select_rows(table, keywords)))
    return "\n".join(blocks)
