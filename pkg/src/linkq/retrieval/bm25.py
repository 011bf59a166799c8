"""Persistent BM25 index over article titles.

Only titles are scored; first paragraphs ride along as candidate
descriptions. Scoring is Okapi BM25 with the non-negative ``ln(1 + ...)``
idf, k1=1.2 and b=0.75 unless overridden. Ties break on ascending doc_id so
rankings are fully deterministic, and the persisted form reloads bit-exactly.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..core import (
    Candidate,
    CandidateList,
    Document,
    EntityRef,
    Mention,
    normalize_title,
)
from ..errors import DuplicateTitle, EmptyCorpus, IndexFormatError

FORMAT_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_MANIFEST_FILE = "manifest.json"
_DOC_TABLE_FILE = "doc_table.jsonl"
_POSTINGS_FILE = "postings.json"

# Alphanumeric runs only: underscores and all punctuation are separators.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Case-fold and split on any non-alphanumeric character.

    No stemming, no stopword removal.
    """
    return _TOKEN_RE.findall(text.casefold())


@dataclass(frozen=True)
class DocEntry:
    """One indexed document: identity plus what search results need."""

    doc_id: str
    title: str
    first_paragraph: str
    title_len: int


class TitleIndex:
    """Inverted index over title tokens, immutable once built."""

    def __init__(
        self,
        postings: dict[str, list[tuple[int, int]]],
        doc_table: list[DocEntry],
        k1: float,
        b: float,
        avg_title_len: float,
    ) -> None:
        self.postings = postings
        self.doc_table = doc_table
        self.k1 = k1
        self.b = b
        self.avg_title_len = avg_title_len

    @property
    def n_docs(self) -> int:
        return len(self.doc_table)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def _length_norm(self, entry: DocEntry) -> float:
        if self.avg_title_len == 0:
            return self.k1 * (1.0 - self.b)
        return self.k1 * (1.0 - self.b + self.b * entry.title_len / self.avg_title_len)

    def bm25_score(self, query_terms: Sequence[str], ordinal: int) -> float:
        """Score one document against a term sequence; absent terms add 0."""
        entry = self.doc_table[ordinal]
        norm = self._length_norm(entry)
        score = 0.0
        for term in query_terms:
            plist = self.postings.get(term)
            if not plist:
                continue
            tf = dict(plist).get(ordinal, 0)
            if tf == 0:
                continue
            score += self.idf(term) * tf * (self.k1 + 1.0) / (tf + norm)
        return score

    def search(self, mention: Mention, k: int) -> CandidateList:
        """Top-k titles for a mention, ties broken by ascending doc_id.

        Documents scoring zero are excluded, so an unknown mention yields an
        empty list rather than noise.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = tokenize(mention.surface)
        scores: dict[int, float] = {}
        for term in terms:
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for ordinal, tf in plist:
                norm = self._length_norm(self.doc_table[ordinal])
                contribution = idf * tf * (self.k1 + 1.0) / (tf + norm)
                scores[ordinal] = scores.get(ordinal, 0.0) + contribution
        ranked = sorted(
            scores.items(), key=lambda item: (-item[1], self.doc_table[item[0]].doc_id)
        )[:k]
        candidates = []
        for position, (ordinal, score) in enumerate(ranked, start=1):
            entry = self.doc_table[ordinal]
            candidates.append(
                Candidate(
                    entity=EntityRef.title(entry.title),
                    title=entry.title,
                    description=entry.first_paragraph,
                    rank=position,
                    score=score,
                )
            )
        return CandidateList(mention=mention, candidates=tuple(candidates), k_requested=k)

    # --- persistence ---

    def save(self, directory: str | Path) -> None:
        """Write the index as a versioned directory; reload is bit-exact."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format_version": FORMAT_VERSION,
            "k1": self.k1,
            "b": self.b,
            "doc_count": self.n_docs,
            "avg_title_len": self.avg_title_len,
        }
        (directory / _MANIFEST_FILE).write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        with open(directory / _DOC_TABLE_FILE, "w", encoding="utf-8") as handle:
            for entry in self.doc_table:
                handle.write(
                    json.dumps(
                        {
                            "doc_id": entry.doc_id,
                            "title": entry.title,
                            "first_paragraph": entry.first_paragraph,
                            "title_len": entry.title_len,
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        postings_wire = {term: plist for term, plist in sorted(self.postings.items())}
        (directory / _POSTINGS_FILE).write_text(
            json.dumps(postings_wire, sort_keys=True, ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, directory: str | Path) -> "TitleIndex":
        directory = Path(directory)
        manifest_path = directory / _MANIFEST_FILE
        if not manifest_path.exists():
            raise IndexFormatError(f"no index manifest at {manifest_path}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"unreadable manifest: {exc}") from exc
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise IndexFormatError(
                f"index format version {version!r} not supported "
                f"(expected {FORMAT_VERSION})"
            )
        doc_table = []
        with open(directory / _DOC_TABLE_FILE, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                doc_table.append(
                    DocEntry(
                        doc_id=row["doc_id"],
                        title=row["title"],
                        first_paragraph=row["first_paragraph"],
                        title_len=row["title_len"],
                    )
                )
        raw_postings = json.loads(
            (directory / _POSTINGS_FILE).read_text(encoding="utf-8")
        )
        postings = {
            term: [(int(ordinal), int(tf)) for ordinal, tf in plist]
            for term, plist in raw_postings.items()
        }
        index = cls(
            postings=postings,
            doc_table=doc_table,
            k1=manifest["k1"],
            b=manifest["b"],
            avg_title_len=manifest["avg_title_len"],
        )
        if index.n_docs != manifest["doc_count"]:
            raise IndexFormatError(
                f"doc table has {index.n_docs} rows, manifest says "
                f"{manifest['doc_count']}"
            )
        return index


def build_index(
    corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> TitleIndex:
    """Index a corpus stream by title tokens.

    Raises :class:`DuplicateTitle` (naming both doc ids) when two documents
    normalize to the same title, and :class:`EmptyCorpus` for zero documents.
    """
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_table: list[DocEntry] = []
    seen_titles: dict[str, str] = {}
    for document in corpus:
        norm = normalize_title(document.title)
        if norm in seen_titles:
            raise DuplicateTitle(
                f"documents {seen_titles[norm]!r} and {document.doc_id!r} share "
                f"the normalized title {norm!r}"
            )
        seen_titles[norm] = document.doc_id
        ordinal = len(doc_table)
        tokens = tokenize(document.title)
        doc_table.append(
            DocEntry(
                doc_id=document.doc_id,
                title=document.title,
                first_paragraph=document.first_paragraph,
                title_len=len(tokens),
            )
        )
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
    if not doc_table:
        raise EmptyCorpus("cannot build an index from zero documents")
    avg_title_len = sum(entry.title_len for entry in doc_table) / len(doc_table)
    return TitleIndex(
        postings=postings, doc_table=doc_table, k1=k1, b=b, avg_title_len=avg_title_len
    )
