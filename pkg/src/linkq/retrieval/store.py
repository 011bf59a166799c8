"""In-memory corpus store with title and doc-id lookup.

The on-disk corpus format is JSON lines, one object per document with the
fields ``doc_id``, ``title``, ``first_paragraph`` and ``text``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from ..core import Document, EntityRef, Namespace, normalize_title
from ..errors import DuplicateTitle, NotFound, ParseError


class CorpusStore:
    """Documents keyed by normalized title and by doc id."""

    def __init__(self, documents: Iterable[Document]) -> None:
        self._documents: list[Document] = []
        self._by_title: dict[str, Document] = {}
        self._by_doc_id: dict[str, Document] = {}
        for document in documents:
            norm = normalize_title(document.title)
            if norm in self._by_title:
                raise DuplicateTitle(
                    f"documents {self._by_title[norm].doc_id!r} and "
                    f"{document.doc_id!r} share the normalized title {norm!r}"
                )
            self._documents.append(document)
            self._by_title[norm] = document
            self._by_doc_id[document.doc_id] = document

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def fetch(self, entity: EntityRef) -> Document:
        """Full-text lookup by article title or local doc id."""
        if entity.namespace is Namespace.ARTICLE_TITLE:
            document = self._by_title.get(normalize_title(entity.key))
        elif entity.namespace is Namespace.LOCAL_DOC_ID:
            document = self._by_doc_id.get(entity.key)
        else:
            raise ValueError(
                f"cannot fetch documents by {entity.namespace.value} keys"
            )
        if document is None:
            raise NotFound(f"no document for {entity.namespace.value} {entity.key!r}")
        return document


def fetch_document(store: CorpusStore, entity: EntityRef) -> Document:
    return store.fetch(entity)


def load_corpus(path: str | Path) -> CorpusStore:
    """Read a JSONL corpus file into a store."""
    documents = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                documents.append(
                    Document(
                        doc_id=row["doc_id"],
                        title=row["title"],
                        first_paragraph=row["first_paragraph"],
                        full_text=row["text"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}, line {lineno}: {exc}") from exc
    return CorpusStore(documents)


def save_corpus(documents: Iterable[Document], path: str | Path) -> int:
    """Write documents as corpus JSONL; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for document in documents:
            handle.write(
                json.dumps(
                    {
                        "doc_id": document.doc_id,
                        "title": document.title,
                        "first_paragraph": document.first_paragraph,
                        "text": document.full_text,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count
