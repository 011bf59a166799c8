"""Core domain types: queries, mentions, entities, candidates, and results.

Everything here is an immutable value object, safe to share across threads.
Entity identity rules live here too (`normalize_title`, `entity_eq`) so the
rest of the toolkit agrees on what "the same entity" means.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import MixedNamespace


def normalize_title(raw: str) -> str:
    """Canonicalize an article title for matching.

    Case-folds, turns underscores into spaces, collapses whitespace runs and
    strips the ends. Idempotent; empty input stays empty.
    """
    return " ".join(raw.casefold().replace("_", " ").split())


class Namespace(Enum):
    """Which knowledge base an entity key belongs to."""

    WIKIDATA_QID = "wikidata_qid"
    ARTICLE_TITLE = "article_title"
    LOCAL_DOC_ID = "local_doc_id"


_QID_RE = re.compile(r"Q\d+\Z")


@dataclass(frozen=True)
class EntityRef:
    """A namespaced entity identity, e.g. a QID or a canonical article title.

    QID keys must look like ``Q42``. Title keys are compared after
    normalization; use :meth:`title` to construct them pre-normalized.
    """

    namespace: Namespace
    key: str

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("entity key must be non-empty")
        if self.namespace is Namespace.WIKIDATA_QID and not _QID_RE.match(self.key):
            raise ValueError(f"malformed Wikidata QID: {self.key!r}")

    @classmethod
    def qid(cls, key: str) -> "EntityRef":
        return cls(Namespace.WIKIDATA_QID, key)

    @classmethod
    def title(cls, raw_title: str) -> "EntityRef":
        return cls(Namespace.ARTICLE_TITLE, normalize_title(raw_title))

    @classmethod
    def doc_id(cls, key: str) -> "EntityRef":
        return cls(Namespace.LOCAL_DOC_ID, key)

    def canonical(self) -> "EntityRef":
        """The normalized form used for set membership and deduplication."""
        if self.namespace is Namespace.WIKIDATA_QID:
            return self
        return EntityRef(self.namespace, normalize_title(self.key))


def entity_eq(a: EntityRef, b: EntityRef) -> bool:
    """Semantic entity equality.

    QIDs compare byte-exactly; titles and local doc ids compare under
    `normalize_title`. Entities in different namespaces are never equal.
    """
    if a.namespace is not b.namespace:
        return False
    if a.namespace is Namespace.WIKIDATA_QID:
        return a.key == b.key
    return normalize_title(a.key) == normalize_title(b.key)


def canonical_set(refs: Iterable[EntityRef]) -> frozenset[EntityRef]:
    """Deduplicate refs under `entity_eq` by canonicalizing each element."""
    return frozenset(r.canonical() for r in refs)


@dataclass(frozen=True)
class Query:
    """One natural-language question with an opaque identifier."""

    id: str
    text: str


@dataclass(frozen=True)
class Mention:
    """A text span the agent chose to look up, tied back to its query."""

    surface: str
    origin_query: str = ""


@dataclass(frozen=True)
class Candidate:
    """One ranked search hit: entity plus display title and short description."""

    entity: EntityRef
    title: str
    description: str
    rank: int
    score: float

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"candidate rank must be >= 1, got {self.rank}")


@dataclass(frozen=True)
class CandidateList:
    """The ordered top-k candidates retrieved for a single mention.

    Ranks run 1..n, scores never increase, and entities are pairwise
    distinct; all three are checked at construction time.
    """

    mention: Mention
    candidates: tuple[Candidate, ...]
    k_requested: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.k_requested < 1:
            raise ValueError("k_requested must be >= 1")
        if len(self.candidates) > self.k_requested:
            raise ValueError(
                f"{len(self.candidates)} candidates exceed k={self.k_requested}"
            )
        seen: set[EntityRef] = set()
        previous_score: float | None = None
        for position, cand in enumerate(self.candidates, start=1):
            if cand.rank != position:
                raise ValueError(
                    f"ranks must be consecutive from 1; got {cand.rank} at {position}"
                )
            if previous_score is not None and cand.score > previous_score:
                raise ValueError("candidate scores must be non-increasing")
            previous_score = cand.score
            key = cand.entity.canonical()
            if key in seen:
                raise ValueError(f"duplicate candidate entity {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class GoldRecord:
    """A dataset row: question, gold entity set, optional answers and document."""

    query: Query
    gold_entities: frozenset[EntityRef]
    answers: tuple[str, ...] = ()
    gold_document: Optional[EntityRef] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_entities", frozenset(self.gold_entities))
        object.__setattr__(self, "answers", tuple(self.answers))
        namespaces = {ref.namespace for ref in self.gold_entities}
        if len(namespaces) > 1:
            raise MixedNamespace(
                f"record {self.query.id!r} mixes namespaces: "
                f"{sorted(ns.value for ns in namespaces)}"
            )


@dataclass(frozen=True)
class LinkingResult:
    """Per-query linking output: one selection per mention, or None for NIL."""

    query: Query
    selections: tuple[tuple[Mention, Optional[EntityRef]], ...]
    think_retrieval: str = ""
    think_reader: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "selections", tuple(self.selections))

    @property
    def predicted_set(self) -> frozenset[EntityRef]:
        """All non-NIL selections, deduplicated under entity equality."""
        return canonical_set(e for _, e in self.selections if e is not None)


@dataclass(frozen=True)
class Document:
    """A corpus article. Titles are unique per corpus after normalization."""

    doc_id: str
    title: str
    first_paragraph: str
    full_text: str


@dataclass(frozen=True)
class Trajectory:
    """A full linking episode, recorded for training-data export.

    `matched_gold` is filled in by the trajectory-generation pipeline, which
    is the only place the gold set is known.
    """

    query: Query
    retrieval_output: str
    candidate_lists: tuple[CandidateList, ...] = field(default_factory=tuple)
    reader_output: str = ""
    final_entities: frozenset[EntityRef] = field(default_factory=frozenset)
    matched_gold: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidate_lists", tuple(self.candidate_lists))
        object.__setattr__(self, "final_entities", frozenset(self.final_entities))
