"""Entity search: local BM25 title index, corpus store, and remote KB clients."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .bm25 import (
    DEFAULT_B,
    DEFAULT_K1,
    FORMAT_VERSION,
    TitleIndex,
    build_index,
    tokenize,
)
from .kb import (
    WIKIDATA_ENDPOINT,
    WIKIPEDIA_ENDPOINT,
    ResponseCache,
    WikidataClient,
    WikipediaClient,
    kb_search,
)
from .store import CorpusStore, fetch_document, load_corpus, save_corpus
from ..errors import ConfigError


class SearchBackend(Enum):
    LOCAL_BM25 = "local"
    WIKIDATA_API = "wikidata"
    WIKIPEDIA_API = "wikipedia"


@dataclass(frozen=True)
class SearchConfig:
    """How many candidates to fetch, and from where."""

    k: int
    backend: SearchBackend = SearchBackend.LOCAL_BM25

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


def make_searcher(
    config: SearchConfig,
    *,
    index_path: str | Path | None = None,
    cache_dir: str | Path | None = None,
    **client_kwargs,
):
    """Build the searcher a SearchConfig describes.

    Local search loads a persisted title index from ``index_path``; the
    remote backends get a disk cache at ``cache_dir`` plus any extra client
    keyword arguments (timeouts, retry counts, sessions).
    """
    if config.backend is SearchBackend.LOCAL_BM25:
        if not index_path:
            raise ConfigError("local search needs an index directory")
        return TitleIndex.load(index_path)
    if config.backend is SearchBackend.WIKIDATA_API:
        return WikidataClient(cache_dir=cache_dir, **client_kwargs)
    return WikipediaClient(cache_dir=cache_dir, **client_kwargs)


__all__ = [
    "DEFAULT_B",
    "DEFAULT_K1",
    "FORMAT_VERSION",
    "CorpusStore",
    "ResponseCache",
    "SearchBackend",
    "SearchConfig",
    "TitleIndex",
    "WIKIDATA_ENDPOINT",
    "WIKIPEDIA_ENDPOINT",
    "WikidataClient",
    "WikipediaClient",
    "build_index",
    "fetch_document",
    "kb_search",
    "load_corpus",
    "make_searcher",
    "save_corpus",
    "tokenize",
]
