"""Remote knowledge-base search clients (Wikidata and Wikipedia).

Responses are cached on disk keyed by (endpoint, mention, k), which makes
reruns deterministic and keeps us polite toward the public APIs. Transient
failures retry with backoff; a 429 that survives the retries surfaces as
:class:`QuotaExceeded` so callers can distinguish throttling from outages.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from pathlib import Path
from typing import Callable

import requests

from ..core import Candidate, CandidateList, EntityRef, Mention
from ..errors import BackendUnavailable, QuotaExceeded

log = logging.getLogger(__name__)

WIKIDATA_ENDPOINT = "https://www.wikidata.org/w/api.php"
WIKIPEDIA_ENDPOINT = "https://en.wikipedia.org/w/rest.php/v1/search/page"

_RETRY_BASE_DELAY = 0.5
_RETRY_FACTOR = 2.0


class ResponseCache:
    """Tiny JSON-per-file cache; a None directory disables it."""

    def __init__(self, directory: str | Path | None) -> None:
        self._directory = Path(directory) if directory else None
        if self._directory:
            self._directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        assert self._directory is not None
        return self._directory / f"{digest}.json"

    def get(self, key: str) -> list | None:
        if self._directory is None:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, payload: list) -> None:
        if self._directory is None:
            return
        self._path(key).write_text(
            json.dumps(payload, sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )


class _RemoteClient:
    """Shared plumbing: session, cache, retries, admission limit."""

    def __init__(
        self,
        endpoint: str,
        *,
        cache_dir: str | Path | None = None,
        timeout: float = 15.0,
        max_retries: int = 3,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self._cache = ResponseCache(cache_dir)
        self._timeout = timeout
        self._max_retries = max_retries
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()
        self._sleep = sleep

    def _cache_key(self, surface: str, k: int) -> str:
        return f"{self.endpoint}\n{surface}\n{k}"

    def _get_json(self, params: dict) -> dict:
        last_status: int | None = None
        last_failure = "no attempt made"
        for attempt in range(self._max_retries + 1):
            if attempt:
                self._sleep(_RETRY_BASE_DELAY * (_RETRY_FACTOR ** (attempt - 1)))
            try:
                with self._gate:
                    response = self._session.get(
                        self.endpoint, params=params, timeout=self._timeout
                    )
            except (requests.Timeout, requests.ConnectionError, OSError) as exc:
                last_status, last_failure = None, f"transport error: {exc}"
                log.debug("attempt %d failed: %s", attempt + 1, last_failure)
                continue
            last_status = response.status_code
            if response.status_code == 429 or response.status_code >= 500:
                last_failure = f"HTTP {response.status_code}"
                log.debug("attempt %d failed: %s", attempt + 1, last_failure)
                continue
            response.raise_for_status()
            return response.json()
        if last_status == 429:
            raise QuotaExceeded(f"{self.endpoint} still throttling after retries")
        raise BackendUnavailable(
            f"{self.endpoint} unavailable after {self._max_retries + 1} attempts "
            f"(last: {last_failure})"
        )

    def _build_list(self, mention: Mention, rows: list, k: int) -> CandidateList:
        candidates = []
        for position, row in enumerate(rows[:k], start=1):
            candidates.append(
                Candidate(
                    entity=self._entity(row),
                    title=row["title"],
                    description=row.get("description") or "",
                    rank=position,
                    score=1.0 / position,
                )
            )
        return CandidateList(mention=mention, candidates=tuple(candidates), k_requested=k)

    def _entity(self, row: dict) -> EntityRef:
        raise NotImplementedError

    def _fetch_rows(self, surface: str, k: int) -> list:
        raise NotImplementedError

    def search(self, mention: Mention, k: int) -> CandidateList:
        if k < 1:
            raise ValueError("k must be >= 1")
        key = self._cache_key(mention.surface, k)
        rows = self._cache.get(key)
        if rows is None:
            rows = self._fetch_rows(mention.surface, k)
            self._cache.put(key, rows)
        return self._build_list(mention, rows, k)


class WikidataClient(_RemoteClient):
    """Entity search against the Wikidata ``wbsearchentities`` API."""

    def __init__(self, endpoint: str = WIKIDATA_ENDPOINT, **kwargs) -> None:
        super().__init__(endpoint, **kwargs)

    def _fetch_rows(self, surface: str, k: int) -> list:
        payload = self._get_json(
            {
                "action": "wbsearchentities",
                "search": surface,
                "language": "en",
                "format": "json",
                "limit": k,
            }
        )
        rows = []
        for item in payload.get("search", []):
            rows.append(
                {
                    "id": item["id"],
                    "title": item.get("label") or item["id"],
                    "description": item.get("description") or "",
                }
            )
        return rows

    def _entity(self, row: dict) -> EntityRef:
        return EntityRef.qid(row["id"])


class WikipediaClient(_RemoteClient):
    """Title search against the Wikipedia REST page-search API."""

    def __init__(self, endpoint: str = WIKIPEDIA_ENDPOINT, **kwargs) -> None:
        super().__init__(endpoint, **kwargs)

    def _fetch_rows(self, surface: str, k: int) -> list:
        payload = self._get_json({"q": surface, "limit": k})
        rows = []
        for item in payload.get("pages", []):
            rows.append(
                {
                    "title": item["title"],
                    "description": item.get("description") or "",
                }
            )
        return rows

    def _entity(self, row: dict) -> EntityRef:
        return EntityRef.title(row["title"])


def kb_search(client: _RemoteClient, mention: Mention, k: int) -> CandidateList:
    return client.search(mention, k)
