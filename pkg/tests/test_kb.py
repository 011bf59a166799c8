import json

import pytest
import requests

from linkq.core import Mention, Namespace
from linkq.errors import BackendUnavailable, QuotaExceeded
from linkq.retrieval import WikidataClient, WikipediaClient


class FakeResponse:
    def __init__(self, status_code: int, payload: dict):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"HTTP {self.status_code}")


class FakeSession:
    """Queue of responses (or exceptions); records every request."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def get(self, url, params=None, timeout=None):
        self.requests.append((url, dict(params or {})))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


WIKIDATA_PAYLOAD = {
    "search": [
        {"id": "Q1142550", "label": "The Girl in White",
         "description": "1952 film by John Sturges"},
        {"id": "Q2", "label": "Girl in White", "description": "painting"},
    ]
}

WIKIPEDIA_PAYLOAD = {
    "pages": [
        {"title": "The Girl in White", "description": "1952 American film"},
        {"title": "Girl in White", "description": None},
    ]
}


def test_wikidata_search_parses_candidates():
    session = FakeSession([FakeResponse(200, WIKIDATA_PAYLOAD)])
    client = WikidataClient(session=session)
    got = client.search(Mention("The Girl in White"), k=5)
    assert len(got.candidates) == 2
    first = got.candidates[0]
    assert first.entity.namespace is Namespace.WIKIDATA_QID
    assert first.entity.key == "Q1142550"
    assert first.title == "The Girl in White"
    assert "girl in white" in first.title.casefold()
    assert first.rank == 1
    scores = [c.score for c in got.candidates]
    assert scores == sorted(scores, reverse=True)
    url, params = session.requests[0]
    assert params["action"] == "wbsearchentities"
    assert params["language"] == "en"
    assert params["limit"] == 5


def test_wikipedia_search_parses_titles():
    session = FakeSession([FakeResponse(200, WIKIPEDIA_PAYLOAD)])
    client = WikipediaClient(session=session)
    got = client.search(Mention("girl in white"), k=5)
    assert got.candidates[0].entity.namespace is Namespace.ARTICLE_TITLE
    assert got.candidates[0].entity.key == "the girl in white"
    assert got.candidates[1].description == ""


def test_k1_is_prefix_of_k5_snapshot():
    # same upstream rows, different k: k=1 must be the first element of k=5
    session = FakeSession([FakeResponse(200, WIKIDATA_PAYLOAD),
                           FakeResponse(200, WIKIDATA_PAYLOAD)])
    client = WikidataClient(session=session)
    top5 = client.search(Mention("x"), k=5)
    top1 = client.search(Mention("x"), k=1)
    assert top1.candidates[0].entity == top5.candidates[0].entity
    assert len(top1.candidates) == 1


def test_cache_avoids_second_request(tmp_path):
    session = FakeSession([FakeResponse(200, WIKIDATA_PAYLOAD)])
    client = WikidataClient(session=session, cache_dir=tmp_path)
    first = client.search(Mention("The Girl in White"), k=5)
    second = client.search(Mention("The Girl in White"), k=5)
    assert len(session.requests) == 1
    assert first == second


def test_cache_rerun_is_byte_identical(tmp_path):
    def serialize(cl):
        return json.dumps(
            [(c.entity.key, c.title, c.description, c.rank, c.score)
             for c in cl.candidates],
            sort_keys=True,
        ).encode()

    session = FakeSession([FakeResponse(200, WIKIDATA_PAYLOAD)])
    client = WikidataClient(session=session, cache_dir=tmp_path)
    first = serialize(client.search(Mention("x"), k=5))

    fresh_client = WikidataClient(
        session=FakeSession([]), cache_dir=tmp_path
    )
    second = serialize(fresh_client.search(Mention("x"), k=5))
    assert first == second


def test_unreachable_endpoint_raises_backend_unavailable():
    session = FakeSession([requests.ConnectionError("refused")])
    client = WikidataClient(session=session, max_retries=0)
    with pytest.raises(BackendUnavailable):
        client.search(Mention("x"), k=3)


def test_persistent_429_raises_quota_exceeded():
    session = FakeSession([FakeResponse(429, {})] * 3)
    client = WikidataClient(session=session, max_retries=2, sleep=lambda _: None)
    with pytest.raises(QuotaExceeded):
        client.search(Mention("x"), k=3)


def test_transient_failure_then_success():
    session = FakeSession([
        FakeResponse(500, {}),
        FakeResponse(200, WIKIDATA_PAYLOAD),
    ])
    client = WikidataClient(session=session, max_retries=1, sleep=lambda _: None)
    got = client.search(Mention("x"), k=2)
    assert len(got.candidates) == 2
    assert len(session.requests) == 2


def test_make_searcher_dispatch(tmp_path, toy_corpus):
    from linkq.errors import ConfigError
    from linkq.retrieval import (
        SearchBackend,
        SearchConfig,
        TitleIndex,
        build_index,
        make_searcher,
    )

    build_index(toy_corpus).save(tmp_path / "idx")
    local = make_searcher(
        SearchConfig(k=5), index_path=tmp_path / "idx"
    )
    assert isinstance(local, TitleIndex)

    with pytest.raises(ConfigError):
        make_searcher(SearchConfig(k=5))

    wikidata = make_searcher(
        SearchConfig(k=5, backend=SearchBackend.WIKIDATA_API),
        session=FakeSession([FakeResponse(200, WIKIDATA_PAYLOAD)]),
    )
    assert isinstance(wikidata, WikidataClient)
    assert len(wikidata.search(Mention("x"), k=2).candidates) == 2
