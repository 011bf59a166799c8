from __future__ import annotations

import pytest

import fixture_data
from linkq.agent import Agent, AgentConfig, default_templates
from linkq.llm import ScriptedBackend
from linkq.retrieval import CorpusStore, build_index


@pytest.fixture(scope="session")
def toy_corpus():
    return fixture_data.make_corpus()


@pytest.fixture(scope="session")
def toy_index(toy_corpus):
    return build_index(toy_corpus)


@pytest.fixture(scope="session")
def toy_store(toy_corpus):
    return CorpusStore(toy_corpus)


@pytest.fixture(scope="session")
def el_dataset():
    return fixture_data.make_el_dataset()


@pytest.fixture(scope="session")
def qa_dataset():
    return fixture_data.make_qa_dataset()


@pytest.fixture
def el_backend():
    return ScriptedBackend(fixture_data.make_el_script())


@pytest.fixture
def qa_backend():
    return ScriptedBackend(fixture_data.make_qa_script())


@pytest.fixture
def el_agent(toy_index, el_backend):
    return Agent(
        searcher=toy_index,
        backend=el_backend,
        templates=default_templates(),
        config=AgentConfig(k=50),
    )


@pytest.fixture
def qa_agent(toy_index, qa_backend):
    return Agent(
        searcher=toy_index,
        backend=qa_backend,
        templates=default_templates(),
        config=AgentConfig(k=35),
    )
