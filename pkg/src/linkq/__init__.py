"""linkq: an entity linking agent toolkit for question answering.

The workflow: an LLM spots entity mentions in a question and emits
Search("...") calls; a retriever (local BM25 title index or a public KB
API) returns candidates; the LLM picks one entity per mention with its
reasoning in <think> tags. On top of that sit a QA pipeline that uses the
linked article as answer context, metric suites for both tasks, and
fine-tuning data generation with exact-match filtering.
"""

from .agent import (
    Agent,
    AgentConfig,
    PromptTemplate,
    Stage,
    Templates,
    build_reader_prompt,
    build_retrieval_prompt,
    default_templates,
    link,
    load_templates,
    parse_reader_output,
    parse_search_calls,
)
from .core import (
    Candidate,
    CandidateList,
    Document,
    EntityRef,
    GoldRecord,
    LinkingResult,
    Mention,
    Namespace,
    Query,
    Trajectory,
    canonical_set,
    entity_eq,
    normalize_title,
)
from .evaluation import (
    ElScores,
    ElSummary,
    QaScores,
    QaSummary,
    aggregate_el,
    aggregate_qa,
    el_metrics,
    exact_match,
    hit_at_1,
    normalize_answer,
    token_f1,
)
from .llm import (
    Backend,
    BackendConfig,
    ChatMessage,
    HttpBackend,
    SamplingParams,
    ScriptedBackend,
)
from .retrieval import (
    CorpusStore,
    TitleIndex,
    WikidataClient,
    WikipediaClient,
    build_index,
    load_corpus,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentConfig",
    "Backend",
    "BackendConfig",
    "Candidate",
    "CandidateList",
    "ChatMessage",
    "CorpusStore",
    "Document",
    "ElScores",
    "ElSummary",
    "EntityRef",
    "GoldRecord",
    "HttpBackend",
    "LinkingResult",
    "Mention",
    "Namespace",
    "PromptTemplate",
    "QaScores",
    "QaSummary",
    "Query",
    "SamplingParams",
    "ScriptedBackend",
    "Stage",
    "Templates",
    "TitleIndex",
    "Trajectory",
    "WikidataClient",
    "WikipediaClient",
    "aggregate_el",
    "aggregate_qa",
    "build_index",
    "build_reader_prompt",
    "build_retrieval_prompt",
    "canonical_set",
    "default_templates",
    "el_metrics",
    "entity_eq",
    "exact_match",
    "hit_at_1",
    "link",
    "load_corpus",
    "load_templates",
    "normalize_answer",
    "normalize_title",
    "parse_reader_output",
    "parse_search_calls",
    "token_f1",
    "tokenize",
]
