"""End-to-end flows built on the agent: answer questions with linked
articles as context, batch-evaluate datasets, generate and filter
trajectories for fine-tuning data, and ingest datasets and corpora.

File formats owned here:
  dataset JSONL      {"id", "question", "gold_entities": [...],
                      "answers": [...], "gold_document": "..."}
  trajectory JSONL   one serialized linking episode per line, schema-versioned
  training JSONL     {"schema_version", "stage", "messages", "target"}
  mapping TSV        two columns, Freebase MID <tab> Wikidata QID
  checkpoint file    completed query ids, one per line
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .agent import (
    Agent,
    AgentConfig,
    Stage,
    Templates,
    build_reader_prompt,
    build_retrieval_prompt,
    read_template_sections,
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
    normalize_title,
)
from .errors import LinkqError, MixedNamespace, NotFound, ParseError
from .evaluation import ElScores, QaScores, el_metrics, qa_scores
from .llm import Backend, ChatMessage, SamplingParams
from .retrieval.store import CorpusStore

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_QID_SHAPE = re.compile(r"Q\d+\Z")
_MID_SHAPE = re.compile(r"m\.\S+\Z")
_BLANK_LINE_RE = re.compile(r"\n[ \t]*\n")

FALLBACK_PARAGRAPH_CHARS = 500


# --- answer generation ---

@dataclass(frozen=True)
class AnswerTemplate:
    """Prompt for the answering model; the user template takes
    {question} and {context}."""

    system_instruction: str
    user_template: str


def default_answer_template() -> AnswerTemplate:
    text = (resources.files("linkq") / "templates" / "answer.txt").read_text(
        encoding="utf-8"
    )
    return _answer_template_from_text(text)


def load_answer_template(path: str | Path) -> AnswerTemplate:
    return _answer_template_from_text(Path(path).read_text(encoding="utf-8"))


def _answer_template_from_text(text: str) -> AnswerTemplate:
    system = ""
    user = ""
    for name, content in read_template_sections(text):
        if name == "system":
            system = content
        elif name == "user":
            user = content
    if not user:
        raise ValueError("answer template needs a user section")
    return AnswerTemplate(system_instruction=system, user_template=user)


def extract_answer(completion: str) -> str:
    """The line after the last "Answer:" marker, else the whole reply."""
    marker = completion.rfind("Answer:")
    if marker == -1:
        return completion.strip()
    tail = completion[marker + len("Answer:"):].strip()
    if not tail:
        return ""
    return tail.splitlines()[0].strip()


@dataclass(frozen=True)
class QaResult:
    """One answered question: linking, context used, raw and extracted
    answers, and scores when gold answers were available."""

    query: Query
    linking: LinkingResult
    context_doc: Optional[Document]
    raw_answer: str
    extracted_answer: str
    scores: Optional[QaScores] = None


def answer_question(
    query: Query,
    agent: Agent,
    store: CorpusStore,
    backend: Backend,
    answer_template: AnswerTemplate | None = None,
    *,
    gold: GoldRecord | None = None,
    params: SamplingParams | None = None,
) -> QaResult:
    """Link the question, fetch the article for the first linked entity,
    and answer with that article as context.

    When linking finds nothing (or the article is missing from the store)
    the question is answered closed-book with an empty context and Hit@1
    scores zero.
    """
    template = answer_template or default_answer_template()
    linking, _ = agent.link(query)

    context_doc: Document | None = None
    predicted_doc: EntityRef | None = None
    for _, entity in linking.selections:
        if entity is None:
            continue
        try:
            context_doc = store.fetch(entity)
            predicted_doc = entity
        except NotFound:
            log.warning(
                "query %s: linked entity %r has no stored article; "
                "answering closed-book",
                query.id,
                entity.key,
            )
        break

    prompt = [
        ChatMessage.system(template.system_instruction),
        ChatMessage.user(
            template.user_template.format(
                question=query.text,
                context=context_doc.full_text if context_doc else "",
            )
        ),
    ]
    raw_answer = backend.complete(prompt, params)
    extracted = extract_answer(raw_answer)

    scores = None
    if gold is not None and gold.answers:
        scores = qa_scores(extracted, gold.answers, predicted_doc, gold.gold_document)
    return QaResult(
        query=query,
        linking=linking,
        context_doc=context_doc,
        raw_answer=raw_answer,
        extracted_answer=extracted,
        scores=scores,
    )


# --- batch evaluation ---

@dataclass(frozen=True)
class ElResult:
    query: Query
    linking: LinkingResult
    gold: frozenset[EntityRef]
    scores: ElScores


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def evaluate_el(
    records: Sequence[GoldRecord], agent: Agent, *, workers: int = 1
) -> list[ElResult]:
    """Link every record's question and score it against the gold set."""

    def one(record: GoldRecord) -> ElResult:
        linking, _ = agent.link(record.query)
        return ElResult(
            query=record.query,
            linking=linking,
            gold=record.gold_entities,
            scores=el_metrics(linking.predicted_set, record.gold_entities),
        )

    return _parallel_map(one, records, workers)


def evaluate_qa(
    records: Sequence[GoldRecord],
    agent: Agent,
    store: CorpusStore,
    backend: Backend,
    answer_template: AnswerTemplate | None = None,
    *,
    workers: int = 1,
) -> list[QaResult]:
    template = answer_template or default_answer_template()

    def one(record: GoldRecord) -> QaResult:
        return answer_question(
            record.query, agent, store, backend, template, gold=record
        )

    return _parallel_map(one, records, workers)


# --- trajectory generation ---

def _entity_to_dict(ref: EntityRef) -> dict:
    return {"namespace": ref.namespace.value, "key": ref.key}


def _entity_from_dict(obj: dict) -> EntityRef:
    return EntityRef(Namespace(obj["namespace"]), obj["key"])


def trajectory_to_dict(trajectory: Trajectory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "query": {"id": trajectory.query.id, "text": trajectory.query.text},
        "retrieval_output": trajectory.retrieval_output,
        "candidate_lists": [
            {
                "mention": {
                    "surface": cl.mention.surface,
                    "origin_query": cl.mention.origin_query,
                },
                "k_requested": cl.k_requested,
                "candidates": [
                    {
                        "namespace": c.entity.namespace.value,
                        "key": c.entity.key,
                        "title": c.title,
                        "description": c.description,
                        "rank": c.rank,
                        "score": c.score,
                    }
                    for c in cl.candidates
                ],
            }
            for cl in trajectory.candidate_lists
        ],
        "reader_output": trajectory.reader_output,
        "final_entities": sorted(
            (_entity_to_dict(e) for e in trajectory.final_entities),
            key=lambda d: (d["namespace"], d["key"]),
        ),
        "matched_gold": trajectory.matched_gold,
    }


def trajectory_from_dict(obj: dict) -> Trajectory:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported trajectory schema version {version!r}")
    lists = []
    for cl in obj["candidate_lists"]:
        mention = Mention(
            surface=cl["mention"]["surface"],
            origin_query=cl["mention"].get("origin_query", ""),
        )
        candidates = tuple(
            Candidate(
                entity=EntityRef(Namespace(c["namespace"]), c["key"]),
                title=c["title"],
                description=c["description"],
                rank=c["rank"],
                score=c["score"],
            )
            for c in cl["candidates"]
        )
        lists.append(
            CandidateList(
                mention=mention, candidates=candidates, k_requested=cl["k_requested"]
            )
        )
    return Trajectory(
        query=Query(id=obj["query"]["id"], text=obj["query"]["text"]),
        retrieval_output=obj["retrieval_output"],
        candidate_lists=tuple(lists),
        reader_output=obj["reader_output"],
        final_entities=frozenset(
            _entity_from_dict(e) for e in obj["final_entities"]
        ),
        matched_gold=obj["matched_gold"],
    )


def save_trajectories(trajectories: Iterable[Trajectory], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for trajectory in trajectories:
            handle.write(
                json.dumps(
                    trajectory_to_dict(trajectory), sort_keys=True, ensure_ascii=False
                )
                + "\n"
            )
            count += 1
    return count


def load_trajectories(path: str | Path) -> list[Trajectory]:
    trajectories = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                trajectories.append(trajectory_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ParseError(f"{path}, line {lineno}: {exc}") from exc
    return trajectories


def generate_trajectories(
    dataset: Sequence[GoldRecord],
    agent: Agent,
    *,
    trajectory_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    workers: int = 1,
) -> list[Trajectory]:
    """Run the agent over a dataset and record one trajectory per record.

    A record whose linking run fails still yields a trajectory (with empty
    outputs), and ``matched_gold`` is set by comparing the final entity set
    to the gold set. With ``checkpoint_path`` set, completed query ids are
    persisted (and their trajectories appended to ``trajectory_path``) as
    the run progresses, so an interrupted run resumes without re-querying.
    """
    completed: dict[str, Trajectory] = {}
    if checkpoint_path and trajectory_path:
        checkpoint_file = Path(checkpoint_path)
        trajectory_file = Path(trajectory_path)
        if checkpoint_file.exists() and trajectory_file.exists():
            done_ids = {
                line.strip()
                for line in checkpoint_file.read_text(encoding="utf-8").splitlines()
                if line.strip()
            }
            for trajectory in load_trajectories(trajectory_file):
                if trajectory.query.id in done_ids:
                    completed[trajectory.query.id] = trajectory

    def one(record: GoldRecord) -> Trajectory:
        try:
            _, trajectory = agent.link(record.query)
        except LinkqError as exc:
            log.warning("query %s failed: %s", record.query.id, exc)
            trajectory = Trajectory(query=record.query, retrieval_output="")
        matched = canonical_set(trajectory.final_entities) == canonical_set(
            record.gold_entities
        )
        return replace(trajectory, matched_gold=matched)

    pending = [r for r in dataset if r.query.id not in completed]

    trajectory_handle = checkpoint_handle = None
    if checkpoint_path and trajectory_path:
        trajectory_handle = open(trajectory_path, "a", encoding="utf-8")
        checkpoint_handle = open(checkpoint_path, "a", encoding="utf-8")

    def record_done(trajectory: Trajectory) -> None:
        completed[trajectory.query.id] = trajectory
        if trajectory_handle and checkpoint_handle:
            trajectory_handle.write(
                json.dumps(
                    trajectory_to_dict(trajectory), sort_keys=True, ensure_ascii=False
                )
                + "\n"
            )
            trajectory_handle.flush()
            checkpoint_handle.write(trajectory.query.id + "\n")
            checkpoint_handle.flush()

    try:
        if workers <= 1 or len(pending) <= 1:
            for record in pending:
                record_done(one(record))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(one, record) for record in pending]
                for future in as_completed(futures):
                    record_done(future.result())
    finally:
        if trajectory_handle:
            trajectory_handle.close()
        if checkpoint_handle:
            checkpoint_handle.close()

    return [completed[record.query.id] for record in dataset]


# --- fine-tuning data export ---

@dataclass(frozen=True)
class TrainingRecord:
    """One supervised example: a few-shot-free prompt and its target."""

    stage: Stage
    prompt_messages: tuple[ChatMessage, ...]
    target_completion: str


def build_training_records(
    trajectory: Trajectory, templates: Templates, config: AgentConfig
) -> list[TrainingRecord]:
    """Both stage records for one matched trajectory.

    Prompts are rebuilt without few-shot examples, since a fine-tuned model
    no longer needs them at inference time. Trajectories that never reached
    the reader stage only yield the retrieval record.
    """
    bare = replace(config, fewshot_enabled=False)
    records = [
        TrainingRecord(
            stage=Stage.RETRIEVAL,
            prompt_messages=tuple(
                build_retrieval_prompt(trajectory.query, templates.retrieval, bare)
            ),
            target_completion=trajectory.retrieval_output,
        )
    ]
    if trajectory.candidate_lists:
        records.append(
            TrainingRecord(
                stage=Stage.READER,
                prompt_messages=tuple(
                    build_reader_prompt(
                        trajectory.query,
                        trajectory.candidate_lists,
                        templates.reader.without_fewshots(),
                    )
                ),
                target_completion=trajectory.reader_output,
            )
        )
    return records


def filter_and_export(
    trajectories: Sequence[Trajectory],
    out_path: str | Path,
    templates: Templates,
    config: AgentConfig = AgentConfig(),
) -> int:
    """Keep only trajectories that exactly matched gold and write their
    training records as JSONL; returns the number of records written."""
    count = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for trajectory in trajectories:
            if not trajectory.matched_gold:
                continue
            for record in build_training_records(trajectory, templates, config):
                handle.write(
                    json.dumps(
                        {
                            "schema_version": SCHEMA_VERSION,
                            "stage": record.stage.value,
                            "messages": [
                                m.to_wire() for m in record.prompt_messages
                            ],
                            "target": record.target_completion,
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                count += 1
    return count


# --- dataset loading ---

def _infer_ref(key: str) -> EntityRef:
    if _QID_SHAPE.match(key):
        return EntityRef.qid(key)
    if _MID_SHAPE.match(key):
        # Freebase MIDs ride in the opaque-id namespace until remapped.
        return EntityRef.doc_id(key)
    return EntityRef.title(key)


def load_dataset(path: str | Path) -> list[GoldRecord]:
    """Read a JSONL dataset, inferring entity namespaces from key shapes."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}, line {lineno}: invalid JSON: {exc}") from exc
            try:
                query = Query(id=str(row["id"]), text=row["question"])
                golds = frozenset(_infer_ref(key) for key in row["gold_entities"])
                answers = tuple(row.get("answers") or ())
                gold_doc_raw = row.get("gold_document")
                gold_document = (
                    EntityRef.title(gold_doc_raw) if gold_doc_raw else None
                )
            except MixedNamespace:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}, line {lineno}: {exc}") from exc
            try:
                records.append(
                    GoldRecord(
                        query=query,
                        gold_entities=golds,
                        answers=answers,
                        gold_document=gold_document,
                    )
                )
            except MixedNamespace as exc:
                raise MixedNamespace(f"{path}, line {lineno}: {exc}") from exc
    return records


def save_dataset(records: Iterable[GoldRecord], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            row = {
                "id": record.query.id,
                "question": record.query.text,
                "gold_entities": sorted(ref.key for ref in record.gold_entities),
            }
            if record.answers:
                row["answers"] = list(record.answers)
            if record.gold_document is not None:
                row["gold_document"] = record.gold_document.key
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


# --- Freebase remapping ---

_MID_KEY_RE = re.compile(r"m\..+\Z")
_QID_VALUE_RE = re.compile(r"Q\d+\Z")


@dataclass(frozen=True)
class FreebaseMapping:
    """Freebase MID to Wikidata QID translation table."""

    table: dict[str, str]

    def __post_init__(self) -> None:
        for mid, qid in self.table.items():
            if not _MID_KEY_RE.match(mid):
                raise ValueError(f"malformed MID {mid!r}")
            if not _QID_VALUE_RE.match(qid):
                raise ValueError(f"malformed QID {qid!r} for MID {mid!r}")


def load_freebase_mapping(path: str | Path) -> FreebaseMapping:
    """Read a two-column tab-separated MID→QID file."""
    table = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"{path}, line {lineno}: expected two tab-separated columns"
                )
            table[parts[0]] = parts[1]
    return FreebaseMapping(table=table)


@dataclass
class MappingReport:
    """What the remapping dropped: per-MID occurrence counts and the ids of
    the records that had to go."""

    retained: int = 0
    dropped_query_ids: list[str] = field(default_factory=list)
    unmapped_mids: dict[str, int] = field(default_factory=dict)

    @property
    def dropped(self) -> int:
        return len(self.dropped_query_ids)


def apply_freebase_mapping(
    records: Sequence[GoldRecord], mapping: FreebaseMapping
) -> tuple[list[GoldRecord], MappingReport]:
    """Replace MID golds with QIDs; drop (and report) records with any
    unmapped MID."""
    report = MappingReport()
    kept: list[GoldRecord] = []
    for record in records:
        new_golds = []
        missing = []
        for ref in record.gold_entities:
            qid = mapping.table.get(ref.key)
            if qid is None:
                missing.append(ref.key)
            else:
                new_golds.append(EntityRef.qid(qid))
        if missing:
            report.dropped_query_ids.append(record.query.id)
            for mid in missing:
                report.unmapped_mids[mid] = report.unmapped_mids.get(mid, 0) + 1
        else:
            kept.append(replace(record, gold_entities=frozenset(new_golds)))
    report.retained = len(kept)
    return kept, report


# --- corpus ingestion ---

@dataclass(frozen=True)
class IngestResult:
    documents: tuple[Document, ...]
    duplicate_titles: tuple[str, ...]


def ingest_corpus(pages: Iterable[tuple[str, str]]) -> IngestResult:
    """Turn raw (title, full_text) pages into corpus documents.

    The first paragraph is the text up to the first blank line (or the first
    500 characters when there is none); doc ids are a stable hash of the
    normalized title. Later pages duplicating an earlier normalized title
    are dropped and reported.
    """
    documents: list[Document] = []
    duplicates: list[str] = []
    seen: set[str] = set()
    for title, full_text in pages:
        norm = normalize_title(title)
        if norm in seen:
            duplicates.append(title)
            continue
        seen.add(norm)
        match = _BLANK_LINE_RE.search(full_text)
        if match is not None:
            first_paragraph = full_text[: match.start()].rstrip()
        else:
            first_paragraph = full_text[:FALLBACK_PARAGRAPH_CHARS].rstrip()
        doc_id = hashlib.sha1(norm.encode("utf-8")).hexdigest()[:16]
        documents.append(
            Document(
                doc_id=doc_id,
                title=title,
                first_paragraph=first_paragraph,
                full_text=full_text,
            )
        )
    return IngestResult(
        documents=tuple(documents), duplicate_titles=tuple(duplicates)
    )


# --- SPARQL topic-entity extraction ---

_WHERE_RE = re.compile(r"WHERE\s*\{(.*)\}", re.DOTALL | re.IGNORECASE)
_SUBJECT_MID_RE = re.compile(
    r"(?:^|[{.;(])\s*(?:ns:|<http://rdf\.freebase\.com/ns/)(m\.[0-9a-zA-Z_]+)>?\s"
)


def extract_topic_mids(sparql: str) -> list[str]:
    """Freebase MIDs appearing as subject constants in the WHERE clause.

    This is an approximation of topic-entity selection: a MID that a triple
    pattern constrains as its subject is taken to be an entity the question
    is about. Order of first appearance is preserved.
    """
    match = _WHERE_RE.search(sparql)
    body = match.group(1) if match else sparql
    seen: set[str] = set()
    mids = []
    for found in _SUBJECT_MID_RE.finditer(body):
        mid = found.group(1)
        if mid not in seen:
            seen.add(mid)
            mids.append(mid)
    return mids
