"""The two-stage linking workflow: find mentions, search, disambiguate.

Stage one prompts the model to emit ``Search("...")`` calls for entities it
sees in the question. Stage two shows it the retrieved candidates for all
mentions at once and asks for one pick (or NONE) per mention, with the
reasoning fenced in ``<think>`` tags. Both stages are plain text in, plain
text out; this module owns the prompt construction and the parsing.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .core import CandidateList, EntityRef, LinkingResult, Mention, Query, Trajectory
from .errors import InvalidQuery, LinkqError, MalformedReaderOutput
from .llm import Backend, ChatMessage, SamplingParams

log = logging.getLogger(__name__)

# What the retrieval stage should say when a question names nothing.
NO_ENTITY_MARKER = "No entities of interest."

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Answer again: keep any "
    "reasoning inside one <think>...</think> block, then write Answers: on "
    'its own line followed by one line per mention in exactly the form '
    '"mention -> number" or "mention -> NONE", using only numbers shown in '
    "that mention's candidate list."
)


class Stage(Enum):
    RETRIEVAL = "retrieval"
    READER = "reader"


_SEARCH_CALL_RE = re.compile(r'Search\(\s*("[^"\n]*"|[^()\n]*?)\s*\)')
_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_LINE_RE = re.compile(r"^(.+?)\s*->\s*(\d+|NONE|None|none)\s*$")


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


@dataclass(frozen=True)
class PromptTemplate:
    """One stage's instruction, user-message template and few-shot examples.

    Retrieval-stage examples must demonstrate the Search("...") format (or
    the explicit no-entity marker); reader-stage examples must demonstrate a
    <think> block followed by an answer block.
    """

    stage: Stage
    system_instruction: str
    user_template: str = "{question}"
    fewshot_examples: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "fewshot_examples", tuple(tuple(pair) for pair in self.fewshot_examples)
        )
        if not self.system_instruction.strip():
            raise ValueError("system instruction must be non-empty")
        for _, output in self.fewshot_examples:
            if self.stage is Stage.RETRIEVAL:
                if "Search(" not in output and NO_ENTITY_MARKER not in output:
                    raise ValueError(
                        "retrieval example output lacks a Search() call "
                        "and the no-entity marker"
                    )
            else:
                if not _reader_example_ok(output):
                    raise ValueError(
                        "reader example output must contain a <think> block "
                        "followed by an answer block"
                    )

    def without_fewshots(self) -> "PromptTemplate":
        return replace(self, fewshot_examples=())


def _reader_example_ok(output: str) -> bool:
    match = _THINK_RE.search(output)
    if match is None:
        return False
    tail = output[match.end():]
    return any(_ANSWER_LINE_RE.match(line) for line in tail.splitlines())


@dataclass(frozen=True)
class Templates:
    """The template pair driving one agent."""

    retrieval: PromptTemplate
    reader: PromptTemplate


@dataclass(frozen=True)
class AgentConfig:
    """Per-run knobs. k defaults to the tool-use setting of 50 candidates;
    question-answering runs override it to 35."""

    k: int = 50
    max_mentions: int = 8
    reprompt_on_malformed: bool = True
    fewshot_enabled: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_mentions < 1:
            raise ValueError("max_mentions must be >= 1")


class EntitySearcher(Protocol):
    """Any candidate source: the local title index or a remote KB client."""

    def search(self, mention: Mention, k: int) -> CandidateList: ...


# --- template files ---

_SECTION_RE = re.compile(
    r"^=== (system|user|example input|example output) ===[ \t]*$", re.MULTILINE
)


def read_template_sections(text: str) -> list[tuple[str, str]]:
    """Split a template file into ordered (section-name, content) pairs."""
    headers = list(_SECTION_RE.finditer(text))
    if not headers:
        raise ValueError("template file has no === section === headers")
    sections = []
    for i, header in enumerate(headers):
        end = headers[i + 1].start() if i + 1 < len(headers) else len(text)
        sections.append((header.group(1), text[header.end():end].strip("\n")))
    return sections


def template_from_text(text: str, stage: Stage) -> PromptTemplate:
    system = ""
    user = "{question}"
    examples: list[tuple[str, str]] = []
    pending_input: str | None = None
    for name, content in read_template_sections(text):
        if name == "system":
            system = content
        elif name == "user":
            user = content
        elif name == "example input":
            pending_input = content
        elif name == "example output":
            if pending_input is None:
                raise ValueError("example output without a preceding example input")
            examples.append((pending_input, content))
            pending_input = None
    if pending_input is not None:
        raise ValueError("example input without a following example output")
    return PromptTemplate(stage, system, user, tuple(examples))


def load_template(path: str | Path, stage: Stage) -> PromptTemplate:
    return template_from_text(Path(path).read_text(encoding="utf-8"), stage)


def _packaged_text(name: str) -> str:
    return (resources.files("linkq") / "templates" / name).read_text(encoding="utf-8")


def default_templates() -> Templates:
    """The template pair shipped with the package."""
    return Templates(
        retrieval=template_from_text(_packaged_text("retrieval.txt"), Stage.RETRIEVAL),
        reader=template_from_text(_packaged_text("reader.txt"), Stage.READER),
    )


def load_templates(directory: str | Path) -> Templates:
    """Load retrieval.txt and reader.txt from a template directory."""
    directory = Path(directory)
    return Templates(
        retrieval=load_template(directory / "retrieval.txt", Stage.RETRIEVAL),
        reader=load_template(directory / "reader.txt", Stage.READER),
    )


# --- prompt construction ---

def build_retrieval_prompt(
    query: Query, template: PromptTemplate, config: AgentConfig
) -> list[ChatMessage]:
    """System instruction, optional few-shots, then the bare question."""
    if template.stage is not Stage.RETRIEVAL:
        raise ValueError(f"expected a retrieval template, got {template.stage}")
    if not query.text.strip():
        raise InvalidQuery(f"query {query.id!r} has empty text")
    messages = [ChatMessage.system(template.system_instruction)]
    if config.fewshot_enabled:
        for example_input, example_output in template.fewshot_examples:
            messages.append(ChatMessage.user(example_input))
            messages.append(ChatMessage.assistant(example_output))
    messages.append(ChatMessage.user(template.user_template.format(question=query.text)))
    return messages


def parse_search_calls(
    completion: str, config: AgentConfig, *, origin_query: str = ""
) -> list[Mention]:
    """Pull the Search(X) arguments out of a retrieval completion.

    Arguments may be quoted or bare; surrounding quotes and whitespace are
    trimmed, empties dropped, duplicates removed case-insensitively keeping
    the first occurrence, and the result capped at ``config.max_mentions``.
    Bare arguments cannot contain parentheses; quoted ones can, as long as
    the text has no embedded double quote (a documented limitation).
    """
    mentions: list[Mention] = []
    seen: set[str] = set()
    for match in _SEARCH_CALL_RE.finditer(completion):
        surface = _strip_quotes(match.group(1).strip()).strip()
        if not surface:
            continue
        folded = surface.casefold()
        if folded in seen:
            continue
        seen.add(folded)
        mentions.append(Mention(surface=surface, origin_query=origin_query))
        if len(mentions) == config.max_mentions:
            break
    return mentions


def render_candidate_blocks(lists: Sequence[CandidateList]) -> str:
    """One block per mention: a header line then "[rank] title: description"."""
    blocks = []
    for cl in lists:
        lines = [f"Mention: {cl.mention.surface}"]
        if not cl.candidates:
            lines.append("(no results)")
        for cand in cl.candidates:
            description = " ".join(cand.description.split())[:300]
            lines.append(f"[{cand.rank}] {cand.title}: {description}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def build_reader_prompt(
    query: Query, lists: Sequence[CandidateList], template: PromptTemplate
) -> list[ChatMessage]:
    """One prompt covering every mention's candidate list at once."""
    if template.stage is not Stage.READER:
        raise ValueError(f"expected a reader template, got {template.stage}")
    if not lists:
        raise ValueError("reader prompt needs at least one candidate list")
    for cl in lists:
        if not cl.mention.surface.strip():
            raise ValueError("candidate list has an empty mention surface")
    messages = [ChatMessage.system(template.system_instruction)]
    for example_input, example_output in template.fewshot_examples:
        messages.append(ChatMessage.user(example_input))
        messages.append(ChatMessage.assistant(example_output))
    body = template.user_template.format(
        question=query.text, candidates=render_candidate_blocks(lists)
    )
    messages.append(ChatMessage.user(body))
    return messages


def parse_reader_output(
    completion: str, lists: Sequence[CandidateList]
) -> tuple[list[tuple[Mention, Optional[EntityRef]]], str]:
    """Turn a reader completion into per-mention selections plus the CoT text.

    Selections are resolved through candidate ranks, so the output can never
    contain an entity that was not in the mention's list. Mentions the model
    did not answer for map to NIL. Raises :class:`MalformedReaderOutput` when
    there is no answer block at all or an index is out of range.
    """
    think = "\n".join(m.group(1).strip() for m in _THINK_RE.finditer(completion))
    outside_think = _THINK_RE.sub("", completion)

    answers: dict[str, Optional[int]] = {}
    found_any = False
    for line in outside_think.splitlines():
        match = _ANSWER_LINE_RE.match(line.strip())
        if match is None:
            continue
        found_any = True
        name = _strip_quotes(match.group(1).strip().lstrip("-*• \t")).strip()
        value = match.group(2)
        answers[name.casefold()] = None if value.casefold() == "none" else int(value)
    if not found_any:
        raise MalformedReaderOutput("completion contains no answer block")

    selections: list[tuple[Mention, Optional[EntityRef]]] = []
    for cl in lists:
        choice = answers.get(cl.mention.surface.casefold())
        if choice is None:
            selections.append((cl.mention, None))
            continue
        if not 1 <= choice <= len(cl.candidates):
            raise MalformedReaderOutput(
                f"index {choice} out of range for mention "
                f"{cl.mention.surface!r} ({len(cl.candidates)} candidates)"
            )
        selections.append((cl.mention, cl.candidates[choice - 1].entity))
    return selections, think


# --- the full workflow ---

def link(
    query: Query,
    searcher: EntitySearcher,
    backend: Backend,
    templates: Templates,
    config: AgentConfig = AgentConfig(),
    *,
    params: SamplingParams | None = None,
) -> tuple[LinkingResult, Trajectory]:
    """Run the full two-stage workflow for one query.

    At most two model calls are made (plus one re-prompt when the reader
    reply is malformed and ``reprompt_on_malformed`` is set). A query whose
    retrieval stage yields no mentions short-circuits to an empty result
    without a reader call. A failed candidate search degrades that mention
    to an empty list instead of aborting the query.
    """
    retrieval_prompt = build_retrieval_prompt(query, templates.retrieval, config)
    retrieval_output = backend.complete(retrieval_prompt, params)
    mentions = parse_search_calls(retrieval_output, config, origin_query=query.id)

    if not mentions:
        result = LinkingResult(query, (), think_retrieval=retrieval_output)
        trajectory = Trajectory(query, retrieval_output)
        return result, trajectory

    lists: list[CandidateList] = []
    for mention in mentions:
        try:
            lists.append(searcher.search(mention, config.k))
        except LinkqError as exc:
            log.warning(
                "search failed for %r (query %s): %s", mention.surface, query.id, exc
            )
            lists.append(CandidateList(mention, (), config.k))

    reader_template = (
        templates.reader if config.fewshot_enabled else templates.reader.without_fewshots()
    )
    reader_prompt = build_reader_prompt(query, lists, reader_template)
    reader_output = backend.complete(reader_prompt, params)

    try:
        selections, think = parse_reader_output(reader_output, lists)
    except MalformedReaderOutput as exc:
        if config.reprompt_on_malformed:
            retry_prompt = reader_prompt + [
                ChatMessage.assistant(reader_output or "(empty)"),
                ChatMessage.user(FORMAT_REMINDER),
            ]
            reader_output = backend.complete(retry_prompt, params)
            try:
                selections, think = parse_reader_output(reader_output, lists)
            except MalformedReaderOutput as retry_exc:
                log.warning(
                    "query %s: reader output unparseable after re-prompt (%s); "
                    "degrading to NIL",
                    query.id,
                    retry_exc,
                )
                selections, think = [(m, None) for m in mentions], ""
        else:
            log.warning(
                "query %s: reader output unparseable (%s); degrading to NIL",
                query.id,
                exc,
            )
            selections, think = [(m, None) for m in mentions], ""

    result = LinkingResult(
        query,
        tuple(selections),
        think_retrieval=retrieval_output,
        think_reader=think,
    )
    trajectory = Trajectory(
        query=query,
        retrieval_output=retrieval_output,
        candidate_lists=tuple(lists),
        reader_output=reader_output,
        final_entities=result.predicted_set,
    )
    return result, trajectory


@dataclass(frozen=True)
class Agent:
    """A searcher/backend/template bundle exposing ``link(query)``."""

    searcher: EntitySearcher
    backend: Backend
    templates: Templates
    config: AgentConfig = AgentConfig()
    params: SamplingParams | None = None

    def link(self, query: Query) -> tuple[LinkingResult, Trajectory]:
        return link(
            query,
            self.searcher,
            self.backend,
            self.templates,
            self.config,
            params=self.params,
        )
