"""Command-line interface.

Subcommands: ``index build``, ``link``, ``eval el``, ``eval qa``,
``trajectories generate``, ``trajectories export`` and ``map-freebase``.
Exit codes: 0 on success, 1 on operational errors, 2 on usage errors.

A scripted backend (``--backend scripted --script replies.json``) is a
first-class citizen so every command can run offline and deterministically.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipelines, report
from .agent import Agent, AgentConfig, EntitySearcher, Templates, default_templates, load_templates
from .config import QA_K, TOOL_USE_K, CliConfig, load_cli_config
from .core import LinkingResult, Query
from .errors import ConfigError, LinkqError
from .evaluation import aggregate_el, aggregate_qa
from .llm import Backend, BackendConfig, HttpBackend, SamplingParams, ScriptedBackend
from .retrieval import SearchBackend, SearchConfig, build_index, load_corpus, make_searcher

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linkq",
        description="Entity linking agent toolkit for question answering.",
    )
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="increase log verbosity"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    # index build
    index = commands.add_parser("index", help="manage the local title index")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    index_build = index_sub.add_parser("build", help="build an index from a corpus")
    index_build.add_argument("--corpus", required=True, help="corpus JSONL file")
    index_build.add_argument("--out", required=True, help="index output directory")
    index_build.add_argument("--k1", type=float, default=None)
    index_build.add_argument("--b", type=float, default=None)
    index_build.set_defaults(func=cmd_index_build)

    # link
    link = commands.add_parser("link", help="link entities in one question")
    link.add_argument("--question", required=True)
    link.add_argument("--id", default="q0", help="query id used in the output")
    _add_search_flags(link)
    _add_backend_flags(link)
    _add_agent_flags(link)
    link.set_defaults(func=cmd_link)

    # eval el / eval qa
    evaluate = commands.add_parser("eval", help="run dataset evaluations")
    eval_sub = evaluate.add_subparsers(dest="eval_command", required=True)

    eval_el = eval_sub.add_parser("el", help="entity-linking evaluation")
    eval_el.add_argument("--dataset", required=True, help="dataset JSONL file")
    _add_search_flags(eval_el)
    _add_backend_flags(eval_el)
    _add_agent_flags(eval_el)
    _add_report_flags(eval_el)
    eval_el.set_defaults(func=cmd_eval_el)

    eval_qa = eval_sub.add_parser("qa", help="question-answering evaluation")
    eval_qa.add_argument("--dataset", required=True, help="dataset JSONL file")
    eval_qa.add_argument("--corpus", required=True, help="corpus JSONL file")
    eval_qa.add_argument("--answer-template", help="answer prompt template file")
    _add_search_flags(eval_qa)
    _add_backend_flags(eval_qa)
    _add_agent_flags(eval_qa)
    _add_report_flags(eval_qa)
    eval_qa.set_defaults(func=cmd_eval_qa)

    # trajectories generate / export
    trajectories = commands.add_parser(
        "trajectories", help="generate and export fine-tuning data"
    )
    traj_sub = trajectories.add_subparsers(dest="traj_command", required=True)

    traj_gen = traj_sub.add_parser("generate", help="run the agent over a dataset")
    traj_gen.add_argument("--dataset", required=True)
    traj_gen.add_argument("--out", required=True, help="trajectory JSONL output")
    traj_gen.add_argument(
        "--checkpoint", help="checkpoint file enabling resumable runs"
    )
    _add_search_flags(traj_gen)
    _add_backend_flags(traj_gen)
    _add_agent_flags(traj_gen)
    traj_gen.set_defaults(func=cmd_traj_generate)

    traj_export = traj_sub.add_parser(
        "export", help="filter matched trajectories into training records"
    )
    traj_export.add_argument("--trajectories", required=True)
    traj_export.add_argument("--out", required=True, help="training JSONL output")
    _add_agent_flags(traj_export)
    traj_export.set_defaults(func=cmd_traj_export)

    # map-freebase
    remap = commands.add_parser(
        "map-freebase", help="convert Freebase MID golds to Wikidata QIDs"
    )
    remap.add_argument("--dataset", required=True)
    remap.add_argument("--mapping", required=True, help="MID→QID TSV file")
    remap.add_argument("--out", required=True, help="remapped dataset JSONL")
    remap.add_argument("--report", help="write the drop report JSON here")
    remap.set_defaults(func=cmd_map_freebase)

    return parser


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        choices=["http", "scripted"],
        default="http",
        help="model backend kind",
    )
    parser.add_argument("--script", help="scripted replies JSON (scripted backend)")
    parser.add_argument("--endpoint", dest="endpoint_url", help="chat endpoint URL")
    parser.add_argument("--model", dest="model_name", help="model name")


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--search",
        dest="search_backend",
        choices=["local", "wikidata", "wikipedia"],
        default=None,
        help="candidate search backend",
    )
    parser.add_argument("--index", dest="index_path", help="local index directory")
    parser.add_argument("--cache-dir", dest="cache_dir", help="KB response cache")


def _add_agent_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="candidates per mention")
    parser.add_argument("--max-mentions", dest="max_mentions", type=int)
    parser.add_argument("--templates", dest="templates_dir", help="template directory")
    parser.add_argument("--no-fewshot", action="store_true", help="drop few-shot examples")
    parser.add_argument("--workers", type=int, help="parallel worker count")


def _add_report_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="per-query results JSONL")
    parser.add_argument("--summary", help="summary JSON file")
    parser.add_argument("--figures", help="directory for rendered figures")
    parser.add_argument(
        "--json", action="store_true", help="print the summary as JSON"
    )


def _resolve_config(args: argparse.Namespace) -> CliConfig:
    override_names = (
        "endpoint_url",
        "model_name",
        "k",
        "max_mentions",
        "templates_dir",
        "search_backend",
        "index_path",
        "cache_dir",
        "workers",
    )
    overrides = {
        name: getattr(args, name)
        for name in override_names
        if getattr(args, name, None) is not None
    }
    return load_cli_config(args.config, overrides=overrides)


def _make_backend(cfg: CliConfig, args: argparse.Namespace) -> Backend:
    if getattr(args, "backend", "http") == "scripted":
        if not getattr(args, "script", None):
            raise ConfigError("--backend scripted requires --script")
        return ScriptedBackend.from_file(args.script)
    if not cfg.endpoint_url or not cfg.model_name:
        raise ConfigError(
            "http backend needs an endpoint URL and model name "
            "(flags, LINKQ_* env vars, or the config file)"
        )
    return HttpBackend(
        BackendConfig(
            endpoint_url=cfg.endpoint_url,
            model_name=cfg.model_name,
            api_key_env_var=cfg.api_key_env,
            timeout=cfg.timeout,
            max_in_flight=cfg.max_in_flight,
            max_retries=cfg.max_retries,
        ),
        supports_repetition_penalty=cfg.send_repetition_penalty,
    )


def _make_searcher(cfg: CliConfig, k: int) -> EntitySearcher:
    try:
        backend = SearchBackend(cfg.search_backend)
    except ValueError:
        raise ConfigError(f"unknown search backend {cfg.search_backend!r}") from None
    if backend is SearchBackend.LOCAL_BM25 and not cfg.index_path:
        raise ConfigError("local search needs --index (or retrieval.index_path)")
    return make_searcher(
        SearchConfig(k=k, backend=backend),
        index_path=cfg.index_path,
        cache_dir=cfg.cache_dir,
        **({} if backend is SearchBackend.LOCAL_BM25
           else {"max_in_flight": cfg.max_in_flight}),
    )


def _make_templates(cfg: CliConfig) -> Templates:
    if cfg.templates_dir:
        return load_templates(cfg.templates_dir)
    return default_templates()


def _make_agent(
    cfg: CliConfig, args: argparse.Namespace, backend: Backend, default_k: int
) -> Agent:
    k = cfg.effective_k(default_k)
    config = AgentConfig(
        k=k,
        max_mentions=cfg.max_mentions,
        fewshot_enabled=not getattr(args, "no_fewshot", False),
    )
    params = SamplingParams(
        temperature=cfg.temperature,
        top_p=cfg.top_p,
        repetition_penalty=cfg.repetition_penalty,
        max_tokens=cfg.max_tokens,
    )
    return Agent(
        searcher=_make_searcher(cfg, k),
        backend=backend,
        templates=_make_templates(cfg),
        config=config,
        params=params,
    )


def _linking_to_dict(result: LinkingResult) -> dict:
    return {
        "id": result.query.id,
        "question": result.query.text,
        "selections": [
            {
                "mention": mention.surface,
                "entity": (
                    {"namespace": entity.namespace.value, "key": entity.key}
                    if entity is not None
                    else None
                ),
            }
            for mention, entity in result.selections
        ],
        "predicted": sorted(ref.key for ref in result.predicted_set),
        "think_retrieval": result.think_retrieval,
        "think_reader": result.think_reader,
    }


# --- subcommand implementations ---

def cmd_index_build(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    del cfg  # config carries nothing index-build needs today
    store = load_corpus(args.corpus)
    kwargs = {}
    if args.k1 is not None:
        kwargs["k1"] = args.k1
    if args.b is not None:
        kwargs["b"] = args.b
    index = build_index(iter(store), **kwargs)
    index.save(args.out)
    print(f"indexed {index.n_docs} documents into {args.out}")
    return 0


def cmd_link(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    backend = _make_backend(cfg, args)
    agent = _make_agent(cfg, args, backend, default_k=TOOL_USE_K)
    result, _ = agent.link(Query(id=args.id, text=args.question))
    print(json.dumps(_linking_to_dict(result), sort_keys=True, ensure_ascii=False))
    return 0


def cmd_eval_el(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    backend = _make_backend(cfg, args)
    agent = _make_agent(cfg, args, backend, default_k=TOOL_USE_K)
    records = pipelines.load_dataset(args.dataset)
    results = pipelines.evaluate_el(records, agent, workers=cfg.effective_workers())
    summary = aggregate_el([r.scores for r in results])
    if args.out:
        report.write_el_results(results, args.out)
    if args.summary:
        Path(args.summary).write_text(
            report.el_summary_json(summary) + "\n", encoding="utf-8"
        )
    if args.figures:
        report.render_el_figures(summary, results, args.figures)
    print(report.el_summary_json(summary) if args.json else report.format_el_report(summary))
    return 0


def cmd_eval_qa(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    backend = _make_backend(cfg, args)
    agent = _make_agent(cfg, args, backend, default_k=QA_K)
    records = pipelines.load_dataset(args.dataset)
    store = load_corpus(args.corpus)
    template = (
        pipelines.load_answer_template(args.answer_template)
        if args.answer_template
        else None
    )
    results = pipelines.evaluate_qa(
        records, agent, store, backend, template, workers=cfg.effective_workers()
    )
    scored = [r.scores for r in results if r.scores is not None]
    summary = aggregate_qa(scored)
    if args.out:
        report.write_qa_results(results, args.out)
    if args.summary:
        Path(args.summary).write_text(
            report.qa_summary_json(summary) + "\n", encoding="utf-8"
        )
    if args.figures:
        report.render_qa_figures(summary, results, args.figures)
    print(report.qa_summary_json(summary) if args.json else report.format_qa_report(summary))
    return 0


def cmd_traj_generate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    backend = _make_backend(cfg, args)
    agent = _make_agent(cfg, args, backend, default_k=TOOL_USE_K)
    records = pipelines.load_dataset(args.dataset)
    if args.checkpoint:
        trajectories = pipelines.generate_trajectories(
            records,
            agent,
            trajectory_path=args.out,
            checkpoint_path=args.checkpoint,
            workers=cfg.effective_workers(),
        )
    else:
        trajectories = pipelines.generate_trajectories(
            records, agent, workers=cfg.effective_workers()
        )
        pipelines.save_trajectories(trajectories, args.out)
    matched = sum(t.matched_gold for t in trajectories)
    print(f"{len(trajectories)} trajectories written, {matched} matched gold")
    return 0


def cmd_traj_export(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    trajectories = pipelines.load_trajectories(args.trajectories)
    templates = _make_templates(cfg)
    config = AgentConfig(
        k=cfg.effective_k(TOOL_USE_K), max_mentions=cfg.max_mentions
    )
    count = pipelines.filter_and_export(trajectories, args.out, templates, config)
    print(f"{count} training records written to {args.out}")
    return 0


def cmd_map_freebase(args: argparse.Namespace) -> int:
    records = pipelines.load_dataset(args.dataset)
    mapping = pipelines.load_freebase_mapping(args.mapping)
    remapped, mapping_report = pipelines.apply_freebase_mapping(records, mapping)
    pipelines.save_dataset(remapped, args.out)
    report_obj = {
        "retained": mapping_report.retained,
        "dropped": mapping_report.dropped,
        "dropped_query_ids": mapping_report.dropped_query_ids,
        "unmapped_mids": mapping_report.unmapped_mids,
    }
    if args.report:
        Path(args.report).write_text(
            json.dumps(report_obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(
        f"retained {mapping_report.retained} records, "
        f"dropped {mapping_report.dropped} "
        f"({len(mapping_report.unmapped_mids)} distinct unmapped MIDs)"
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LinkqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
