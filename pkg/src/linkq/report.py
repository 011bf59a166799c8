"""Result reporting: text tables, per-query JSONL, summary JSON, figures.

Every writer here is deterministic — keys are sorted and nothing stamps
timestamps — so reruns produce byte-identical files. Figures are rendered
with the Agg backend straight to files, next to the delimited output.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import EmptyEvaluation
from .evaluation import ElSummary, QaSummary
from .pipelines import ElResult, QaResult

_BAR_COLORS = ("#4c72b0", "#dd8452", "#55a868")


def format_el_report(summary: ElSummary) -> str:
    """Table-style text report of the macro entity-linking metrics."""
    if summary.query_count == 0:
        raise EmptyEvaluation("cannot report on zero queries")
    return (
        f"entity linking over {summary.query_count} queries\n"
        f"precision / recall / accuracy: "
        f"{summary.precision:.2f} / {summary.recall:.2f} / {summary.accuracy:.2f}"
    )


def format_qa_report(summary: QaSummary) -> str:
    if summary.query_count == 0:
        raise EmptyEvaluation("cannot report on zero queries")
    return (
        f"question answering over {summary.query_count} queries\n"
        f"hit@1 / em / f1: "
        f"{summary.hit_at_1:.2f} / {summary.em:.2f} / {summary.f1:.2f}"
    )


def el_summary_json(summary: ElSummary) -> str:
    return json.dumps(
        {
            "queries": summary.query_count,
            "precision": summary.precision,
            "recall": summary.recall,
            "accuracy": summary.accuracy,
        },
        sort_keys=True,
    )


def qa_summary_json(summary: QaSummary) -> str:
    return json.dumps(
        {
            "queries": summary.query_count,
            "hit_at_1": summary.hit_at_1,
            "em": summary.em,
            "f1": summary.f1,
        },
        sort_keys=True,
    )


def _sorted_keys(refs) -> list[str]:
    return sorted(ref.key for ref in refs)


def write_el_results(results: Sequence[ElResult], path: str | Path) -> None:
    """Per-query JSONL: id, predictions, gold, and the three scores."""
    with open(path, "w", encoding="utf-8") as handle:
        for result in results:
            handle.write(
                json.dumps(
                    {
                        "id": result.query.id,
                        "question": result.query.text,
                        "predicted": _sorted_keys(result.linking.predicted_set),
                        "gold": _sorted_keys(result.gold),
                        "precision": result.scores.precision,
                        "recall": result.scores.recall,
                        "accuracy": result.scores.accuracy,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


def write_qa_results(results: Sequence[QaResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for result in results:
            row = {
                "id": result.query.id,
                "question": result.query.text,
                "context_title": result.context_doc.title if result.context_doc else None,
                "raw_answer": result.raw_answer,
                "answer": result.extracted_answer,
            }
            if result.scores is not None:
                row["hit_at_1"] = result.scores.hit_at_1
                row["em"] = result.scores.em
                row["f1"] = result.scores.f1
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _metric_bars(
    names: Sequence[str], values: Sequence[float], title: str, path: Path
) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    bars = ax.bar(names, values, color=_BAR_COLORS[: len(names)])
    ax.set_ylim(0, 105)
    ax.set_ylabel("percent")
    ax.set_title(title)
    ax.bar_label(bars, fmt="%.2f", padding=2, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _score_histogram(
    values: Sequence[float], label: str, title: str, path: Path
) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.hist(values, bins=10, range=(0.0, 1.0), color=_BAR_COLORS[0], edgecolor="white")
    ax.set_xlabel(label)
    ax.set_ylabel("queries")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_el_figures(
    summary: ElSummary, results: Sequence[ElResult], out_dir: str | Path
) -> list[Path]:
    """Summary bar chart plus a per-query precision histogram."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bars_path = out_dir / "el_metrics.png"
    _metric_bars(
        ["precision", "recall", "accuracy"],
        [summary.precision, summary.recall, summary.accuracy],
        f"entity linking (n={summary.query_count})",
        bars_path,
    )
    hist_path = out_dir / "el_precision_hist.png"
    _score_histogram(
        [r.scores.precision for r in results],
        "per-query precision",
        "precision distribution",
        hist_path,
    )
    return [bars_path, hist_path]


def render_qa_figures(
    summary: QaSummary, results: Sequence[QaResult], out_dir: str | Path
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bars_path = out_dir / "qa_metrics.png"
    _metric_bars(
        ["hit@1", "em", "f1"],
        [summary.hit_at_1, summary.em, summary.f1],
        f"question answering (n={summary.query_count})",
        bars_path,
    )
    hist_path = out_dir / "qa_f1_hist.png"
    _score_histogram(
        [r.scores.f1 for r in results if r.scores is not None],
        "per-query F1",
        "answer F1 distribution",
        hist_path,
    )
    return [bars_path, hist_path]
