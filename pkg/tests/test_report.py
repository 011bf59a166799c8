import pytest


from linkq.errors import EmptyEvaluation
from linkq.evaluation import ElSummary, QaSummary, aggregate_el, aggregate_qa
from linkq.pipelines import evaluate_el, evaluate_qa
from linkq.report import (
    el_summary_json,
    format_el_report,
    format_qa_report,
    qa_summary_json,
    render_el_figures,
    render_qa_figures,
    write_el_results,
    write_qa_results,
)


def test_format_el_report_percent_layout():
    summary = ElSummary(precision=100.0, recall=50.0, accuracy=25.0, query_count=4)
    text = format_el_report(summary)
    assert "100.00 / 50.00 / 25.00" in text
    assert "4 queries" in text


def test_format_qa_report_percent_layout():
    summary = QaSummary(hit_at_1=75.0, em=75.0, f1=75.0, query_count=4)
    assert "75.00 / 75.00 / 75.00" in format_qa_report(summary)


def test_report_refuses_zero_queries():
    with pytest.raises(EmptyEvaluation):
        format_el_report(ElSummary(0, 0, 0, 0))
    with pytest.raises(EmptyEvaluation):
        format_qa_report(QaSummary(0, 0, 0, 0))


def test_summary_json_deterministic():
    summary = ElSummary(precision=90.0, recall=85.0, accuracy=80.0, query_count=10)
    assert el_summary_json(summary) == el_summary_json(summary)
    assert el_summary_json(summary).startswith('{"accuracy": 80.0')
    qa = QaSummary(hit_at_1=75.0, em=75.0, f1=75.0, query_count=4)
    assert qa_summary_json(qa) == qa_summary_json(qa)


def test_write_el_results_rows(tmp_path, el_agent, el_dataset):
    import json

    results = evaluate_el(el_dataset, el_agent)
    path = tmp_path / "results.jsonl"
    write_el_results(results, path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(el_dataset)
    q01 = rows[0]
    assert q01["id"] == "q01"
    assert q01["predicted"] == ["once a gentleman", "the girl in white"]
    assert q01["gold"] == ["once a gentleman", "the girl in white"]
    assert q01["accuracy"] == 1


def test_write_qa_results_rows(tmp_path, qa_agent, qa_backend, toy_store, qa_dataset):
    import json

    results = evaluate_qa(qa_dataset, qa_agent, toy_store, qa_backend)
    path = tmp_path / "qa.jsonl"
    write_qa_results(results, path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0]["answer"] == "1952"
    assert rows[0]["context_title"] == "The Girl in White"
    assert rows[2]["context_title"] is None


def test_render_el_figures(tmp_path, el_agent, el_dataset):
    results = evaluate_el(el_dataset, el_agent)
    summary = aggregate_el([r.scores for r in results])
    paths = render_el_figures(summary, results, tmp_path / "figs")
    assert [p.name for p in paths] == ["el_metrics.png", "el_precision_hist.png"]
    for path in paths:
        assert path.exists() and path.stat().st_size > 1000


def test_render_qa_figures(tmp_path, qa_agent, qa_backend, toy_store, qa_dataset):
    results = evaluate_qa(qa_dataset, qa_agent, toy_store, qa_backend)
    summary = aggregate_qa([r.scores for r in results if r.scores])
    paths = render_qa_figures(summary, results, tmp_path / "figs")
    assert all(p.exists() and p.stat().st_size > 1000 for p in paths)
