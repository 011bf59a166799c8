import json

import pytest

import fixture_data
from linkq.cli import main


def run_cli(argv) -> int:
    """Invoke main(), normalizing argparse's SystemExit into a code."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


@pytest.fixture
def workspace(tmp_path):
    """Corpus, datasets, scripts and a built index on disk."""
    corpus = fixture_data.write_corpus_jsonl(tmp_path / "corpus.jsonl")
    el_dataset = fixture_data.write_el_dataset_jsonl(tmp_path / "el.jsonl")
    qa_dataset = fixture_data.write_qa_dataset_jsonl(tmp_path / "qa.jsonl")
    el_script = fixture_data.write_script_json(
        fixture_data.make_el_script(), tmp_path / "el_script.json"
    )
    qa_script = fixture_data.write_script_json(
        fixture_data.make_qa_script(), tmp_path / "qa_script.json"
    )
    index_dir = tmp_path / "idx"
    assert run_cli(["index", "build", "--corpus", str(corpus), "--out", str(index_dir)]) == 0
    return {
        "tmp": tmp_path,
        "corpus": corpus,
        "el_dataset": el_dataset,
        "qa_dataset": qa_dataset,
        "el_script": el_script,
        "qa_script": qa_script,
        "index": index_dir,
    }


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "linkq" in capsys.readouterr().out


def test_subcommand_help_exits_zero(capsys):
    for argv in (["eval", "--help"], ["eval", "el", "--help"], ["index", "--help"]):
        assert run_cli(argv) == 0
        assert capsys.readouterr().out


def test_unknown_subcommand_exits_two(capsys):
    assert run_cli(["frobnicate"]) == 2
    assert run_cli([]) == 2


def test_link_prints_result_json(workspace, capsys):
    code = run_cli([
        "link",
        "--question", "When did Michael Jordan return to the NBA?",
        "--id", "q02",
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["el_script"]),
    ])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["predicted"] == ["michael jordan"]
    assert out["selections"][0]["mention"] == "Michael Jordan"


def test_eval_el_missing_dataset_exits_one(workspace, capsys):
    code = run_cli([
        "eval", "el",
        "--dataset", str(workspace["tmp"] / "missing.jsonl"),
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["el_script"]),
    ])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_eval_el_end_to_end(workspace, capsys):
    out_path = workspace["tmp"] / "results.jsonl"
    summary_path = workspace["tmp"] / "summary.json"
    figures_dir = workspace["tmp"] / "figs"
    code = run_cli([
        "eval", "el",
        "--dataset", str(workspace["el_dataset"]),
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["el_script"]),
        "--out", str(out_path),
        "--summary", str(summary_path),
        "--figures", str(figures_dir),
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "90.00 / 85.00 / 80.00" in stdout
    summary = json.loads(summary_path.read_text())
    assert summary == {
        "accuracy": 80.0, "precision": 90.0, "recall": 85.0, "queries": 10,
    }
    assert len(out_path.read_text().splitlines()) == 10
    assert (figures_dir / "el_metrics.png").exists()
    assert (figures_dir / "el_precision_hist.png").exists()


def test_eval_el_json_mode_is_rerun_identical(workspace, capsys):
    argv = [
        "eval", "el",
        "--dataset", str(workspace["el_dataset"]),
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["el_script"]),
        "--json",
    ]
    assert run_cli(argv) == 0
    first = capsys.readouterr().out
    assert run_cli(argv) == 0
    second = capsys.readouterr().out
    assert first == second
    assert json.loads(first)["accuracy"] == 80.0


def test_eval_qa_end_to_end(workspace, capsys):
    code = run_cli([
        "eval", "qa",
        "--dataset", str(workspace["qa_dataset"]),
        "--corpus", str(workspace["corpus"]),
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["qa_script"]),
        "--json",
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary == {"em": 75.0, "f1": 75.0, "hit_at_1": 75.0, "queries": 4}


def test_trajectories_generate_and_export(workspace, capsys):
    traj_path = workspace["tmp"] / "traj.jsonl"
    code = run_cli([
        "trajectories", "generate",
        "--dataset", str(workspace["el_dataset"]),
        "--index", str(workspace["index"]),
        "--backend", "scripted",
        "--script", str(workspace["el_script"]),
        "--out", str(traj_path),
        "--checkpoint", str(workspace["tmp"] / "done.txt"),
    ])
    assert code == 0
    assert "8 matched gold" in capsys.readouterr().out

    train_path = workspace["tmp"] / "train.jsonl"
    code = run_cli([
        "trajectories", "export",
        "--trajectories", str(traj_path),
        "--out", str(train_path),
    ])
    assert code == 0
    assert "16 training records" in capsys.readouterr().out
    assert len(train_path.read_text().splitlines()) == 16


def test_map_freebase(workspace, capsys, tmp_path):
    dataset = tmp_path / "mids.jsonl"
    rows = [
        {"id": "r1", "question": "a?", "gold_entities": ["m.aaa"]},
        {"id": "r2", "question": "b?", "gold_entities": ["m.bbb", "m.zzz"]},
    ]
    dataset.write_text(
        "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8"
    )
    mapping = tmp_path / "map.tsv"
    mapping.write_text("m.aaa\tQ1\nm.bbb\tQ2\n", encoding="utf-8")
    out = tmp_path / "remapped.jsonl"
    report_path = tmp_path / "report.json"
    code = run_cli([
        "map-freebase",
        "--dataset", str(dataset),
        "--mapping", str(mapping),
        "--out", str(out),
        "--report", str(report_path),
    ])
    assert code == 0
    remapped = [json.loads(line) for line in out.read_text().splitlines()]
    assert remapped == [{"gold_entities": ["Q1"], "id": "r1", "question": "a?"}]
    report_obj = json.loads(report_path.read_text())
    assert report_obj["retained"] == 1
    assert report_obj["dropped_query_ids"] == ["r2"]
    assert report_obj["unmapped_mids"] == {"m.zzz": 1}


def test_scripted_backend_requires_script(workspace, capsys):
    code = run_cli([
        "link", "--question", "x?",
        "--index", str(workspace["index"]),
        "--backend", "scripted",
    ])
    assert code == 1
    assert "--script" in capsys.readouterr().err


def test_http_backend_requires_endpoint(workspace, capsys, monkeypatch):
    for var in ("LINKQ_ENDPOINT_URL", "LINKQ_MODEL_NAME"):
        monkeypatch.delenv(var, raising=False)
    code = run_cli([
        "link", "--question", "x?", "--index", str(workspace["index"]),
    ])
    assert code == 1
