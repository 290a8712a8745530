"""Command-line interface, driven through the click test runner."""

import json
import shutil

import pytest
from click.testing import CliRunner

from capy.cli import main
from capy.notebook import parse_notebook
from support import envelope, parse_flowchart, ready_critics, reply


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def nb_path(tmp_path, fixtures_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "work.ipynb"
    shutil.copy(fixtures_dir / "one_code.ipynb", path)
    return path


def test_query_adds_cells(runner, nb_path, transcript):
    stub = transcript([
        envelope("markdown", "## Plan", False),
        envelope("code", "print(2+2)", False),
        envelope("markdown", "Four.", True)])
    result = runner.invoke(main, ["query", "-n", str(nb_path),
                                  "-q", "add numbers", "--stub", stub])
    assert result.exit_code == 0, result.output
    assert "loop_done" in result.output
    nb = parse_notebook(nb_path.read_bytes())
    assert len(nb.cells) == 4  # fixture cell + three assistant cells
    assert nb.cells[2].outputs[0].text == "4\n"


def test_query_output_path_leaves_input_untouched(runner, nb_path, transcript):
    stub = transcript([envelope("markdown", "Done.", True)])
    before = nb_path.read_bytes()
    out = nb_path.parent / "result.ipynb"
    result = runner.invoke(main, ["query", "-n", str(nb_path), "-q", "go",
                                  "--stub", stub, "-o", str(out)])
    assert result.exit_code == 0
    assert nb_path.read_bytes() == before
    assert len(parse_notebook(out.read_bytes()).cells) == 2


def test_query_failure_exits_nonzero(runner, nb_path, transcript):
    stub = transcript([reply("not an envelope"), reply("still not")])
    result = runner.invoke(main, ["query", "-n", str(nb_path), "-q", "go",
                                  "--stub", stub])
    assert result.exit_code == 1
    assert "loop_failed" in result.output


def test_query_multi_writes_transcript_for_replay(runner, nb_path, transcript):
    stub = transcript([envelope("markdown", "All done.", True)]
                      + ready_critics(4))
    record = nb_path.parent / "record.json"
    result = runner.invoke(main, ["query", "-n", str(nb_path), "-q", "go",
                                  "--stub", stub, "--multi",
                                  "--transcript-out", str(record)])
    assert result.exit_code == 0, result.output
    doc = json.loads(record.read_text())
    assert doc["wave_count"] == 2

    result = runner.invoke(main, ["replay", "-t", str(record)])
    assert result.exit_code == 0
    assert "task:        eda_turn" in result.output
    assert "waves:       2" in result.output
    assert "rounds:      1" in result.output
    assert "decisions:   0" in result.output
    assert "termination: all_ready" in result.output


def test_replay_rejects_garbage(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    result = runner.invoke(main, ["replay", "-t", str(bad)])
    assert result.exit_code != 0
    assert "unreadable transcript" in result.output


def test_insights_writes_parseable_diagram(runner, nb_path, transcript):
    graph = {"questions": [{
        "question": "What is the sum?",
        "nodes": [{"id": "s", "label": "the sum", "kind": "data_derived"},
                  {"id": "k", "label": "arithmetic",
                   "kind": "external_knowledge"}],
        "edges": [{"from": "k", "to": "s", "operation": "apply"}]}]}
    stub = transcript([reply(graph)])
    out = nb_path.parent / "graph.mmd"
    result = runner.invoke(main, ["insights", "-n", str(nb_path),
                                  "--stub", stub, "-o", str(out)])
    assert result.exit_code == 0, result.output
    parsed = parse_flowchart(out.read_text())
    assert parsed[0]["question"] == "What is the sum?"
    assert len(parsed[0]["nodes"]) == 2


def test_story_writes_html(runner, nb_path, transcript):
    story = {"blocks": [{"id": "p", "kind": "paragraph",
                         "text": "One plus one is two."}],
             "annotations": []}
    stub = transcript([reply(story)])
    out = nb_path.parent / "story.html"
    result = runner.invoke(main, ["story", "-n", str(nb_path),
                                  "-i", "keep it short",
                                  "--stub", stub, "-o", str(out)])
    assert result.exit_code == 0, result.output
    text = out.read_text()
    assert "One plus one is two." in text
    assert "<mark" not in text  # no annotations, no marks


def test_query_gateway_failure_reports_and_fails(runner, nb_path, transcript):
    result = runner.invoke(main, ["query", "-n", str(nb_path), "-q", "go",
                                  "--stub", transcript([])])
    assert result.exit_code == 1
    assert "loop_failed" in result.output
