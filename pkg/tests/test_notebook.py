"""Notebook model: lossless round-trip, provenance, context rendering."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capy.errors import MalformedFile, UnsupportedVersion
from capy.notebook import (
    PROVENANCE_KEY,
    Cell,
    Notebook,
    Output,
    append_cell,
    parse_notebook,
    render_context,
    serialize_notebook,
)


def all_fixture_paths(fixtures_dir):
    paths = sorted(fixtures_dir.glob("*.ipynb"))
    assert len(paths) >= 10
    return paths


def test_round_trip_equal_documents(fixtures_dir):
    for path in all_fixture_paths(fixtures_dir):
        nb1 = parse_notebook(path.read_bytes())
        payload = serialize_notebook(nb1)
        nb2 = parse_notebook(payload)
        assert nb2 == nb1, path.name


def test_serialization_is_a_fixpoint(fixtures_dir):
    for path in all_fixture_paths(fixtures_dir):
        payload = serialize_notebook(parse_notebook(path.read_bytes()))
        again = serialize_notebook(parse_notebook(payload))
        assert again == payload, path.name


def test_serialized_form_is_canonical_json(fixtures_dir):
    path = all_fixture_paths(fixtures_dir)[0]
    payload = serialize_notebook(parse_notebook(path.read_bytes()))
    doc = json.loads(payload)
    expected = (json.dumps(doc, ensure_ascii=False, sort_keys=True,
                           indent=1) + "\n").encode()
    assert payload == expected


def test_unknown_fields_survive(fixtures_dir):
    raw = (fixtures_dir / "unknown_metadata.ipynb").read_bytes()
    nb = parse_notebook(raw)
    doc = json.loads(serialize_notebook(nb))
    assert doc["metadata"]["widgets"] == {"state": {}}
    assert doc["metadata"]["vendor_tool"] == "v9"
    assert doc["cells"][0]["metadata"]["custom"] == {"nested": [1, 2, {"x": "y"}]}
    assert doc["nbformat_minor"] == 4


def test_provenance_parsed_and_reserialized(fixtures_dir):
    raw = (fixtures_dir / "assistant_cells.ipynb").read_bytes()
    nb = parse_notebook(raw)
    assert [c.provenance for c in nb.cells] == ["assistant", "assistant"]
    # the reserved key is lifted out of metadata on parse
    assert all(PROVENANCE_KEY not in c.metadata for c in nb.cells)
    doc = json.loads(serialize_notebook(nb))
    assert all(c["metadata"][PROVENANCE_KEY] == "assistant"
               for c in doc["cells"])


def test_user_cells_have_no_provenance_key(fixtures_dir):
    nb = parse_notebook((fixtures_dir / "one_code.ipynb").read_bytes())
    doc = json.loads(serialize_notebook(nb))
    assert PROVENANCE_KEY not in doc["cells"][0]["metadata"]


def test_string_list_sources_joined(fixtures_dir):
    nb = parse_notebook((fixtures_dir / "markdown_only.ipynb").read_bytes())
    assert nb.cells[1].source == "line 1\nline 2"


def test_unicode_preserved(fixtures_dir):
    nb = parse_notebook((fixtures_dir / "unicode.ipynb").read_bytes())
    assert "数据分析" in nb.cells[0].source
    assert "🐍" in nb.cells[1].source
    # ensure_ascii=False keeps the text readable in the file
    assert "数据分析" in serialize_notebook(nb).decode("utf-8")


def test_output_kinds_classified(fixtures_dir):
    nb = parse_notebook((fixtures_dir / "error_output.ipynb").read_bytes())
    out = nb.cells[0].outputs[0]
    assert out.kind == "error"
    assert out.ename == "ZeroDivisionError"

    nb = parse_notebook((fixtures_dir / "display_image.ipynb").read_bytes())
    out = nb.cells[0].outputs[0]
    assert out.kind == "rich"
    assert out.mime == "image/png"

    nb = parse_notebook((fixtures_dir / "stream_outputs.ipynb").read_bytes())
    out = nb.cells[0].outputs[0]
    assert out.kind == "stream_stdout"
    assert out.text == "hi\n"


def test_malformed_inputs_rejected():
    with pytest.raises(MalformedFile):
        parse_notebook(b"{not json")
    with pytest.raises(MalformedFile):
        parse_notebook(b'{"metadata": {}}')
    with pytest.raises(UnsupportedVersion):
        parse_notebook(b'{"cells": [], "nbformat": 3}')
    doc = {"cells": [{"cell_type": "raw", "source": "x"}], "nbformat": 4}
    with pytest.raises(MalformedFile):
        parse_notebook(json.dumps(doc).encode())


def test_duplicate_cell_ids_rejected():
    doc = {"cells": [
        {"cell_type": "markdown", "id": "a", "metadata": {}, "source": "x"},
        {"cell_type": "markdown", "id": "a", "metadata": {}, "source": "y"}],
        "metadata": {}, "nbformat": 4, "nbformat_minor": 5}
    with pytest.raises(MalformedFile):
        parse_notebook(json.dumps(doc).encode())


def test_missing_ids_filled_in():
    doc = {"cells": [{"cell_type": "markdown", "metadata": {}, "source": "x"}],
           "metadata": {}, "nbformat": 4, "nbformat_minor": 5}
    nb = parse_notebook(json.dumps(doc).encode())
    assert nb.cells[0].id


def test_markdown_cells_reject_outputs():
    with pytest.raises(ValueError):
        Cell(id="x", kind="markdown", source="t",
             outputs=[Output.stream("stdout", "no")])
    with pytest.raises(ValueError):
        Cell(id="x", kind="bogus", source="t")


def test_append_cell():
    nb = Notebook()
    id1 = append_cell(nb, "markdown", "hello", provenance="assistant")
    id2 = append_cell(nb, "code", "1+1")
    assert id1 != id2
    assert nb.cell_by_id(id1).provenance == "assistant"
    assert nb.cell_by_id(id2).provenance == "user"
    assert [c.id for c in nb.cells] == [id1, id2]


# -- property tests -----------------------------------------------------------

_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80)

_outputs = st.lists(st.one_of(
    st.builds(Output.stream, st.sampled_from(["stdout", "stderr"]), _text),
    st.builds(Output.rich, st.just("text/plain"), _text),
    st.builds(Output.error, st.just("ValueError"), _text,
              st.lists(_text, max_size=3)),
), max_size=3)


@st.composite
def _notebooks(draw):
    n = draw(st.integers(0, 6))
    cells = []
    for i in range(n):
        kind = draw(st.sampled_from(["code", "markdown"]))
        provenance = draw(st.sampled_from(["user", "assistant"]))
        source = draw(_text)
        if kind == "code":
            cells.append(Cell(id=f"c{i}", kind=kind, source=source,
                              outputs=draw(_outputs), provenance=provenance,
                              execution_count=draw(st.one_of(
                                  st.none(), st.integers(1, 99)))))
        else:
            cells.append(Cell(id=f"c{i}", kind=kind, source=source,
                              provenance=provenance))
    return Notebook(cells=cells)


@given(_notebooks())
@settings(max_examples=60)
def test_round_trip_property(nb):
    assert parse_notebook(serialize_notebook(nb)) == nb


@given(_notebooks(), st.integers(1, 2000))
@settings(max_examples=60)
def test_render_context_respects_budget(nb, budget):
    text = render_context(nb, budget)
    if not nb.cells:
        assert text == ""
        return
    # over budget only in the degenerate case where the final cell alone
    # is larger than the budget
    if len(text) > budget:
        assert text.startswith(f"--- cell {len(nb.cells) - 1} ")


@given(_notebooks())
@settings(max_examples=40)
def test_render_context_keeps_last_cell_whole(nb):
    if not nb.cells:
        return
    text = render_context(nb, 50)
    last = nb.cells[-1]
    assert last.source in text


def test_render_context_elides_oldest_first():
    nb = Notebook(cells=[
        Cell(id=f"c{i}", kind="markdown", source=f"body of cell {i} " * 5)
        for i in range(4)])
    full = render_context(nb, 100_000)
    assert all(f"body of cell {i}" in full for i in range(4))
    tight = render_context(nb, len(full) - 10)
    assert "body of cell 0" not in tight
    assert "body of cell 3" in tight


def test_render_context_rejects_bad_budget():
    with pytest.raises(ValueError):
        render_context(Notebook(), 0)


def test_render_context_image_placeholder(fixtures_dir):
    nb = parse_notebook((fixtures_dir / "display_image.ipynb").read_bytes())
    text = render_context(nb, 10_000)
    assert "[rich output image/png" in text
    assert "iVBOR" not in text  # no base64 payloads in prompt context
