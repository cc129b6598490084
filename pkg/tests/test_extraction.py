import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semigraph.canonical import ATTRIBUTE, SUBJECT, EmptyTable, SemiTable, with_roles
from semigraph.extraction import (
    EmptyList,
    LabeledExample,
    NoListFound,
    NoTableFound,
    ParseError,
    extract_path,
    parse_html_list,
    parse_html_lists,
    parse_html_table,
    parse_html_tables,
    read_corpus,
    read_jsonl,
    write_corpus,
    write_jsonl,
)

GDP = """
<h2>Ignored heading</h2>
<table>
  <caption>Top 10 Cities by Projected GDP</caption>
  <tr><th>Rank</th><th>City</th><th>Country</th></tr>
  <tr><td>#1</td><td>New <b>York</b></td><td>United States</td></tr>
  <tr><td>#2</td><td>Tokyo</td><td>Japan</td></tr>
  <tr><td>#3</td><td>Los   Angeles</td><td>United States</td></tr>
</table>
"""


def test_parse_table_with_caption_and_header():
    t = parse_html_table(GDP)
    assert t.caption == "Top 10 Cities by Projected GDP"
    assert t.header == ("Rank", "City", "Country")
    assert t.body == (("#1", "New York", "United States"), ("#2", "Tokyo", "Japan"),
                      ("#3", "Los Angeles", "United States"))
    assert t.column_roles == (ATTRIBUTE, SUBJECT, ATTRIBUTE)


def test_caption_falls_back_to_heading():
    html = "<h3>Rivers</h3><p>intro</p><table><tr><td>Nile</td><td>6650</td></tr></table>"
    assert parse_html_table(html).caption == "Rivers"
    assert parse_html_table("<table><tr><td>a</td></tr></table>").caption == ""


def test_colspan_and_rowspan_duplicated():
    html = """<table>
      <tr><td colspan="2">wide</td><td>c</td></tr>
      <tr><td rowspan="2">tall</td><td>x</td><td>y</td></tr>
      <tr><td>p</td><td>q</td></tr></table>"""
    t = parse_html_table(html)
    assert t.body == (("wide", "wide", "c"), ("tall", "x", "y"), ("tall", "p", "q"))


def test_scripts_dropped_and_whitespace_collapsed():
    html = "<table><tr><td> a <script>var x=1;</script>\n\n b </td><td>c<style>p{}</style></td></tr></table>"
    assert parse_html_table(html).body == (("a b", "c"),)


def test_table_errors():
    with pytest.raises(NoTableFound):
        parse_html_table("<p>nothing</p>")
    with pytest.raises(EmptyTable):
        parse_html_table("<table><tr><th>A</th><th>B</th></tr><tr><td></td><td> </td></tr></table>")


def test_multiple_tables_skip_empty_and_nested():
    html = ("<table><tr><td>one</td></tr></table><table></table>"
            "<table><tr><td>outer<table><tr><td>inner</td></tr></table></td></tr></table>")
    tables = parse_html_tables(html)
    assert [t.body[0][0] for t in tables] == ["one", "outer inner"]


def test_vertical_markup_is_transposed():
    html = "<table><tr><td>Name</td><td>Ann</td></tr><tr><td>Country</td><td>Chile</td></tr></table>"
    t = parse_html_table(html)
    assert t.header == ("Name", "Country") and t.body == (("Ann", "Chile"),)


def test_lists():
    ol = parse_html_list("<h1>Trips</h1><ol><li>Dubai</li><li>Interlaken</li><li>Queenstown</li></ol>")
    assert ol.kind == "list" and ol.n_rows == 3 and ol.n_cols == 1 and ol.header is None
    assert ol.caption == "Trips"
    dl = parse_html_list("<dl><dt>t1</dt><dd>d1</dd><dt>t2</dt><dd>d2</dd></dl>")
    assert [r[0] for r in dl.body] == ["t1: d1", "t2: d2"]
    nested = parse_html_list("<ul><li>a<ul><li>a1</li><li>a2</li></ul></li><li>b</li></ul>")
    assert [r[0] for r in nested.body] == ["a", "a1", "a2", "b"]


def test_list_errors():
    with pytest.raises(NoListFound):
        parse_html_list("<table><tr><td>x</td></tr></table>")
    with pytest.raises(EmptyList):
        parse_html_list("<ul><li> </li><li></li></ul>")
    assert parse_html_lists("<ul><li></li></ul><ol><li>z</li></ol>")[0].body == (("z",),)


def test_parsing_is_deterministic():
    assert parse_html_table(GDP) == parse_html_table(GDP)


def test_extract_path(tmp_path):
    (tmp_path / "a.html").write_text(GDP, encoding="utf-8")
    (tmp_path / "b.htm").write_text("<ul><li>x</li></ul>", encoding="utf-8")
    assert [name for name, _ in extract_path(tmp_path, "table")] == ["a-0"]
    assert [name for name, _ in extract_path(tmp_path, "list")] == ["b-0"]


def sample_examples():
    t = with_roles(SemiTable(body=(("acme", "5"), ("hooli", "3")), caption="firms", header=("firm", "rating")))
    l = SemiTable.from_list(["x", "y"], caption="letters")
    return [LabeledExample("acme rating 5", t, 1, "e1"), LabeledExample("letters", l, 0, "e2"),
            LabeledExample("no header", with_roles(SemiTable(body=(("a",),))), 1, "e3")]


def test_jsonl_round_trip(tmp_path):
    p = tmp_path / "d.jsonl"
    write_jsonl(sample_examples(), p)
    assert read_jsonl(p) == sample_examples()


def test_jsonl_trailing_blank_line(tmp_path):
    p = tmp_path / "d.jsonl"
    write_jsonl(sample_examples(), p)
    p.write_text(p.read_text(encoding="utf-8") + "\n\n", encoding="utf-8")
    assert len(read_jsonl(p)) == 3


def _record(**kw):
    rec = {"id": "r", "query": "q", "caption": "", "header": None, "rows": [["a"]], "kind": "table", "label": 1}
    rec.update(kw)
    return json.dumps(rec)


@pytest.mark.parametrize("bad", [_record(label=2), _record(label=True), _record(query=""),
                                 _record(rows=[["a", "b"], ["c"]]), _record(rows=[[1]]), "{not json", "[1, 2]"])
def test_jsonl_rejects_with_line_number(tmp_path, bad):
    p = tmp_path / "bad.jsonl"
    p.write_text(_record() + "\n" + bad + "\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_jsonl(p)
    assert err.value.line == 2


def test_strict_mode_rejects_unknown_fields(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text(_record(extra=1) + "\n", encoding="utf-8")
    assert len(read_jsonl(p)) == 1
    with pytest.raises(ParseError):
        read_jsonl(p, strict=True)


def test_corpus_without_queries(tmp_path):
    p = tmp_path / "u.jsonl"
    pairs = [("", ex.example) for ex in sample_examples()]
    write_corpus(pairs, p)
    assert read_corpus(p) == pairs


cell = st.text(alphabet="ab é1\"\\", max_size=4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(cell, min_size=2, max_size=2), min_size=1, max_size=4), st.booleans(),
       st.text(alphabet="qrs", min_size=1, max_size=5), st.integers(0, 1))
def test_jsonl_round_trip_property(rows, with_header, query, label):
    import tempfile
    from pathlib import Path

    t = with_roles(SemiTable(body=tuple(map(tuple, rows)), caption="c", header=("h1", "h2") if with_header else None))
    ex = [LabeledExample(query, t, label, "id")]
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "r.jsonl"
        write_jsonl(ex, p)
        assert read_jsonl(p) == ex
