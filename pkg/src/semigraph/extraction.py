"""HTML table/list extraction and the JSONL dataset format."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Iterator

from .canonical import (
    EmptyTable,
    SemiTable,
    TableError,
    classify_columns,
    transpose_if_vertical,
)


class NoTableFound(ValueError):
    pass


class NoListFound(ValueError):
    pass


class EmptyList(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


# ----------------------------------------------------------------- tiny DOM

VOID_TAGS = {"br", "hr", "img", "input", "meta", "link", "col", "area", "base", "wbr", "source"}
DROPPED_TAGS = {"script", "style", "noscript", "template"}
BLOCK_TAGS = {
    "br", "p", "div", "li", "dt", "dd", "td", "th", "tr", "table", "ul", "ol", "dl",
    "h1", "h2", "h3", "h4", "h5", "h6", "caption", "section", "article", "header",
    "footer", "blockquote", "pre", "hr",
}
HEADING_TAGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
LIST_TAGS = {"ul", "ol", "dl"}

# opening one of these implicitly closes an open element listed in the value
_IMPLICIT_CLOSE = {
    "tr": {"tr", "td", "th"},
    "td": {"td", "th"},
    "th": {"td", "th"},
    "li": {"li"},
    "dt": {"dt", "dd"},
    "dd": {"dt", "dd"},
    "thead": {"thead", "tbody", "tfoot", "tr", "td", "th"},
    "tbody": {"thead", "tbody", "tfoot", "tr", "td", "th"},
    "tfoot": {"thead", "tbody", "tfoot", "tr", "td", "th"},
}
# implicit closing never crosses these
_SCOPE_TAGS = {"table", "ul", "ol", "dl"}


class Element:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag: str, attrs=None, parent=None):
        self.tag = tag
        self.attrs = dict(attrs or {})
        self.children: list = []
        self.parent = parent

    def iter(self) -> Iterator["Element"]:
        yield self
        for child in self.children:
            if isinstance(child, Element):
                yield from child.iter()

    def __repr__(self):
        return f"<{self.tag} children={len(self.children)}>"


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = Element("#root")
        self.stack = [self.root]
        self.skip = 0

    def handle_starttag(self, tag, attrs):
        if self.skip:
            if tag in DROPPED_TAGS:
                self.skip += 1
            return
        if tag in DROPPED_TAGS:
            self.skip = 1
            return
        closes = _IMPLICIT_CLOSE.get(tag)
        if closes:
            for k in range(len(self.stack) - 1, 0, -1):
                open_tag = self.stack[k].tag
                if open_tag in _SCOPE_TAGS:
                    break
                if open_tag in closes:
                    del self.stack[k:]
                    break
        node = Element(tag, attrs, self.stack[-1])
        self.stack[-1].children.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        if self.skip or tag in DROPPED_TAGS:
            return
        self.stack[-1].children.append(Element(tag, attrs, self.stack[-1]))

    def handle_endtag(self, tag):
        if self.skip:
            if tag in DROPPED_TAGS:
                self.skip -= 1
            return
        for k in range(len(self.stack) - 1, 0, -1):
            if self.stack[k].tag == tag:
                del self.stack[k:]
                return

    def handle_data(self, data):
        if not self.skip:
            self.stack[-1].children.append(data)


def parse_dom(html: str) -> Element:
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.root


_WS = re.compile(r"\s+")


def text_of(node: Element, skip: set[str] = frozenset()) -> str:
    """Tag-stripped, whitespace-collapsed text of a subtree."""
    parts: list[str] = []

    def walk(n):
        for child in n.children:
            if isinstance(child, str):
                parts.append(child)
            elif child.tag not in skip:
                block = child.tag in BLOCK_TAGS
                if block:
                    parts.append(" ")
                walk(child)
                if block:
                    parts.append(" ")

    walk(node)
    return _WS.sub(" ", "".join(parts)).strip()


def _document_order(root: Element) -> list[Element]:
    return list(root.iter())


def _preceding_heading(root: Element, target: Element) -> str:
    heading = ""
    for el in _document_order(root):
        if el is target:
            return heading
        if el.tag in HEADING_TAGS:
            text = text_of(el)
            if text:
                heading = text
    return heading


def _is_inside(el: Element, tags: set[str]) -> bool:
    p = el.parent
    while p is not None:
        if p.tag in tags:
            return True
        p = p.parent
    return False


# -------------------------------------------------------------------- tables


def _table_rows(table: Element) -> list[Element]:
    rows = []

    def walk(n):
        for child in n.children:
            if not isinstance(child, Element) or child.tag == "table":
                continue
            if child.tag == "tr":
                rows.append(child)
            elif child.tag in ("thead", "tbody", "tfoot"):
                walk(child)

    walk(table)
    return rows


def _span(cell: Element, name: str) -> int:
    try:
        return max(1, min(int(cell.attrs.get(name) or 1), 1000))
    except ValueError:
        return 1


def _grid(rows: list[Element]) -> tuple[list[list[str]], list[list[bool]]]:
    """Lay out cells with span duplication.  Returns texts and th-flags."""
    placed: dict[tuple[int, int], tuple[str, bool]] = {}
    for i, tr in enumerate(rows):
        j = 0
        for cell in tr.children:
            if not isinstance(cell, Element) or cell.tag not in ("td", "th"):
                continue
            while (i, j) in placed:
                j += 1
            text = text_of(cell)
            is_th = cell.tag == "th"
            for di in range(_span(cell, "rowspan")):
                if i + di >= len(rows):
                    break
                for dj in range(_span(cell, "colspan")):
                    placed.setdefault((i + di, j + dj), (text, is_th))
            j += _span(cell, "colspan")
    if not placed:
        return [], []
    width = max(j for _, j in placed) + 1
    texts, flags = [], []
    for i in range(len(rows)):
        texts.append([placed.get((i, j), ("", False))[0] for j in range(width)])
        flags.append([placed.get((i, j), ("", False))[1] for j in range(width)])
    return texts, flags


def _top_level(root: Element, tags: set[str], inside: set[str]) -> list[Element]:
    return [el for el in root.iter() if el.tag in tags and not _is_inside(el, inside)]


def table_from_element(root: Element, table: Element, distinct_key_clause: bool = False) -> SemiTable:
    cap_el = next((c for c in table.children if isinstance(c, Element) and c.tag == "caption"), None)
    caption = text_of(cap_el) if cap_el is not None else ""
    if not caption:
        caption = _preceding_heading(root, table)
    texts, flags = _grid(_table_rows(table))
    header = None
    # a leading row with nothing but th cells becomes the header
    if texts and all(flags[0]):
        header = tuple(texts[0])
        texts = texts[1:]
    body = [row for row in texts if any(cell for cell in row)]
    if not body:
        raise EmptyTable("table has no data rows")
    t = SemiTable(body=tuple(tuple(r) for r in body), caption=caption, header=header, kind="table")
    t = transpose_if_vertical(t, distinct_key_clause)
    return SemiTable(body=t.body, caption=t.caption, header=t.header, kind="table",
                     column_roles=classify_columns(t).roles)


def parse_html_tables(html: str, distinct_key_clause: bool = False) -> list[SemiTable]:
    """Every non-nested table in the fragment that has data rows."""
    root = parse_dom(html)
    out = []
    for table in _top_level(root, {"table"}, {"table"}):
        try:
            out.append(table_from_element(root, table, distinct_key_clause))
        except EmptyTable:
            continue
    return out


def parse_html_table(html: str, distinct_key_clause: bool = False) -> SemiTable:
    root = parse_dom(html)
    tables = _top_level(root, {"table"}, {"table"})
    if not tables:
        raise NoTableFound("no <table> element in fragment")
    return table_from_element(root, tables[0], distinct_key_clause)


# --------------------------------------------------------------------- lists


def _list_items(lst: Element) -> list[str]:
    items: list[str] = []
    if lst.tag == "dl":
        term = None
        for child in lst.children:
            if not isinstance(child, Element):
                continue
            if child.tag == "dt":
                if term is not None:
                    items.append(term)
                term = text_of(child, skip=LIST_TAGS)
            elif child.tag == "dd":
                desc = text_of(child, skip=LIST_TAGS)
                items.append(f"{term}: {desc}" if term else desc)
                term = None
            else:
                continue
            for nested in child.children:
                if isinstance(nested, Element):
                    items.extend(_nested_items(nested))
        if term is not None:
            items.append(term)
        return items
    for child in lst.children:
        if isinstance(child, Element) and child.tag == "li":
            items.append(text_of(child, skip=LIST_TAGS))
            for nested in child.children:
                if isinstance(nested, Element):
                    items.extend(_nested_items(nested))
    return items


def _nested_items(el: Element) -> list[str]:
    if el.tag in LIST_TAGS:
        return _list_items(el)
    out = []
    for child in el.children:
        if isinstance(child, Element):
            out.extend(_nested_items(child))
    return out


def list_from_element(root: Element, lst: Element) -> SemiTable:
    items = [item for item in _list_items(lst) if item.strip()]
    if not items:
        raise EmptyList("list has no non-blank items")
    return SemiTable.from_list(items, caption=_preceding_heading(root, lst))


def parse_html_lists(html: str) -> list[SemiTable]:
    root = parse_dom(html)
    out = []
    for lst in _top_level(root, LIST_TAGS, LIST_TAGS):
        try:
            out.append(list_from_element(root, lst))
        except EmptyList:
            continue
    return out


def parse_html_list(html: str) -> SemiTable:
    """First top-level ul/ol/dl.  Nested items follow their parent, depth first."""
    root = parse_dom(html)
    lists = _top_level(root, LIST_TAGS, LIST_TAGS)
    if not lists:
        raise NoListFound("no <ul>, <ol> or <dl> element in fragment")
    return list_from_element(root, lists[0])


# --------------------------------------------------------------------- JSONL

RECORD_FIELDS = ("id", "query", "caption", "header", "rows", "kind", "label")


@dataclass(frozen=True)
class LabeledExample:
    query: str
    example: SemiTable
    label: int
    id: str = ""

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not self.query.strip():
            raise ValueError("query must be non-empty")


def to_record(query: str, t: SemiTable, label=None, id: str = "") -> dict:
    return {
        "id": id,
        "query": query,
        "caption": t.caption,
        "header": list(t.header) if t.header is not None else None,
        "rows": [list(row) for row in t.body],
        "kind": t.kind,
        "label": label,
    }


def _table_from_record(rec: dict, line: int) -> SemiTable:
    kind = rec.get("kind", "table")
    rows = rec.get("rows")
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ParseError("rows must be an array of arrays", line)
    if not all(isinstance(c, str) for r in rows for c in r):
        raise ParseError("cells must be strings", line)
    header = rec.get("header")
    if header is not None and (not isinstance(header, list) or not all(isinstance(h, str) for h in header)):
        raise ParseError("header must be null or an array of strings", line)
    caption = rec.get("caption", "")
    if not isinstance(caption, str):
        raise ParseError("caption must be a string", line)
    try:
        if kind == "list":
            return SemiTable(body=tuple(tuple(r) for r in rows), caption=caption,
                             kind="list", column_roles=("attribute",))
        t = SemiTable(body=tuple(tuple(r) for r in rows), caption=caption,
                      header=tuple(header) if header is not None else None, kind=kind)
        return SemiTable(body=t.body, caption=t.caption, header=t.header, kind=t.kind,
                         column_roles=classify_columns(t).roles)
    except TableError as exc:
        raise ParseError(str(exc), line) from None


def _records(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", n) from None
            if not isinstance(rec, dict):
                raise ParseError("record must be a JSON object", n)
            yield n, rec


def read_jsonl(path, strict: bool = False) -> list[LabeledExample]:
    """Read labeled examples.  ``strict`` rejects fields outside the schema."""
    out = []
    for n, rec in _records(path):
        if strict:
            unknown = set(rec) - set(RECORD_FIELDS)
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", n)
        label = rec.get("label")
        if label not in (0, 1) or isinstance(label, bool):
            raise ParseError(f"label must be 0 or 1, got {label!r}", n)
        query = rec.get("query")
        if not isinstance(query, str) or not query.strip():
            raise ParseError("query must be a non-empty string", n)
        rid = rec.get("id", "")
        if not isinstance(rid, str):
            raise ParseError("id must be a string", n)
        out.append(LabeledExample(query=query, example=_table_from_record(rec, n), label=label, id=rid))
    return out


def read_corpus(path, strict: bool = False) -> list[tuple[str, SemiTable]]:
    """Read (query, table) pairs where query and label may be missing (pre-training data)."""
    out = []
    for n, rec in _records(path):
        if strict:
            unknown = set(rec) - set(RECORD_FIELDS)
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", n)
        query = rec.get("query") or ""
        if not isinstance(query, str):
            raise ParseError("query must be a string", n)
        out.append((query, _table_from_record(rec, n)))
    return out


def write_jsonl(examples: Iterable[LabeledExample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = to_record(ex.query, ex.example, ex.label, ex.id)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_corpus(pairs: Iterable[tuple[str, SemiTable]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, (query, t) in enumerate(pairs):
            rec = to_record(query, t, None, f"u{k}")
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def extract_path(path, kind: str) -> list[tuple[str, SemiTable]]:
    """Parse every .html/.htm file under ``path`` (or the file itself)."""
    p = Path(path)
    files = sorted(p.rglob("*.htm*")) if p.is_dir() else [p]
    parse = parse_html_tables if kind == "table" else parse_html_lists
    out = []
    for f in files:
        html = f.read_text(encoding="utf-8", errors="replace")
        for k, t in enumerate(parse(html)):
            out.append((f"{f.stem}-{k}", t))
    return out
