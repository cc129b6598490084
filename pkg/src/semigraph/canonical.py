"""Canonical table/list representation and column role heuristics."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Sequence

SUBJECT = "subject"
ATTRIBUTE = "attribute"

DEFAULT_SUBJECT_THRESHOLD = 0.9
NUMERIC_COLUMN_FRACTION = 0.5
VERTICAL_KEYWORD_FRACTION = 0.6

HEADER_LEXICON = frozenset(
    """
    name title rank country city state population area capital language
    currency date year born died age height weight price cost type category
    location address phone email website founded founder owner company
    genre director author publisher released release length duration
    size color colour status team position score rating total value
    description id number model brand manufacturer origin nationality
    occupation industry headquarters employees revenue website
    """.split()
)

_NUMERIC_STRIP = re.compile(r"[\s$€£¥#%,]")


class TableError(ValueError):
    """A SemiTable invariant was violated."""


class EmptyColumn(TableError):
    pass


class NotAList(TableError):
    pass


class EmptyTable(TableError):
    pass


def normalize_cell(text: str) -> str:
    return text.strip().casefold()


def is_numeric(text: str) -> bool:
    """True when the cell parses as a number after dropping currency, #, % and commas."""
    stripped = _NUMERIC_STRIP.sub("", text)
    if not stripped:
        return False
    try:
        float(stripped)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class SemiTable:
    """A table or list: caption, optional header row, R x N body grid.

    For lists N is 1 and there is no header.  ``column_roles`` is filled in
    by :func:`classify_columns` (or the parsers) and may be None.
    """

    body: tuple[tuple[str, ...], ...]
    caption: str = ""
    header: tuple[str, ...] | None = None
    kind: str = "table"
    column_roles: tuple[str, ...] | None = None

    def __post_init__(self):
        body = tuple(tuple(row) for row in self.body)
        object.__setattr__(self, "body", body)
        if self.header is not None:
            object.__setattr__(self, "header", tuple(self.header))
        if self.column_roles is not None:
            object.__setattr__(self, "column_roles", tuple(self.column_roles))
        self.validate()

    @property
    def n_rows(self) -> int:
        return len(self.body)

    @property
    def n_cols(self) -> int:
        return len(self.body[0]) if self.body else 0

    def column(self, j: int) -> list[str]:
        return [row[j] for row in self.body]

    def validate(self) -> None:
        if self.kind not in ("table", "list"):
            raise TableError(f"unknown kind {self.kind!r}")
        if not self.body:
            raise EmptyTable("body needs at least one row")
        n = len(self.body[0])
        if n < 1:
            raise TableError("body needs at least one column")
        for i, row in enumerate(self.body):
            if len(row) != n:
                raise TableError(f"row {i} has {len(row)} cells, expected {n}")
        if self.header is not None and len(self.header) != n:
            raise TableError(f"header has {len(self.header)} cells, expected {n}")
        if self.kind == "list":
            if n != 1:
                raise TableError("a list has exactly one column")
            if self.header is not None:
                raise TableError("a list has no header")
        if self.column_roles is not None:
            if len(self.column_roles) != n:
                raise TableError("column_roles length differs from column count")
            bad = set(self.column_roles) - {SUBJECT, ATTRIBUTE}
            if bad:
                raise TableError(f"unknown column roles {sorted(bad)}")
            if self.kind == "list" and SUBJECT in self.column_roles:
                raise TableError("list columns are attributes")

    @classmethod
    def from_list(cls, items: Sequence[str], caption: str = "") -> "SemiTable":
        kept = [item for item in items if item.strip()]
        if not kept:
            raise EmptyTable("all list items are blank")
        return cls(body=tuple((item,) for item in kept), caption=caption,
                   kind="list", column_roles=(ATTRIBUTE,))


@dataclass(frozen=True)
class ColumnRoles:
    roles: tuple[str, ...]
    ratios: tuple[float, ...] = field(default=())

    @property
    def subject_columns(self) -> list[int]:
        return [j for j, r in enumerate(self.roles) if r == SUBJECT]


def distinct_ratio(column: Sequence[str]) -> float:
    """Distinct normalized strings over column length."""
    if not column:
        raise EmptyColumn("distinct_ratio of an empty column")
    return len({normalize_cell(c) for c in column}) / len(column)


def numeric_fraction(column: Sequence[str]) -> float:
    if not column:
        raise EmptyColumn("numeric_fraction of an empty column")
    return sum(is_numeric(c) for c in column) / len(column)


def classify_columns(
    t: SemiTable,
    threshold: float = DEFAULT_SUBJECT_THRESHOLD,
    allow_multiple_subjects: bool = False,
) -> ColumnRoles:
    """Pick the subject column by distinct-string ratio.

    Qualifying columns have ratio >= ``threshold`` and fewer than half
    numeric cells.  The leftmost qualifier becomes the subject (all of them
    when ``allow_multiple_subjects``); everything else is an attribute.
    Lists are all-attribute.
    """
    ratios = tuple(distinct_ratio(t.column(j)) for j in range(t.n_cols))
    if t.kind == "list":
        return ColumnRoles((ATTRIBUTE,) * t.n_cols, ratios)
    qualifying = [
        j for j in range(t.n_cols)
        if ratios[j] >= threshold and numeric_fraction(t.column(j)) < NUMERIC_COLUMN_FRACTION
    ]
    if not allow_multiple_subjects:
        qualifying = qualifying[:1]
    roles = tuple(SUBJECT if j in qualifying else ATTRIBUTE for j in range(t.n_cols))
    return ColumnRoles(roles, ratios)


def with_roles(t: SemiTable, **kwargs) -> SemiTable:
    return replace(t, column_roles=classify_columns(t, **kwargs).roles)


def transpose(t: SemiTable) -> SemiTable:
    """Swap rows and columns of the body; header and roles are dropped."""
    body = tuple(zip(*t.body))
    return SemiTable(body=body, caption=t.caption, header=None, kind="table")


def _keyword(text: str) -> str:
    return normalize_cell(text).rstrip(":").strip()


def looks_vertical(t: SemiTable, distinct_key_clause: bool = False) -> bool:
    """Vertical-orientation heuristic.

    Fires for headerless tables with at least two columns whose first column
    mostly holds header-like keywords ("name", "rank", ...).  The optional
    distinct-key clause also fires when the first column is entirely distinct
    non-numeric text.
    """
    if t.kind != "table" or t.header is not None or t.n_cols < 2 or t.n_rows < 2:
        return False
    first = t.column(0)
    hits = sum(_keyword(c) in HEADER_LEXICON for c in first)
    if hits / len(first) >= VERTICAL_KEYWORD_FRACTION:
        return True
    if distinct_key_clause:
        return distinct_ratio(first) == 1.0 and numeric_fraction(first) == 0.0
    return False


def transpose_if_vertical(t: SemiTable, distinct_key_clause: bool = False) -> SemiTable:
    """Turn a key/value style vertical table into a horizontal one.

    The first column becomes the header; remaining columns become rows.
    Idempotent because the result always carries a header.
    """
    if not looks_vertical(t, distinct_key_clause):
        return t
    header = tuple(row[0] for row in t.body)
    body = tuple(zip(*(row[1:] for row in t.body)))
    return SemiTable(body=body, caption=t.caption, header=header, kind="table")


def list_as_table(l: SemiTable) -> SemiTable:
    """View a list as a single-column headerless table, dropping blank items."""
    if l.kind != "list":
        raise NotAList(f"expected a list, got kind={l.kind!r}")
    kept = tuple(row for row in l.body if row[0].strip())
    if not kept:
        raise EmptyTable("all list items are blank")
    return SemiTable(body=kept, caption=l.caption, header=None, kind="table",
                     column_roles=(ATTRIBUTE,))


def as_graph_table(t: SemiTable, **role_kwargs) -> SemiTable:
    """Normalize anything the graph builder accepts into a table with roles."""
    if t.kind == "list":
        return list_as_table(t)
    if t.column_roles is None:
        return with_roles(t, **role_kwargs)
    return t
