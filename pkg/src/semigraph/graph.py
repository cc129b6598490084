"""Typed query/table graph and its renormalized adjacency."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .canonical import SUBJECT, SemiTable, as_graph_table

QUERY, CAPTION, HEADER, CELL = "query", "caption", "header", "cell"

QUERY_LINK = "QueryLink"
CAPTION_CONTENT = "CaptionContent"
HEADER_CELL = "HeaderCell"
SUBJECT_ATTRIBUTE = "SubjectAttribute"
CELL_CELL = "CellCell"

# highest precedence first; an unordered pair keeps the first kind that claims it
EDGE_PRECEDENCE = (SUBJECT_ATTRIBUTE, HEADER_CELL, CAPTION_CONTENT, CELL_CELL, QUERY_LINK)
EDGE_KINDS = frozenset(EDGE_PRECEDENCE)


class NodeRef(NamedTuple):
    index: int
    kind: str
    row: int = -1
    col: int = -1


class TypedEdge(NamedTuple):
    source: int
    target: int
    kind: str


@dataclass(frozen=True)
class Graph:
    nodes: tuple[NodeRef, ...]
    edges: tuple[TypedEdge, ...]
    texts: tuple[str, ...] = ()

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edge_counts(self) -> Counter:
        return Counter(e.kind for e in self.edges)

    def neighbors(self, n: int) -> list[int]:
        out = [e.target for e in self.edges if e.source == n]
        out += [e.source for e in self.edges if e.target == n]
        return sorted(out)

    def to_json(self) -> str:
        doc = {
            "nodes": [
                {"index": n.index, "kind": n.kind, "row": n.row, "col": n.col,
                 "text": self.texts[n.index] if self.texts else ""}
                for n in self.nodes
            ],
            "edges": [{"source": e.source, "target": e.target, "kind": e.kind} for e in self.edges],
        }
        return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1)

    def to_edge_list(self) -> str:
        return "".join(f"{e.source} {e.target} {e.kind}\n" for e in self.edges)


@dataclass(frozen=True)
class GraphMatrices:
    A: np.ndarray
    A_tilde: np.ndarray
    D_tilde: np.ndarray
    A_hat: np.ndarray


def build_graph(query: str, t: SemiTable, cell_cell_excludes_subject: bool = False) -> Graph:
    """Nodes: query, caption, headers by column, cells row-major.

    Edge rules: the query links to every other node; the caption links to
    every cell; each header links to its column's cells; each subject cell
    links to the attribute cells in its row; orthogonally adjacent cells
    get a cell-cell edge unless that pair already carries another kind.
    Lists are built through their single-column table view.
    """
    t = as_graph_table(t)
    R, N = t.n_rows, t.n_cols
    nodes = [NodeRef(0, QUERY), NodeRef(1, CAPTION)]
    texts = [query, t.caption]
    header_idx = {}
    if t.header is not None:
        for j, h in enumerate(t.header):
            header_idx[j] = len(nodes)
            nodes.append(NodeRef(len(nodes), HEADER, -1, j))
            texts.append(h)
    cell_idx = {}
    for i, row in enumerate(t.body):
        for j, text in enumerate(row):
            cell_idx[i, j] = len(nodes)
            nodes.append(NodeRef(len(nodes), CELL, i, j))
            texts.append(text)

    roles = t.column_roles or ("attribute",) * N
    subject_cols = [j for j in range(N) if roles[j] == SUBJECT]
    claimed: dict[tuple[int, int], str] = {}

    def claim(a: int, b: int, kind: str) -> None:
        key = (min(a, b), max(a, b))
        claimed.setdefault(key, kind)

    # precedence order: SubjectAttribute, HeaderCell, CaptionContent, CellCell, QueryLink
    for i in range(R):
        for s in subject_cols:
            for j in range(N):
                if roles[j] != SUBJECT:
                    claim(cell_idx[i, s], cell_idx[i, j], SUBJECT_ATTRIBUTE)
    for j, h in header_idx.items():
        for i in range(R):
            claim(h, cell_idx[i, j], HEADER_CELL)
    for key in cell_idx.values():
        claim(1, key, CAPTION_CONTENT)
    for i in range(R):
        for j in range(N):
            if cell_cell_excludes_subject and j in subject_cols:
                continue
            if j + 1 < N and not (cell_cell_excludes_subject and j + 1 in subject_cols):
                claim(cell_idx[i, j], cell_idx[i, j + 1], CELL_CELL)
            if i + 1 < R:
                claim(cell_idx[i, j], cell_idx[i + 1, j], CELL_CELL)
    for n in range(1, len(nodes)):
        claim(0, n, QUERY_LINK)

    edges = tuple(TypedEdge(a, b, kind) for (a, b), kind in sorted(claimed.items()))
    return Graph(tuple(nodes), edges, tuple(texts))


def ablate_edges(edges: Iterable[TypedEdge], remove: Iterable[str]) -> tuple[TypedEdge, ...]:
    """Drop every edge whose kind is in ``remove``.  Suppressed duplicates stay gone."""
    remove = frozenset(remove)
    unknown = remove - EDGE_KINDS
    if unknown:
        raise ValueError(f"unknown edge kinds {sorted(unknown)}")
    if QUERY_LINK in remove:
        warnings.warn("removing QueryLink edges isolates the query node", stacklevel=2)
    return tuple(e for e in edges if e.kind not in remove)


def ablate_graph(g: Graph, remove: Iterable[str]) -> Graph:
    remove = frozenset(remove)
    if not remove:
        return g
    return Graph(g.nodes, ablate_edges(g.edges, remove), g.texts)


def adjacency(num_nodes: int, edges: Iterable[TypedEdge]) -> np.ndarray:
    A = np.zeros((num_nodes, num_nodes))
    for a, b, *_ in edges:
        A[a, b] = 1.0
        A[b, a] = 1.0
    return A


def normalized_adjacency(num_nodes: int, edges: Iterable[TypedEdge]) -> GraphMatrices:
    """Self-loops plus symmetric degree normalization: D^-1/2 (A + I) D^-1/2."""
    if num_nodes < 1:
        raise ValueError("graph needs at least one node")
    A = adjacency(num_nodes, edges)
    A_tilde = A + np.eye(num_nodes)
    deg = A_tilde.sum(axis=1)
    A_hat = A_tilde / np.sqrt(np.outer(deg, deg))
    return GraphMatrices(A=A, A_tilde=A_tilde, D_tilde=np.diag(deg), A_hat=A_hat)


def graph_matrices(g: Graph) -> GraphMatrices:
    return normalized_adjacency(g.num_nodes, g.edges)
