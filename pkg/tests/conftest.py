import numpy as np
import pytest

from semigraph.canonical import ATTRIBUTE, SUBJECT, SemiTable
from semigraph.encoder import build_vocab
from semigraph.graph import EDGE_PRECEDENCE, TypedEdge
from semigraph.model import GraphQAModel, ModelConfig

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def city_table() -> SemiTable:
    """Header plus two data rows, two columns, subject in the first column."""
    return SemiTable(body=(("Tokyo", "Japan"), ("Paris", "France")), caption="Capital cities",
                     header=("City", "Country"), column_roles=(SUBJECT, ATTRIBUTE))


def three_item_list() -> SemiTable:
    return SemiTable.from_list(["Dubai", "Interlaken", "Queenstown"], caption="Places to visit")


def tiny_config(**kw) -> ModelConfig:
    base = dict(d_emb=4, hidden=3, d_node=4, d_gcn=4, d_cls=3, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(pairs=None, seed: int = 0, **kw) -> GraphQAModel:
    pairs = pairs or [("best city in asia", city_table())]
    return GraphQAModel(build_vocab(pairs), tiny_config(**kw), seed=seed)


def random_edges(rng: np.random.Generator, K: int, p: float = 0.35) -> list[TypedEdge]:
    kinds = list(EDGE_PRECEDENCE)
    return [TypedEdge(i, j, kinds[int(rng.integers(len(kinds)))])
            for i in range(K) for j in range(i + 1, K) if rng.random() < p]


@pytest.fixture
def city():
    return city_table()


@pytest.fixture
def destinations():
    return three_item_list()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
