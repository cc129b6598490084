"""Synthetic query/table corpora with known answers.

Three families:

* ``caption`` - positive iff the caption shares the topic keyword with the query.
* ``header``  - the query names a class word; positive iff some header equals it.
* ``row``     - the query names an entity, an attribute and a value; positive iff
  the entity's row holds that value.  Negatives shift the attribute column so
  the table keeps exactly the same bag of words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canonical import SemiTable, with_roles
from .extraction import LabeledExample
from .layers import make_rng

ENTITIES = (
    "acme globex initech umbrella hooli stark wayne wonka tyrell cyberdyne soylent vandelay "
    "oscorp monarch aperture nakatomi zorg gringotts dunder virtucon pied wernham sirius "
    "abstergo blackmesa contoso fabrikam northwind tailspin adatum"
).split()
CLASSES = "company brand firm studio vendor label maker supplier".split()
ATTRIBUTES = "rating score level grade tier rank".split()
VALUES = [str(v) for v in range(1, 10)]

TOPICS = {
    "cities": "tokyo paris london madrid berlin lima cairo delhi sydney toronto".split(),
    "beaches": "bondi maya navagio whitehaven anse matira tulum balos grace seven".split(),
    "movies": "alien heat jaws rocky psycho vertigo fargo up coco brave".split(),
    "songs": "yesterday imagine hurt creep angie roxanne jolene vogue hello africa".split(),
    "cars": "civic corolla golf focus mustang model beetle mini panda fiesta".split(),
    "birds": "robin eagle heron finch owl crane swift raven gull wren".split(),
}
CAPTION_TEMPLATES = ("top {n} {topic} in the world", "{topic} ranked by experts", "our favourite {topic}",
                     "{n} famous {topic} you should know")
QUERY_TEMPLATES = ("best {topic} to see", "most popular {topic}", "which {topic} are worth it")
HEADER_CLASSES = "city country year price author genre population capital director team".split()


@dataclass(frozen=True)
class SynthSpec:
    family: str = "row"          # row | caption | header | mixed
    n: int = 1000
    kind: str = "table"          # table | list (lists only for the caption family)
    min_rows: int = 3
    max_rows: int = 5
    max_attributes: int = 2
    n_entities: int = len(ENTITIES)
    n_values: int = len(VALUES)


def _pick(rng, seq, k=None):
    if k is None:
        return seq[int(rng.integers(len(seq)))]
    idx = rng.choice(len(seq), size=k, replace=False)
    return [seq[i] for i in idx]


def row_lookup_table(rng, spec: SynthSpec):
    """A positive row-lookup pair: (query, table, queried column)."""
    R = int(rng.integers(spec.min_rows, spec.max_rows + 1))
    n_attr = int(rng.integers(1, spec.max_attributes + 1))
    ents = _pick(rng, ENTITIES[:spec.n_entities], R)
    cls = _pick(rng, CLASSES)
    attrs = _pick(rng, ATTRIBUTES, n_attr)
    cols = [_pick(rng, VALUES[:spec.n_values], R) for _ in attrs]
    body = [[ents[i]] + [c[i] for c in cols] for i in range(R)]
    row = int(rng.integers(R))
    a = int(rng.integers(n_attr))
    query = f"{ents[row]} {attrs[a]} {cols[a][row]}"
    caption = f"{cls} {_pick(rng, ['list', 'table', 'overview', 'summary'])}"
    return query, body, [cls] + attrs, caption, a + 1


def _row_example(rng, spec, label):
    query, body, header, caption, col = row_lookup_table(rng, spec)
    if not label:
        R = len(body)
        shift = int(rng.integers(1, R))
        column = [r[col] for r in body]
        for i in range(R):
            body[i][col] = column[(i + shift) % R]
    return query, SemiTable(body=tuple(map(tuple, body)), caption=caption, header=tuple(header))


def _caption_example(rng, spec, label):
    topic = _pick(rng, list(TOPICS))
    other = _pick(rng, [t for t in TOPICS if t != topic])
    cap_topic = topic if label else other
    R = int(rng.integers(spec.min_rows, spec.max_rows + 1))
    items = _pick(rng, TOPICS[cap_topic], R)
    caption = _pick(rng, CAPTION_TEMPLATES).format(n=R, topic=cap_topic)
    query = _pick(rng, QUERY_TEMPLATES).format(topic=topic)
    if spec.kind == "list":
        return query, SemiTable.from_list(items, caption=caption)
    body = [[item, str(k + 1)] for k, item in enumerate(items)]
    return query, SemiTable(body=tuple(map(tuple, body)), caption=caption, header=("name", "rank"))


def _header_example(rng, spec, label):
    target = _pick(rng, HEADER_CLASSES)
    others = [c for c in HEADER_CLASSES if c != target]
    N = int(rng.integers(2, 4))
    header = _pick(rng, others, N)
    if label:
        header[int(rng.integers(N))] = target
    R = int(rng.integers(spec.min_rows, spec.max_rows + 1))
    ents = _pick(rng, ENTITIES, R)
    body = [[ents[i]] + [_pick(rng, VALUES) for _ in range(N - 1)] for i in range(R)]
    query = f"which {target} is listed"
    return query, SemiTable(body=tuple(map(tuple, body)), caption="facts and figures", header=tuple(header))


_FAMILIES = {"row": _row_example, "caption": _caption_example, "header": _header_example}


def generate_synthetic(spec: SynthSpec, seed: int) -> list[LabeledExample]:
    """Exactly balanced labels (n // 2 positives), order shuffled."""
    rng = make_rng(seed)
    labels = np.array([1] * (spec.n // 2) + [0] * (spec.n - spec.n // 2))
    rng.shuffle(labels)
    fams = list(_FAMILIES) if spec.family == "mixed" else [spec.family]
    if any(f not in _FAMILIES for f in fams):
        raise ValueError(f"unknown family {spec.family!r}")
    out = []
    for k, label in enumerate(labels):
        fam = fams[k % len(fams)]
        query, t = _FAMILIES[fam](rng, spec, int(label))
        out.append(LabeledExample(query=query, example=with_roles(t), label=int(label), id=f"{fam}-{seed}-{k}"))
    return out


def generate_tables(spec: SynthSpec, seed: int) -> list[tuple[str, SemiTable]]:
    """Unlabeled tables for pre-training (queries dropped)."""
    return [("", ex.example) for ex in generate_synthetic(spec, seed)]
