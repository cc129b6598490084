import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import city_table, tiny_model
from semigraph import tensor as tn
from semigraph.canonical import SemiTable, with_roles
from semigraph.encoder import MASK_ID, PAD_ID, build_vocab, encode_input
from semigraph.graph import CAPTION, QUERY, QUERY_LINK, Graph, NodeRef, TypedEdge, build_graph
from semigraph.layers import make_rng
from semigraph.model import GraphQAModel
from semigraph.pretrain import (
    KEEP,
    MASK,
    RANDOM,
    MaskPlan,
    NoNeighbors,
    PretrainConfig,
    add_pretrain_heads,
    apply_plan,
    maskable_nodes,
    neighbor_pool_matrix,
    npo_logits,
    plan_wcm_mask,
    prepare_masked,
    pretrain,
    pretrain_loss,
    sinusoidal_position,
    wcm_logits,
)
from semigraph.tensor import Tensor


def firm_table(value="5"):
    return with_roles(SemiTable(body=(("acme corp", value), ("hooli", "3")), caption="firm list",
                                header=("firm", "rating")))


def full_plan(inp, node, action=MASK):
    """Mask every token of ``node`` with one action."""
    s, e = inp.node_spans[node]
    pos = tuple(range(s, e + 1))
    repl = tuple(MASK_ID if action == MASK else inp.ids[p] for p in pos)
    return MaskPlan((node,), pos, (action,) * len(pos), repl, tuple(inp.ids[p] for p in pos),
                    (node,) * len(pos), tuple(p - s for p in pos))


def test_plan_is_deterministic():
    m = tiny_model()
    inp = m.prepare("best city", city_table()).inp
    a = plan_wcm_mask(inp, make_rng(5), len(m.vocab))
    b = plan_wcm_mask(inp, make_rng(5), len(m.vocab))
    assert a == b


words = st.text(alphabet="abc d", max_size=7)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(words, min_size=2, max_size=2), min_size=1, max_size=4), st.booleans(),
       st.integers(0, 10_000))
def test_plans_are_atomic(rows, header, seed):
    t = with_roles(SemiTable(body=tuple(map(tuple, rows)), caption="cap tion", header=("h a", "k") if header else None))
    vocab = build_vocab([("q r", t)])
    inp = encode_input("q r", t, vocab)
    if not maskable_nodes(inp):
        with pytest.raises(ValueError):
            plan_wcm_mask(inp, make_rng(seed), len(vocab))
        return
    plan = plan_wcm_mask(inp, make_rng(seed), len(vocab))
    assert plan.masked_nodes
    want = [p for n in plan.masked_nodes for p in range(inp.node_spans[n][0], inp.node_spans[n][1] + 1)]
    assert list(plan.positions) == want
    assert all(inp.node_kinds[n] not in (QUERY, CAPTION) for n in plan.masked_nodes)
    for pos, act, new, tgt in zip(plan.positions, plan.actions, plan.replacements, plan.targets):
        assert tgt == inp.ids[pos] != PAD_ID
        if act == MASK:
            assert new == MASK_ID
        elif act == KEEP:
            assert new == tgt
        else:
            assert 5 <= new < len(vocab)
    masked = apply_plan(inp, plan)
    untouched = set(range(inp.length)) - set(plan.positions)
    assert all(masked.ids[p] == inp.ids[p] for p in untouched)


def test_three_token_cell_fully_planned():
    t = with_roles(SemiTable(body=(("new york city",),), caption="c"))
    vocab = build_vocab([("q", t)])
    inp = encode_input("q", t, vocab)
    plan = plan_wcm_mask(inp, make_rng(0), len(vocab))
    assert plan.masked_nodes == (2,) and len(plan) == 3 and plan.offsets == (0, 1, 2)


def test_wcm_logits():
    rng = np.random.default_rng(0)
    states = Tensor(rng.normal(size=(6, 4)))
    V = 9
    params = {"wcm.w0": Tensor(np.zeros((4, 3))), "wcm.b0": Tensor(np.zeros(3)),
              "wcm.w1": Tensor(np.zeros((3, V))), "wcm.b1": Tensor(np.zeros(V))}
    out = wcm_logits(states, 2, params, masked={2, 3})
    assert out.shape == (V,)
    assert tn.softmax_cross_entropy(out, 4).item() == pytest.approx(math.log(V))
    assert wcm_logits(states, [2, 3], params).shape == (2, V)
    with pytest.raises(ValueError):
        wcm_logits(states, 1, params, masked={2, 3})


def test_wcm_decoder_gradient():
    rng = np.random.default_rng(1)
    states = Tensor(rng.normal(size=(5, 4)))
    params = {"wcm.w0": Tensor(rng.normal(size=(4, 3))), "wcm.b0": Tensor(rng.normal(size=3)),
              "wcm.w1": Tensor(rng.normal(size=(3, 7))), "wcm.b1": Tensor(rng.normal(size=7))}
    f = lambda: tn.softmax_cross_entropy(wcm_logits(states, [1, 4], params), [3, 6])
    assert tn.finite_difference_check(f, list(params.values())) < 1e-5


def test_sinusoid():
    np.testing.assert_array_equal(sinusoidal_position(0, 6), [0, 1, 0, 1, 0, 1])
    assert sinusoidal_position(1, 4)[0] == pytest.approx(0.84147, abs=1e-5)
    assert sinusoidal_position(1, 4)[2] == pytest.approx(math.sin(1 / 100))
    for k in range(50):
        assert np.all(np.abs(sinusoidal_position(k, 16)) <= 1)
    with pytest.raises(ValueError):
        sinusoidal_position(1, 5)
    with pytest.raises(ValueError):
        sinusoidal_position(-1, 4)


def test_neighbor_pooling():
    nodes = tuple(NodeRef(i, "cell") for i in range(4))
    g = Graph(nodes, (TypedEdge(0, 1, QUERY_LINK), TypedEdge(0, 2, QUERY_LINK), TypedEdge(1, 2, QUERY_LINK)))
    L2 = Tensor(np.arange(8.0).reshape(4, 2))
    np.testing.assert_array_equal(neighbor_pool_matrix(g, [0]) @ L2.data, [[3.0, 4.0]])
    g1 = Graph(nodes[:2], (TypedEdge(0, 1, QUERY_LINK),))
    np.testing.assert_array_equal(neighbor_pool_matrix(g1, [1]) @ L2.data[:2], [L2.data[0]])
    with pytest.raises(NoNeighbors):
        neighbor_pool_matrix(g, [3])


def npo_head(rng, g, h, V, scale=1.0):
    sizes = [2 * g, h, h, V]
    p = {}
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        p[f"npo.w{k}"] = Tensor(rng.normal(size=(a, b)) * scale)
        p[f"npo.b{k}"] = Tensor(rng.normal(size=b) * scale)
    return p


def test_npo_logits_depend_on_offset():
    rng = np.random.default_rng(2)
    g = build_graph("q", city_table())
    L2 = Tensor(rng.normal(size=(8, 4)))
    p = npo_head(rng, 4, 5, 11)
    a, b = npo_logits(L2, g, 4, 0, p), npo_logits(L2, g, 4, 3, p)
    assert a.shape == (11,) and not np.allclose(a.data, b.data)


def test_npo_ignores_the_node_row():
    rng = np.random.default_rng(3)
    g = build_graph("q", city_table())
    L2 = rng.normal(size=(8, 4))
    p = npo_head(rng, 4, 5, 11)
    before = npo_logits(Tensor(L2), g, 5, 1, p).data
    L2[5] += 10.0
    np.testing.assert_array_equal(npo_logits(Tensor(L2), g, 5, 1, p).data, before)


def zero_heads(m):
    add_pretrain_heads(m)
    for k in m.params:
        if k.startswith(("wcm.", "npo.")):
            m.params[k].data[...] = 0.0


@pytest.mark.parametrize("use_lstm", [True, False])
def test_zero_decoders_cost_two_log_v(use_lstm):
    m = tiny_model([("acme rating", firm_table())], use_lstm=use_lstm)
    zero_heads(m)
    it = m.prepare("acme rating", firm_table())
    pb = prepare_masked(m, [it], [plan_wcm_mask(it.inp, make_rng(0), len(m.vocab))])
    V = len(m.vocab)
    assert pretrain_loss(m, pb).item() == pytest.approx(2 * math.log(V), abs=1e-12)
    assert pretrain_loss(m, pb, ("wcm",)).item() == pytest.approx(math.log(V), abs=1e-12)
    with pytest.raises(ValueError):
        pretrain_loss(m, pb, ())


def test_masked_content_is_invisible():
    # the same node fully masked in two tables that differ only in that node
    a, b = firm_table("5"), firm_table("9")
    m = tiny_model([("acme rating", a), ("acme rating", b)])
    add_pretrain_heads(m)
    losses = []
    for t in (a, b):
        it = m.prepare("acme rating", t)
        plan = full_plan(it.inp, 5)
        pb = prepare_masked(m, [it], [plan])
        pb.targets[:] = 7  # same target so only the input could differ
        losses.append(pretrain_loss(m, pb).item())
    assert losses[0] == losses[1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_pretrain_loss_non_negative(seed):
    m = tiny_model([("acme rating", firm_table())], seed=seed % 7)
    add_pretrain_heads(m, seed)
    it = m.prepare("acme rating", firm_table())
    pb = prepare_masked(m, [it], [plan_wcm_mask(it.inp, make_rng(seed), len(m.vocab))])
    assert pretrain_loss(m, pb).item() >= 0


def test_batched_loss_is_token_mean():
    pairs = [("acme rating", firm_table()), ("best city", city_table())]
    m = tiny_model(pairs)
    add_pretrain_heads(m)
    items = [m.prepare(q, t) for q, t in pairs]
    plans = [plan_wcm_mask(it.inp, make_rng(k), len(m.vocab)) for k, it in enumerate(items)]
    joint = pretrain_loss(m, prepare_masked(m, items, plans)).item()
    parts = [pretrain_loss(m, prepare_masked(m, [it], [p])).item() for it, p in zip(items, plans)]
    weights = [len(p) for p in plans]
    assert joint == pytest.approx(np.average(parts, weights=weights), abs=1e-12)


def test_pretrain_lowers_loss_and_keeps_shapes(tmp_path):
    pairs = [("", firm_table(v)) for v in "123456"] * 4
    m = tiny_model(pairs)
    before = {k: v.data.shape for k, v in m.params.items()}
    res = pretrain(m, pairs, PretrainConfig(epochs=6, batch_size=8, lr=0.01))
    assert res.losses[-1] < res.losses[0]
    for k, shape in before.items():
        assert m.params[k].data.shape == shape
    # the fine-tuning model reads back exactly what pre-training produced
    m.save(tmp_path / "p.ckpt")
    back, _ = GraphQAModel.load(tmp_path / "p.ckpt")
    for k, v in m.params.items():
        assert back.params[k].data.tobytes() == v.data.tobytes()


def test_pretrain_rejects_unmaskable_corpus():
    t = with_roles(SemiTable(body=(("",),), caption="c"))
    m = tiny_model([("q", t)])
    with pytest.raises(ValueError):
        pretrain(m, [("q", t)], PretrainConfig(epochs=1))
