"""Self-supervised objectives over unlabeled tables.

Whole cell masking (WCM) corrupts every token of a sampled cell or header
node and predicts the originals from the contextual token states.  Neighbor
prediction (NPO) predicts the same tokens from the mean of the node's
neighbors after graph reasoning plus a fixed sinusoidal code for the token's
offset inside the node.  The training loss sums the two per-token
cross-entropies and averages over masked tokens.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as tn
from .encoder import MASK_ID, PAD_ID, SPECIALS, TokenizedInput, batch_token_matrix
from .graph import CELL, HEADER, Graph
from .layers import Params, add_mlp, make_rng, mlp
from .model import Batch, GraphQAModel, Prepared, collate
from .tensor import Tensor
from .training import TrainingDiverged, make_optimizer

log = logging.getLogger(__name__)

MASK_RATE = 0.15
ACTION_PROBS = (0.8, 0.1, 0.1)
MASK, RANDOM, KEEP = "mask", "random", "keep"
ACTIONS = (MASK, RANDOM, KEEP)
MASKABLE = (CELL, HEADER)


class NoNeighbors(ValueError):
    pass


@dataclass(frozen=True)
class MaskPlan:
    """Which nodes are masked and what happens to each of their tokens.

    Parallel tuples, one entry per affected token position.
    """

    masked_nodes: tuple[int, ...]
    positions: tuple[int, ...]
    actions: tuple[str, ...]
    replacements: tuple[int, ...]  # token id fed to the encoder
    targets: tuple[int, ...]       # original token id
    nodes: tuple[int, ...]         # owning node of each position
    offsets: tuple[int, ...]       # position inside the node span, from 0

    def __len__(self) -> int:
        return len(self.positions)


def maskable_nodes(inp: TokenizedInput) -> list[int]:
    """Cell and header nodes that carry at least one real token."""
    out = []
    for n, (kind, (s, e)) in enumerate(zip(inp.node_kinds, inp.node_spans)):
        if kind in MASKABLE and not (s == e and inp.ids[s] == PAD_ID):
            out.append(n)
    return out


def plan_wcm_mask(inp: TokenizedInput, rng: np.random.Generator, vocab_size: int,
                  rate: float = MASK_RATE, probs: Sequence[float] = ACTION_PROBS) -> MaskPlan:
    """Select each eligible node with probability ``rate``; draw 80/10/10 actions per token."""
    eligible = maskable_nodes(inp)
    if not eligible:
        raise ValueError("input has no non-empty cell or header node to mask")
    draws = rng.random(len(eligible))
    chosen = [n for n, u in zip(eligible, draws) if u < rate]
    if not chosen:
        chosen = [eligible[int(rng.integers(len(eligible)))]]
    first_corpus = len(SPECIALS)
    positions, actions, repl, targets, nodes, offsets = [], [], [], [], [], []
    for n in chosen:
        s, e = inp.node_spans[n]
        for pos in range(s, e + 1):
            action = ACTIONS[int(rng.choice(3, p=probs))]
            orig = inp.ids[pos]
            if action == MASK:
                new = MASK_ID
            elif action == RANDOM:
                # with no corpus tokens there is nothing to sample; fall back to the mask id
                new = int(rng.integers(first_corpus, vocab_size)) if vocab_size > first_corpus else MASK_ID
            else:
                new = orig
            positions.append(pos)
            actions.append(action)
            repl.append(new)
            targets.append(orig)
            nodes.append(n)
            offsets.append(pos - s)
    return MaskPlan(tuple(chosen), tuple(positions), tuple(actions), tuple(repl), tuple(targets),
                    tuple(nodes), tuple(offsets))


def apply_plan(inp: TokenizedInput, plan: MaskPlan) -> TokenizedInput:
    ids = list(inp.ids)
    for pos, new in zip(plan.positions, plan.replacements):
        ids[pos] = new
    return replace(inp, ids=tuple(ids))


# -------------------------------------------------------------------- heads


def sinusoidal_position(k: int, d: int) -> np.ndarray:
    """Fixed code: dim 2i = sin(k / 10000^(2i/d)), dim 2i+1 = cos(same)."""
    if d % 2:
        raise ValueError(f"positional size must be even, got {d}")
    if k < 0:
        raise ValueError("position must be non-negative")
    i = np.arange(d // 2)
    angle = k / np.power(10000.0, 2 * i / d)
    out = np.empty(d)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def token_state_size(model: GraphQAModel) -> int:
    c = model.config
    return 2 * c.hidden if c.use_lstm else c.d_emb


def add_pretrain_heads(model: GraphQAModel, seed: int = 0) -> None:
    """Attach WCM and NPO decoders to ``model.params`` if not already present."""
    if "wcm.w0" in model.params:
        return
    rng = make_rng(seed + 104729)
    c, V = model.config, len(model.vocab)
    add_mlp(model.params, "wcm", [token_state_size(model), c.d_node, V], rng, c.init)
    add_mlp(model.params, "npo", [2 * c.d_gcn, c.d_node, c.d_node, V], rng, c.init)


def wcm_logits(states: Tensor, positions, params: Params, masked=None,
               dropout: float = 0.0, train: bool = False, rng=None) -> Tensor:
    """Logits over the vocabulary from contextual token rows at ``positions``.

    A scalar position gives (V,); a sequence gives (n, V).  When ``masked`` is
    supplied every position must belong to it.
    """
    single = np.ndim(positions) == 0
    pos = np.atleast_1d(np.asarray(positions, dtype=np.int64))
    if masked is not None:
        bad = sorted(set(pos.tolist()) - set(masked))
        if bad:
            raise ValueError(f"positions {bad} are not masked")
    out = mlp(tn.take_rows(states, pos), params, "wcm", dropout, train, rng)
    return tn.reshape(out, (out.shape[1],)) if single else out


def neighbor_pool_matrix(graph: Graph, nodes: Sequence[int], offset: int = 0,
                         width: int | None = None) -> np.ndarray:
    """Row r averages the neighbors of ``nodes[r]`` (the node itself excluded)."""
    width = graph.num_nodes if width is None else width
    nbrs: dict[int, list[int]] = {}
    for e in graph.edges:
        if e.source != e.target:
            nbrs.setdefault(e.source, []).append(e.target)
            nbrs.setdefault(e.target, []).append(e.source)
    P = np.zeros((len(nodes), width))
    for r, n in enumerate(nodes):
        around = sorted(set(nbrs.get(n, ())))
        if not around:
            raise NoNeighbors(f"node {n} has no neighbors")
        P[r, [offset + j for j in around]] = 1.0 / len(around)
    return P


def npo_inputs(L2: Tensor, pool: np.ndarray, offsets: Sequence[int]) -> Tensor:
    pooled = tn.matmul(Tensor(pool), L2)
    g = L2.shape[1]
    codes = np.stack([sinusoidal_position(k, g) for k in offsets]) if len(offsets) else np.zeros((0, g))
    return tn.concat([pooled, Tensor(codes)], axis=1)


def npo_logits(L2: Tensor, graph: Graph, node: int, k: int, params: Params,
               dropout: float = 0.0, train: bool = False, rng=None) -> Tensor:
    """(V,) logits for token ``k`` of ``node`` from its neighbors' rows of L2."""
    pool = neighbor_pool_matrix(graph, [node])
    out = mlp(npo_inputs(L2, pool, [k]), params, "npo", dropout, train, rng)
    return tn.reshape(out, (out.shape[1],))


# --------------------------------------------------------------------- loss


@dataclass
class PretrainBatch:
    batch: Batch
    flat_positions: np.ndarray   # positions into the (B*T) token matrix
    targets: np.ndarray
    pool: np.ndarray             # (n_masked_tokens, sumK)
    offsets: list[int]


def prepare_masked(model: GraphQAModel, items: Sequence[Prepared], plans: Sequence[MaskPlan]) -> PretrainBatch:
    masked = [replace(it, inp=apply_plan(it.inp, p)) for it, p in zip(items, plans)]
    batch = collate(masked)
    T = batch.enc.max_len
    K = int(batch.enc.node_offsets[-1])
    flat, targets, offsets, pools = [], [], [], []
    for b, (it, plan) in enumerate(zip(items, plans)):
        flat.extend(b * T + p for p in plan.positions)
        targets.extend(plan.targets)
        offsets.extend(plan.offsets)
        pools.append(neighbor_pool_matrix(it.graph, plan.nodes, int(batch.enc.node_offsets[b]), K))
    pool = np.concatenate(pools) if pools else np.zeros((0, K))
    return PretrainBatch(batch, np.array(flat, dtype=np.int64), np.array(targets, dtype=np.int64), pool, offsets)


def pretrain_loss(model: GraphQAModel, pb: PretrainBatch, objectives=("npo", "wcm"),
                  train: bool = False, rng=None) -> Tensor:
    """Mean over masked tokens of the summed per-token cross-entropies."""
    objectives = set(objectives)
    if not objectives or objectives - {"wcm", "npo"}:
        raise ValueError(f"objectives must be a non-empty subset of wcm/npo, got {sorted(objectives)}")
    if len(pb.targets) == 0:
        raise ValueError("empty mask plan")
    c = model.config
    states, L0, L2 = model.node_states(pb.batch, train, rng)
    terms = []
    if "wcm" in objectives:
        # without the BiLSTM the contextual rows are the raw token embeddings
        token_rows = states if states is not None else batch_token_matrix(pb.batch.enc, model.params)
        logits = wcm_logits(token_rows, pb.flat_positions, model.params, None, c.dropout, train, rng)
        terms.append(tn.softmax_cross_entropy(logits, pb.targets))
    if "npo" in objectives:
        logits = mlp(npo_inputs(L2, pb.pool, pb.offsets), model.params, "npo", c.dropout, train, rng)
        terms.append(tn.softmax_cross_entropy(logits, pb.targets))
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


# --------------------------------------------------------------------- loop


@dataclass(frozen=True)
class PretrainConfig:
    objectives: tuple = ("npo", "wcm")
    epochs: int = 4
    lr: float = 0.003
    batch_size: int = 32
    optimizer: str = "adam"
    momentum: float = 0.9
    clip: float = 5.0
    seed: int = 0


@dataclass
class PretrainResult:
    losses: list[float] = field(default_factory=list)


def pretrain(model: GraphQAModel, tables: Sequence, config: PretrainConfig) -> PretrainResult:
    """Optimize the encoder, GCN and the selected heads on unlabeled (query, table) pairs.

    A fresh mask plan is drawn for every table in every epoch.
    """
    add_pretrain_heads(model, config.seed)
    items = [model.prepare(q, t) for q, t in tables]
    items = [it for it in items if maskable_nodes(it.inp)]
    if not items:
        raise ValueError("no table in the corpus has a maskable cell")
    used = set(config.objectives)
    trainable = {k: p for k, p in model.params.items()
                 if not k.startswith(("wcm.", "npo.", "cls.")) or k.split(".")[0] in used}
    opt = make_optimizer(config.optimizer, trainable, config.lr, config.momentum, config.clip)
    rng = make_rng(config.seed + 15485863)
    V = len(model.vocab)
    result = PretrainResult()
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        total, count = 0.0, 0
        for k in range(0, len(order), config.batch_size):
            chunk = [items[i] for i in order[k:k + config.batch_size]]
            plans = [plan_wcm_mask(it.inp, rng, V) for it in chunk]
            pb = prepare_masked(model, chunk, plans)
            opt.zero_grad()
            loss = pretrain_loss(model, pb, config.objectives, train=True, rng=rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite pre-training loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += value * len(pb.targets)
            count += len(pb.targets)
        result.losses.append(total / count)
        log.info("pretrain epoch %d loss %.4f", epoch, total / count)
    return result
