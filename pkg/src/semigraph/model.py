"""Two-layer GCN reasoning over the query/table graph and the match score."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as tn
from .canonical import SemiTable
from .encoder import (
    EncodedBatch,
    TokenizedInput,
    Vocab,
    batch_init_nodes,
    batch_token_matrix,
    collate_inputs,
    encode_input,
    init_encoder_params,
)
from .graph import Graph, ablate_graph, build_graph, normalized_adjacency
from .layers import Params, add_mlp, init_matrix, make_rng, mlp
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    d_emb: int = 64
    hidden: int = 64        # BiLSTM size per direction
    d_node: int = 64        # span MLP output, GCN input
    d_gcn: int = 128        # GCN hidden size
    d_cls: int = 64         # classifier hidden size
    dropout: float = 0.1
    init: str = "glorot"
    use_lstm: bool = True
    use_gcn: bool = True
    removed_edges: frozenset = frozenset()
    cell_cell_excludes_subject: bool = False
    forget_bias: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["removed_edges"] = sorted(self.removed_edges)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["removed_edges"] = frozenset(d.get("removed_edges", ()))
        return cls(**d)


HEAD_PREFIXES = ("wcm.", "npo.")

PUBLISHED_MODEL = ModelConfig(d_emb=768, hidden=768, d_node=768, d_gcn=1536, d_cls=768, dropout=0.5,
                          init="gaussian")


# ---------------------------------------------------------------- functional


def gcn_forward(L0: Tensor, A_hat, params: Params, train: bool = False, rng=None,
                dropout: float = 0.0) -> Tensor:
    """L1 = ReLU(A_hat L0 W0), dropout, L2 = ReLU(A_hat L1 W1)."""
    A = A_hat if isinstance(A_hat, Tensor) else Tensor(A_hat)
    if A.shape != (L0.shape[0], L0.shape[0]):
        raise tn.ShapeError("gcn_forward", A.shape, L0.shape)
    L1 = tn.relu(tn.matmul(A, tn.matmul(L0, params["gcn.w0"])))
    L1 = tn.dropout(L1, dropout, train, rng)
    return tn.relu(tn.matmul(A, tn.matmul(L1, params["gcn.w1"])))


def predict_score(L2: Tensor, params: Params, train: bool = False, rng=None, dropout: float = 0.0) -> Tensor:
    """sigmoid(MLP(mean of node rows)) for one graph; returns a scalar tensor."""
    pooled = tn.reshape(tn.mean_pool_rows(L2), (1, L2.shape[1]))
    logit = mlp(pooled, params, "cls", dropout, train, rng)
    return tn.reshape(tn.sigmoid(logit), ())


def supervised_loss(y: Tensor, label) -> Tensor:
    return tn.binary_cross_entropy(y, label)


# ----------------------------------------------------------------- batching


@dataclass
class Prepared:
    """Per-example inputs that do not change during training."""

    inp: TokenizedInput
    graph: Graph
    a_hat: np.ndarray
    label: int | None = None


@dataclass
class Batch:
    enc: EncodedBatch
    a_hat: np.ndarray        # block diagonal (sumK, sumK)
    node_pool: np.ndarray    # (B, sumK) per-graph mean
    labels: np.ndarray
    items: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.enc.batch_size


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    k = 0
    for b in blocks:
        m = b.shape[0]
        out[k:k + m, k:k + m] = b
        k += m
    return out


def collate(items: Sequence[Prepared]) -> Batch:
    enc = collate_inputs([it.inp for it in items])
    a_hat = block_diag([it.a_hat for it in items])
    pool = np.zeros((len(items), a_hat.shape[0]))
    for b in range(len(items)):
        lo, hi = enc.node_offsets[b], enc.node_offsets[b + 1]
        pool[b, lo:hi] = 1.0 / (hi - lo)
    labels = np.array([-1 if it.label is None else it.label for it in items], dtype=np.float64)
    return Batch(enc, a_hat, pool, labels, list(items))


# -------------------------------------------------------------------- model


class GraphQAModel:
    """Encoder + GCN + classifier with one flat parameter dictionary."""

    def __init__(self, vocab: Vocab, config: ModelConfig = ModelConfig(), seed: int = 0,
                 params: Params | None = None):
        self.vocab = vocab
        self.config = config
        if params is None:
            params = self._init_params(make_rng(seed))
        self.params = params

    def _init_params(self, rng) -> Params:
        c = self.config
        p = init_encoder_params(len(self.vocab), c.d_emb, c.hidden, c.d_node, rng, c.init, c.use_lstm,
                                c.forget_bias)
        p["gcn.w0"] = Tensor(init_matrix(rng, c.d_node, c.d_gcn, c.init), requires_grad=True)
        p["gcn.w1"] = Tensor(init_matrix(rng, c.d_gcn, c.d_gcn, c.init), requires_grad=True)
        cls_in = c.d_gcn if c.use_gcn else c.d_emb
        add_mlp(p, "cls", [cls_in, c.d_cls, 1], rng, c.init)
        return p

    # -- data ----------------------------------------------------------------
    def prepare(self, query: str, t: SemiTable, label: int | None = None) -> Prepared:
        g = build_graph(query, t, self.config.cell_cell_excludes_subject)
        g = ablate_graph(g, self.config.removed_edges)
        inp = encode_input(query, t, self.vocab)
        return Prepared(inp, g, normalized_adjacency(g.num_nodes, g.edges).A_hat, label)

    def prepare_examples(self, examples) -> list[Prepared]:
        return [self.prepare(ex.query, ex.example, ex.label) for ex in examples]

    # -- forward -------------------------------------------------------------
    def node_states(self, batch: Batch, train: bool = False, rng=None, external=None):
        """Returns (token states or None, L0, L2)."""
        c = self.config
        tokens = batch_token_matrix(batch.enc, self.params, external)
        L0, states = batch_init_nodes(tokens, batch.enc, self.params, c.use_lstm, c.dropout, train, rng)
        L2 = gcn_forward(L0, batch.a_hat, self.params, train, rng, c.dropout)
        return states, L0, L2

    def forward(self, batch: Batch, train: bool = False, rng=None, external=None) -> Tensor:
        """Match scores, shape (B,)."""
        c = self.config
        if c.use_gcn:
            _, _, L2 = self.node_states(batch, train, rng, external)
            pooled = tn.matmul(Tensor(batch.node_pool), L2)
        else:
            # no graph reasoning and no BiLSTM: average token embeddings straight into the classifier
            tokens = batch_token_matrix(batch.enc, self.params, external)
            pooled = tn.matmul(Tensor(batch.enc.seq_pool), tokens)
        logits = mlp(pooled, self.params, "cls", c.dropout, train, rng)
        return tn.reshape(tn.sigmoid(logits), (batch.size,))

    def loss(self, batch: Batch, train: bool = False, rng=None) -> Tensor:
        return tn.binary_cross_entropy(self.forward(batch, train, rng), batch.labels)

    def score(self, query: str, t: SemiTable) -> float:
        with tn.no_grad():
            return float(self.forward(collate([self.prepare(query, t)])).data[0])

    def predict(self, items: Sequence[Prepared], batch_size: int = 64) -> np.ndarray:
        out = []
        with tn.no_grad():
            for k in range(0, len(items), batch_size):
                out.append(self.forward(collate(items[k:k + batch_size])).data)
        return np.concatenate(out) if out else np.zeros(0)

    # -- persistence ---------------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = False) -> None:
        for k, v in state.items():
            if k in self.params:
                if self.params[k].shape != v.shape:
                    raise tn.ShapeError(f"load_state {k}", self.params[k].shape, v.shape)
                self.params[k].data = np.array(v, dtype=np.float64)
            elif strict:
                raise KeyError(f"unexpected parameter {k}")

    def save(self, path, extra: dict | None = None, extra_tensors: dict | None = None) -> None:
        meta = {"config": self.config.to_dict(), "vocab": self.vocab.itos[5:], "extra": extra or {}}
        tensors = self.state()
        tensors.update(extra_tensors or {})
        tn.save_tensors(path, tensors, json.dumps(meta, sort_keys=True).encode("utf-8"))

    @classmethod
    def load(cls, path, config_override: dict | None = None) -> tuple["GraphQAModel", dict]:
        tensors, raw = tn.load_tensors(path)
        meta = json.loads(raw.decode("utf-8"))
        cfg = ModelConfig.from_dict(meta["config"])
        if config_override:
            cfg = replace(cfg, **config_override)
        model = cls(Vocab(meta["vocab"]), cfg, seed=0)
        for k, v in tensors.items():
            # pre-training heads travel with the encoder and GCN
            if k.startswith(HEAD_PREFIXES) and k not in model.params:
                model.params[k] = Tensor(v, requires_grad=True)
        model.load_state({k: v for k, v in tensors.items() if k in model.params})
        extra = {k: v for k, v in tensors.items() if k not in model.params}
        return model, {"meta": meta.get("extra", {}), "tensors": extra}
