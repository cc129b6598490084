"""Tokenization of the concatenated query/table input and node initialization.

The token sequence is ``[CLS] Q [SEP] C [SEP] h_1 [SEP] ... c_11 [SEP] ...``
with every node's tokens followed by a separator.  A BiLSTM runs over the
token embeddings and each node vector is an MLP of the bidirectional states
at the first and last token of its span.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as tn
from .canonical import SemiTable, as_graph_table
from .graph import CAPTION, CELL, HEADER, QUERY
from .layers import Params, add_mlp, init_matrix, mlp
from .tensor import Tensor

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(len(SPECIALS))

_TOKEN = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d_]+")


def tokenize(text: str) -> list[str]:
    """Casefold; split on whitespace and punctuation; numbers stay whole."""
    return _TOKEN.findall(text.casefold())


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        self.itos = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def corpus_ids(self) -> range:
        """Ids of non-special tokens."""
        return range(len(SPECIALS), len(self.itos))

    def save(self, path) -> None:
        # one corpus token per line; id = line index + number of specials
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.itos[len(SPECIALS):]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def _texts(item) -> Iterable[str]:
    if hasattr(item, "example"):
        query, t = item.query, item.example
    else:
        query, t = item
    yield query
    yield t.caption
    if t.header is not None:
        yield from t.header
    for row in t.body:
        yield from row


def build_vocab(corpus: Iterable, min_count: int = 1) -> Vocab:
    """Tokens seen at least ``min_count`` times, most frequent first, ties alphabetical.

    ``corpus`` holds LabeledExample records or (query, SemiTable) pairs.
    """
    counts: Counter = Counter()
    n = 0
    for item in corpus:
        n += 1
        for text in _texts(item):
            counts.update(tokenize(text))
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(kept)


@dataclass(frozen=True)
class TokenizedInput:
    ids: tuple[int, ...]
    node_spans: tuple[tuple[int, int], ...]  # inclusive token positions per node
    owner: tuple[int, ...]  # node index per token, -1 for separators
    node_kinds: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.ids)

    @property
    def num_nodes(self) -> int:
        return len(self.node_spans)


def node_texts(query: str, t: SemiTable) -> tuple[list[str], list[str]]:
    """Node texts and kinds in graph order: query, caption, headers, cells row-major."""
    t = as_graph_table(t)
    texts = [query, t.caption]
    kinds = [QUERY, CAPTION]
    if t.header is not None:
        texts.extend(t.header)
        kinds.extend([HEADER] * len(t.header))
    for row in t.body:
        texts.extend(row)
        kinds.extend([CELL] * len(row))
    return texts, kinds


def encode_input(query: str, t: SemiTable, vocab: Vocab) -> TokenizedInput:
    texts, kinds = node_texts(query, t)
    ids = [CLS_ID]
    owner = [-1]
    spans = []
    for n, text in enumerate(texts):
        toks = [vocab.id(tok) for tok in tokenize(text)] or [PAD_ID]
        start = len(ids)
        ids.extend(toks)
        owner.extend([n] * len(toks))
        spans.append((start, len(ids) - 1))
        ids.append(SEP_ID)
        owner.append(-1)
    return TokenizedInput(tuple(ids), tuple(spans), tuple(owner), tuple(kinds))


# ------------------------------------------------------------------ params


def init_encoder_params(vocab_size: int, d_emb: int, hidden: int, d_node: int, rng,
                        scheme: str = "glorot", use_lstm: bool = True, forget_bias: float = 1.0) -> Params:
    p: Params = {}
    p["enc.embedding"] = Tensor(rng.normal(0.0, 1.0, size=(vocab_size, d_emb)),
                                requires_grad=True)
    if use_lstm:
        for direction in ("fwd", "bwd"):
            p[f"enc.lstm_{direction}.wx"] = Tensor(init_matrix(rng, d_emb, 4 * hidden, scheme), requires_grad=True)
            p[f"enc.lstm_{direction}.wh"] = Tensor(init_matrix(rng, hidden, 4 * hidden, scheme), requires_grad=True)
            bias = np.zeros(4 * hidden)
            bias[hidden:2 * hidden] = forget_bias  # forget gate starts open
            p[f"enc.lstm_{direction}.b"] = Tensor(bias, requires_grad=True)
        add_mlp(p, "enc.span", [4 * hidden, d_node, d_node], rng, scheme)
    else:
        add_mlp(p, "enc.span", [d_emb, d_node, d_node], rng, scheme)
    return p


# ----------------------------------------------------------------- batching


@dataclass
class EncodedBatch:
    """Padded token ids and index arrays for a batch of tokenized inputs."""

    ids: np.ndarray          # (B, T)
    lengths: np.ndarray      # (B,)
    rev_index: np.ndarray    # (B*T,) within-length reversal, an involution
    span_start: np.ndarray   # (sumK,) flat positions into B*T
    span_end: np.ndarray     # (sumK,)
    node_offsets: np.ndarray  # (B+1,)
    span_pool: np.ndarray    # (sumK, B*T) average over each node's span
    seq_pool: np.ndarray     # (B, B*T) average over every real token

    @property
    def batch_size(self) -> int:
        return self.ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.ids.shape[1]


def collate_inputs(inputs: Sequence[TokenizedInput]) -> EncodedBatch:
    B = len(inputs)
    T = max(inp.length for inp in inputs)
    ids = np.full((B, T), PAD_ID, dtype=np.int64)
    lengths = np.array([inp.length for inp in inputs])
    rev = np.arange(B * T)
    starts, ends, offsets = [], [], [0]
    for b, inp in enumerate(inputs):
        n = inp.length
        ids[b, :n] = inp.ids
        rev[b * T:b * T + n] = b * T + np.arange(n - 1, -1, -1)
        for s, e in inp.node_spans:
            starts.append(b * T + s)
            ends.append(b * T + e)
        offsets.append(offsets[-1] + inp.num_nodes)
    K = offsets[-1]
    span_pool = np.zeros((K, B * T))
    for k, (s, e) in enumerate(zip(starts, ends)):
        span_pool[k, s:e + 1] = 1.0 / (e - s + 1)
    seq_pool = np.zeros((B, B * T))
    for b, n in enumerate(lengths):
        seq_pool[b, b * T:b * T + n] = 1.0 / n
    return EncodedBatch(ids, lengths, rev, np.array(starts), np.array(ends),
                        np.array(offsets), span_pool, seq_pool)


# ----------------------------------------------------------------- forward


def token_embeddings(inp: TokenizedInput, params: Params, external: np.ndarray | None = None) -> Tensor:
    """(T, d_e) token matrix: embedding lookup, or a supplied contextual matrix passed through."""
    if external is not None:
        external = np.asarray(external, dtype=np.float64)
        if external.shape[0] != inp.length:
            raise tn.ShapeError("token_embeddings", external.shape, (inp.length,))
        return Tensor(external)
    emb = params["enc.embedding"]
    ids = np.asarray(inp.ids)
    if ids.min() < 0 or ids.max() >= emb.shape[0]:
        raise IndexError("token id outside the vocabulary")
    return tn.take_rows(emb, ids)


def batch_token_matrix(batch: EncodedBatch, params: Params, external=None) -> Tensor:
    """(B*T, d_e) token matrix for a batch; ``external`` is a list of (T_b, d_e) arrays."""
    if external is None:
        return tn.take_rows(params["enc.embedding"], batch.ids.reshape(-1))
    B, T = batch.ids.shape
    d = np.asarray(external[0]).shape[1]
    flat = np.zeros((B * T, d))
    for b, mat in enumerate(external):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape[0] != batch.lengths[b]:
            raise tn.ShapeError("external embeddings", mat.shape, (batch.lengths[b], d))
        flat[b * T:b * T + mat.shape[0]] = mat
    return Tensor(flat)


def bilstm_states(tokens: Tensor, batch: EncodedBatch, params: Params) -> Tensor:
    """(B*T, 2H) forward/backward hidden states; padding positions are junk."""
    B, T = batch.ids.shape
    d = tokens.shape[1]
    fwd = tn.lstm(tn.reshape(tokens, (B, T, d)), params["enc.lstm_fwd.wx"],
                  params["enc.lstm_fwd.wh"], params["enc.lstm_fwd.b"])
    rev_in = tn.reshape(tn.take_rows(tokens, batch.rev_index), (B, T, d))
    bwd_rev = tn.lstm(rev_in, params["enc.lstm_bwd.wx"], params["enc.lstm_bwd.wh"], params["enc.lstm_bwd.b"])
    H = fwd.shape[2]
    bwd = tn.take_rows(tn.reshape(bwd_rev, (B * T, H)), batch.rev_index)
    return tn.concat([tn.reshape(fwd, (B * T, H)), bwd], axis=1)


def batch_init_nodes(tokens: Tensor, batch: EncodedBatch, params: Params, use_lstm: bool = True,
                     dropout: float = 0.0, train: bool = False, rng=None) -> tuple[Tensor, Tensor | None]:
    """Node matrix L0 (sumK, d) plus the contextual token states (None without the BiLSTM)."""
    if use_lstm:
        states = bilstm_states(tokens, batch, params)
        extremes = tn.concat([tn.take_rows(states, batch.span_start),
                              tn.take_rows(states, batch.span_end)], axis=1)
        return mlp(extremes, params, "enc.span", dropout, train, rng), states
    pooled = tn.matmul(Tensor(batch.span_pool), tokens)
    return mlp(pooled, params, "enc.span", dropout, train, rng), None


def init_nodes(token_matrix: Tensor, inp: TokenizedInput, params: Params, use_lstm: bool = True) -> Tensor:
    """L0 for a single input (eval mode)."""
    if token_matrix.shape[0] != inp.length:
        raise tn.ShapeError("init_nodes", token_matrix.shape, (inp.length,))
    for s, e in inp.node_spans:
        if not 0 <= s <= e < inp.length:
            raise IndexError(f"span ({s}, {e}) outside a {inp.length}-token input")
    batch = collate_inputs([inp])
    L0, _ = batch_init_nodes(token_matrix, batch, params, use_lstm)
    return L0
