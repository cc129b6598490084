"""Splits, metrics, mini-batch training and evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import tensor as tn
from .encoder import Vocab, build_vocab
from .layers import make_rng
from .model import HEAD_PREFIXES, GraphQAModel, ModelConfig, Prepared, collate

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # all-negative data predicted all-negative counts as perfect
        if self.tp + self.fp + self.fn == 0:
            return 1.0
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def accuracy(self) -> float:
        total = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / total if total else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> Metrics:
    pred = np.asarray(scores) >= threshold
    gold = np.asarray(labels).astype(bool)
    return Metrics(int(np.sum(pred & gold)), int(np.sum(pred & ~gold)),
                   int(np.sum(~pred & gold)), int(np.sum(~pred & ~gold)))


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


# -------------------------------------------------------------------- split


def split_dataset(data: Sequence, seed: int) -> tuple[list, list, list]:
    """Random 80/10/10 split: floor(0.8n) train, floor(0.1n) valid, rest test."""
    n = len(data)
    if n < 10:
        raise ValueError(f"need at least 10 records to split, got {n}")
    order = make_rng(seed).permutation(n)
    n_train, n_valid = (8 * n) // 10, n // 10
    pick = lambda idx: [data[i] for i in idx]
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_valid]),
            pick(order[n_train + n_valid:]))


# ------------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.003
    batch_size: int = 32
    epochs: int = 20
    dropout: float = 0.1
    seed: int = 0
    momentum: float = 0.9
    optimizer: str = "adam"
    clip: float = 5.0
    d_emb: int = 64
    hidden: int = 64
    d_node: int = 64
    d_gcn: int = 128
    d_cls: int = 64
    init: str = "glorot"
    use_lstm: bool = True
    use_gcn: bool = True
    removed_edges: tuple = ()
    cell_cell_excludes_subject: bool = False
    forget_bias: float = 1.0
    min_count: int = 1
    threshold: float = 0.5
    pretrain_objectives: tuple = ()
    pretrain_epochs: int = 4
    pretrain_lr: float = 0.003

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs", "d_emb", "hidden", "d_node", "d_gcn", "d_cls"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        bad = set(self.pretrain_objectives) - {"wcm", "npo"}
        if bad:
            raise ValueError(f"unknown pre-training objectives {sorted(bad)}")
        object.__setattr__(self, "removed_edges", tuple(sorted(self.removed_edges)))
        object.__setattr__(self, "pretrain_objectives", tuple(sorted(self.pretrain_objectives)))

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_emb=self.d_emb, hidden=self.hidden, d_node=self.d_node, d_gcn=self.d_gcn,
                           d_cls=self.d_cls, dropout=self.dropout, init=self.init, use_lstm=self.use_lstm,
                           use_gcn=self.use_gcn, removed_edges=frozenset(self.removed_edges),
                           cell_cell_excludes_subject=self.cell_cell_excludes_subject,
                           forget_bias=self.forget_bias)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        base = base or cls()
        kinds = {f.name: type(getattr(base, f.name)) for f in fields(base)}
        updates = {}
        for key, raw in pairs.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            typ = kinds[key]
            raw = str(raw).strip()
            if typ is bool:
                updates[key] = raw.lower() in ("1", "true", "yes", "on")
            elif typ is tuple:
                updates[key] = tuple(x.strip() for x in raw.split(",") if x.strip())
            else:
                updates[key] = typ(raw)
        return replace(base, **updates)

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        pairs = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            pairs[key.strip()] = value
        return cls.from_pairs(pairs, base)


PUBLISHED_PRESET = TrainConfig(lr=2e-5, batch_size=64, dropout=0.5, momentum=0.0, optimizer="sgd", d_emb=768, hidden=768,
                           d_node=768, d_gcn=1536, d_cls=768, init="gaussian", pretrain_epochs=4,
                           pretrain_lr=2e-5)


# ---------------------------------------------------------------- optimizer


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps=1e-8, clip: float | None = None):
        self.params, self.lr, self.betas, self.eps, self.clip = params, lr, betas, eps, clip
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> float:
        norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params.values()))
        scale = self.clip / norm if self.clip and norm > self.clip else 1.0
        self.t += 1
        b1, b2 = self.betas
        for k, p in self.params.items():
            g = p.grad * scale
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mh = self.m[k] / (1 - b1 ** self.t)
            vh = self.v[k] / (1 - b2 ** self.t)
            p.data -= self.lr * mh / (np.sqrt(vh) + self.eps)
        return norm


class SGD:
    """Mini-batch SGD with optional heavy-ball momentum and global-norm clipping."""

    def __init__(self, params: dict, lr: float, momentum: float = 0.0, clip: float | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self.velocity = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> float:
        norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params.values()))
        scale = 1.0
        if self.clip and norm > self.clip:
            scale = self.clip / norm
        for k, p in self.params.items():
            v = self.velocity[k]
            v *= self.momentum
            v += p.grad * scale
            p.data -= self.lr * v
        return norm


def make_optimizer(name: str, params: dict, lr: float, momentum: float = 0.0, clip: float | None = None):
    if name == "adam":
        return Adam(params, lr, clip=clip)
    if name == "sgd":
        return SGD(params, lr, momentum, clip)
    raise ValueError(f"unknown optimizer {name!r}")


# ----------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid: Metrics


@dataclass
class TrainResult:
    model: GraphQAModel
    best_epoch: int
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [h.loss for h in self.history]


def best_epoch(f1s: Sequence[float]) -> int:
    """Index of the highest score; ties go to the earliest."""
    return int(np.argmax(np.asarray(f1s)))


def evaluate_prepared(model: GraphQAModel, items: Sequence[Prepared], threshold: float = 0.5) -> Metrics:
    scores = model.predict(items)
    return confusion(scores, [it.label for it in items], threshold)


def evaluate(model: GraphQAModel, dataset, threshold: float = 0.5) -> Metrics:
    return evaluate_prepared(model, model.prepare_examples(dataset), threshold)


def make_model(config: TrainConfig, vocab: Vocab) -> GraphQAModel:
    return GraphQAModel(vocab, config.model_config(), seed=config.seed)


def train(config: TrainConfig, train_data, valid_data, model: GraphQAModel | None = None) -> TrainResult:
    """Shuffled mini-batch updates; keeps the parameters of the best validation epoch."""
    if model is None:
        model = make_model(config, build_vocab(list(train_data) + list(valid_data), config.min_count))
    train_items = model.prepare_examples(train_data)
    valid_items = model.prepare_examples(valid_data)
    rng = make_rng(config.seed + 7919)
    trainable = {k: p for k, p in model.params.items() if _used(k, model.config)}
    opt = make_optimizer(config.optimizer, trainable, config.lr, config.momentum, config.clip)
    history: list[EpochRecord] = []
    best_state, best_f1, best_ep = model.state(), -1.0, -1
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_items))
        total, count = 0.0, 0
        for k in range(0, len(order), config.batch_size):
            batch = collate([train_items[i] for i in order[k:k + config.batch_size]])
            opt.zero_grad()
            loss = model.loss(batch, train=True, rng=rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch {k // config.batch_size}")
            loss.backward()
            opt.step()
            total += value * batch.size
            count += batch.size
        metrics = evaluate_prepared(model, valid_items, config.threshold)
        history.append(EpochRecord(epoch, total / count, metrics))
        log.info("epoch %d loss %.4f valid f1 %.4f", epoch, total / count, metrics.f1)
        if metrics.f1 > best_f1:
            best_state, best_f1, best_ep = model.state(), metrics.f1, epoch
    model.load_state(best_state)
    return TrainResult(model, best_ep, history)


def _used(name: str, cfg: ModelConfig) -> bool:
    if not cfg.use_gcn:
        return name == "enc.embedding" or name.startswith("cls.")
    return not name.startswith(HEAD_PREFIXES)
