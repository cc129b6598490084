"""Multi-seed experiments: single fits, the component ablation table and the
pre-training objective comparison."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from .encoder import build_vocab
from .graph import CAPTION_CONTENT, CELL_CELL, HEADER_CELL, SUBJECT_ATTRIBUTE
from .pretrain import PretrainConfig, pretrain
from .training import Metrics, TrainConfig, TrainResult, evaluate, make_model, mean_std, split_dataset, train

log = logging.getLogger(__name__)

EDGE_VARIANTS = (
    ("w/o CaptionContent", CAPTION_CONTENT),
    ("w/o HeaderCell", HEADER_CELL),
    ("w/o SubjectAttribute", SUBJECT_ATTRIBUTE),
    ("w/o CellCell", CELL_CELL),
)
TABLE_ONLY = {HEADER_CELL, SUBJECT_ATTRIBUTE}


@dataclass(frozen=True)
class Splits:
    train: list
    valid: list
    test: list


@dataclass
class RunRecord:
    variant: str
    seed: int
    metrics: Metrics
    best_epoch: int = -1
    seconds: float = 0.0

    def to_dict(self) -> dict:
        m = self.metrics
        return {"variant": self.variant, "seed": self.seed, "precision": m.precision,
                "recall": m.recall, "f1": m.f1}


@dataclass
class VariantSummary:
    variant: str
    runs: list[RunRecord] = field(default_factory=list)

    @property
    def f1s(self) -> list[float]:
        return [r.metrics.f1 for r in self.runs]

    @property
    def mean_f1(self) -> float:
        return mean_std(self.f1s)[0]

    @property
    def std_f1(self) -> float:
        return mean_std(self.f1s)[1]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "mean_f1": self.mean_f1, "std_f1": self.std_f1,
                "runs": [r.to_dict() for r in self.runs]}


def pretrain_config(config: TrainConfig, objectives: Sequence[str] | None = None) -> PretrainConfig:
    objs = tuple(sorted(config.pretrain_objectives if objectives is None else objectives))
    return PretrainConfig(objectives=objs, epochs=config.pretrain_epochs, lr=config.pretrain_lr,
                          batch_size=config.batch_size, optimizer=config.optimizer,
                          momentum=config.momentum, clip=config.clip, seed=config.seed)


def fit(config: TrainConfig, splits: Splits, unlabeled: Sequence | None = None) -> TrainResult:
    """Optionally pre-train on ``unlabeled`` (query, table) pairs, then fine-tune.

    The vocabulary covers the labeled training/validation data plus the
    unlabeled corpus, so both stages share one embedding table.
    """
    corpus = list(splits.train) + list(splits.valid)
    use_pretrain = bool(config.pretrain_objectives) and unlabeled
    if use_pretrain:
        corpus += list(unlabeled)
    model = make_model(config, build_vocab(corpus, config.min_count))
    if use_pretrain:
        pretrain(model, unlabeled, pretrain_config(config))
    return train(config, splits.train, splits.valid, model)


def run_seeds(name: str, config: TrainConfig, data=None, seeds: Sequence[int] = (0, 1, 2),
              splits: Splits | None = None, unlabeled=None) -> VariantSummary:
    """Train one variant per seed.  Without fixed ``splits`` each seed also re-splits ``data``."""
    out = VariantSummary(name)
    for seed in seeds:
        sp = splits or Splits(*split_dataset(data, seed))
        start = time.perf_counter()
        res = fit(replace(config, seed=seed), sp, unlabeled)
        metrics = evaluate(res.model, sp.test, config.threshold)
        out.runs.append(RunRecord(name, seed, metrics, res.best_epoch, time.perf_counter() - start))
        log.info("%s seed %d test f1 %.4f", name, seed, metrics.f1)
    return out


def ablation_variants(config: TrainConfig, kind: str = "table") -> list[tuple[str, TrainConfig, bool]]:
    """(name, config, pre-train?) rows: full, edge removals, no BiLSTM, no GCN, no pre-training.

    Lists carry no header-cell or subject-attribute relations, so those rows
    are dropped for them.
    """
    rows = [("full", config, True)]
    for name, kind_removed in EDGE_VARIANTS:
        if kind == "list" and kind_removed in TABLE_ONLY:
            continue
        rows.append((name, replace(config, removed_edges=tuple(config.removed_edges) + (kind_removed,)), True))
    rows.append(("w/o LSTM", replace(config, use_lstm=False), True))
    rows.append(("w/o GCN", replace(config, use_gcn=False, use_lstm=False), False))
    rows.append(("w/o pre-training", replace(config, pretrain_objectives=()), False))
    return rows


def infer_kind(data) -> str:
    kinds = {ex.example.kind for ex in data}
    return "list" if kinds == {"list"} else "table"


def run_ablation(config: TrainConfig, data, seeds: Sequence[int] = (0, 1, 2), unlabeled=None,
                 splits: Splits | None = None, kind: str | None = None,
                 only: Sequence[str] | None = None) -> list[VariantSummary]:
    kind = kind or infer_kind(splits.train if splits else data)
    out = []
    for name, cfg, pre in ablation_variants(config, kind):
        if only is not None and name not in only:
            continue
        out.append(run_seeds(name, cfg, data, seeds, splits, unlabeled if pre else None))
    return out


PRETRAIN_VARIANTS = (("none", ()), ("wcm", ("wcm",)), ("npo", ("npo",)), ("wcm+npo", ("npo", "wcm")))


def run_pretrain_comparison(config: TrainConfig, splits: Splits, unlabeled, seeds: Sequence[int] = (0, 1, 2),
                            only: Sequence[str] | None = None) -> list[VariantSummary]:
    """Fine-tune after no pre-training, each single objective, and both objectives."""
    out = []
    for name, objs in PRETRAIN_VARIANTS:
        if only is not None and name not in only:
            continue
        out.append(run_seeds(name, replace(config, pretrain_objectives=objs), None, seeds, splits, unlabeled))
    return out
