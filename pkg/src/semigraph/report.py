"""Plain-text tables, JSON/CSV dumps and figures for experiment results."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ablation import VariantSummary  # noqa: E402
from .training import EpochRecord, Metrics  # noqa: E402


def metrics_table(rows: Sequence[tuple[str, Metrics]]) -> str:
    lines = [f"{'name':<24} {'P':>7} {'R':>7} {'F1':>7} {'TP':>6} {'FP':>6} {'FN':>6} {'TN':>6}"]
    for name, m in rows:
        lines.append(f"{name:<24} {m.precision:7.4f} {m.recall:7.4f} {m.f1:7.4f} "
                     f"{m.tp:6d} {m.fp:6d} {m.fn:6d} {m.tn:6d}")
    return "\n".join(lines)


def summary_table(summaries: Sequence[VariantSummary], reference: str | None = None) -> str:
    """Mean F1 over seeds with population std; delta against ``reference`` when present."""
    ref = next((s.mean_f1 for s in summaries if s.variant == reference), None)
    lines = [f"{'variant':<24} {'mean F1':>8} {'std':>7} {'delta':>8}  per-seed F1"]
    for s in summaries:
        delta = "" if ref is None else f"{s.mean_f1 - ref:+8.4f}"
        seeds = " ".join(f"{f:.4f}" for f in s.f1s)
        lines.append(f"{s.variant:<24} {s.mean_f1:8.4f} {s.std_f1:7.4f} {delta:>8}  {seeds}")
    return "\n".join(lines)


def summaries_json(summaries: Sequence[VariantSummary]) -> dict:
    """Per-run rows plus per-variant aggregates."""
    return {
        "runs": [r.to_dict() for s in summaries for r in s.runs],
        "aggregates": [{"variant": s.variant, "mean_f1": s.mean_f1, "std_f1": s.std_f1} for s in summaries],
    }


def write_json(doc, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_runs_csv(summaries: Sequence[VariantSummary], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "precision", "recall", "f1"])
        for s in summaries:
            for r in s.runs:
                d = r.to_dict()
                w.writerow([d["variant"], d["seed"], f"{d['precision']:.6f}", f"{d['recall']:.6f}", f"{d['f1']:.6f}"])
    return path


def plot_summaries(summaries: Sequence[VariantSummary], path, title: str = "") -> Path:
    """Horizontal bars of mean F1 with std whiskers and the individual seeds as dots."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [s.variant for s in summaries]
    fig, ax = plt.subplots(figsize=(6, 0.45 * len(names) + 1.2))
    ys = range(len(names))
    ax.barh(ys, [s.mean_f1 for s in summaries], xerr=[s.std_f1 for s in summaries],
            color="#8fb3d9", edgecolor="#2f4f6f", capsize=3)
    for y, s in zip(ys, summaries):
        ax.plot(s.f1s, [y] * len(s.f1s), "o", color="#2f4f6f", ms=3)
    ax.set_yticks(list(ys))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("test F1 (mean over seeds)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_history(history: Sequence[EpochRecord], path, title: str = "") -> Path:
    """Training loss and validation F1 per epoch on twin axes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, [h.loss for h in history], "-o", ms=3, color="#b24a3b", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [h.valid.f1 for h in history], "-s", ms=3, color="#2f4f6f", label="valid F1")
    ax2.set_ylabel("valid F1")
    ax2.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
