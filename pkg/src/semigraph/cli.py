"""Command line entry point.

Every subcommand prints a plain-text table and can write the same numbers as
JSON.  Training options come from a flat ``key=value`` file (``--config``)
with ``--set key=value`` overrides applied on top.  ``--check`` makes
``eval`` and ``ablate`` exit with status 1 when the result misses its target.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import report
from .ablation import Splits, pretrain_config, run_ablation, run_pretrain_comparison
from .encoder import build_vocab
from .extraction import extract_path, read_corpus, read_jsonl, to_record, write_jsonl
from .model import GraphQAModel
from .pretrain import pretrain
from .synth import SynthSpec, generate_synthetic, generate_tables
from .training import PUBLISHED_PRESET, TrainConfig, evaluate, make_model, split_dataset, train

log = logging.getLogger("semigraph")


def load_config(args) -> TrainConfig:
    base = PUBLISHED_PRESET if getattr(args, "preset", "desk") == "published" else TrainConfig()
    cfg = base
    if getattr(args, "config", None):
        cfg = TrainConfig.from_text(Path(args.config).read_text(encoding="utf-8"), cfg)
    pairs = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        pairs[key.strip()] = value
    return TrainConfig.from_pairs(pairs, cfg) if pairs else cfg


def _emit(doc, path) -> None:
    if path:
        report.write_json(doc, path)
        print(f"wrote {path}")


def _seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _load_splits(args, seed: int) -> Splits:
    """Either explicit --train/--valid/--test files or an 80/10/10 split of --data."""
    if args.train:
        if not (args.valid and args.test):
            raise SystemExit("--train needs --valid and --test")
        return Splits(read_jsonl(args.train), read_jsonl(args.valid), read_jsonl(args.test))
    if not args.data:
        raise SystemExit("give --data or --train/--valid/--test")
    return Splits(*split_dataset(read_jsonl(args.data), seed))


# ----------------------------------------------------------------- commands


def cmd_extract(args) -> int:
    pairs = extract_path(args.input, args.kind)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rid, t in pairs:
            fh.write(json.dumps(to_record("", t, None, rid), ensure_ascii=False) + "\n")
    print(f"{'source':<32} {'rows':>5} {'cols':>5}  caption")
    for rid, t in pairs:
        print(f"{rid:<32} {t.n_rows:>5} {t.n_cols:>5}  {t.caption[:40]}")
    print(f"wrote {len(pairs)} records to {args.out}")
    _emit({"records": len(pairs), "out": str(args.out)}, args.json)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(family=args.family, n=args.n, kind=args.kind, min_rows=args.min_rows,
                     max_rows=args.max_rows, max_attributes=args.max_attributes,
                     n_entities=args.n_entities, n_values=args.n_values)
    if args.unlabeled:
        pairs = generate_tables(spec, args.seed)
        with open(args.out, "w", encoding="utf-8") as fh:
            for k, (_, t) in enumerate(pairs):
                fh.write(json.dumps(to_record("", t, None, f"u-{args.seed}-{k}"), ensure_ascii=False) + "\n")
        positives = None
    else:
        data = generate_synthetic(spec, args.seed)
        write_jsonl(data, args.out)
        positives = sum(ex.label for ex in data)
    print(f"{'family':<10} {'n':>6} {'positives':>10}  out")
    print(f"{args.family:<10} {args.n:>6} {'-' if positives is None else positives:>10}  {args.out}")
    _emit({"spec": asdict(spec), "seed": args.seed, "positives": positives, "out": str(args.out)}, args.json)
    return 0


def cmd_pretrain(args) -> int:
    cfg = load_config(args)
    objectives = args.objectives.split(",") if args.objectives else cfg.pretrain_objectives or ("npo", "wcm")
    pcfg = pretrain_config(cfg, objectives)
    if args.epochs is not None:
        pcfg = replace(pcfg, epochs=args.epochs)
    if args.seed is not None:
        pcfg = replace(pcfg, seed=args.seed)
    corpus = read_corpus(args.data)
    extra = read_jsonl(args.vocab_from) if args.vocab_from else []
    model = make_model(cfg, build_vocab(corpus + list(extra), cfg.min_count))
    res = pretrain(model, corpus, pcfg)
    model.save(args.out, extra={"pretrain": asdict(pcfg), "losses": res.losses})
    print(f"{'epoch':>5} {'loss':>9}")
    for k, loss in enumerate(res.losses):
        print(f"{k:>5} {loss:9.4f}")
    print(f"checkpoint {args.out}")
    _emit({"losses": res.losses, "config": asdict(pcfg), "checkpoint": str(args.out)}, args.json)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args)
    splits = _load_splits(args, cfg.seed)
    model = None
    if args.init:
        model, _ = GraphQAModel.load(args.init)
    res = train(cfg, splits.train, splits.valid, model)
    test = evaluate(res.model, splits.test, cfg.threshold)
    res.model.save(args.out, extra={"train_config": cfg.to_text(), "best_epoch": res.best_epoch})
    print(f"{'epoch':>5} {'loss':>9} {'valid F1':>9}")
    for h in res.history:
        mark = " *" if h.epoch == res.best_epoch else ""
        print(f"{h.epoch:>5} {h.loss:9.4f} {h.valid.f1:9.4f}{mark}")
    print()
    print(report.metrics_table([("test", test)]))
    if args.report:
        out = Path(args.report)
        report.plot_history(res.history, out / "history.png", "training")
        report.write_json({"history": [{"epoch": h.epoch, "loss": h.loss, **h.valid.to_dict()}
                                       for h in res.history]}, out / "history.json")
    _emit({"variant": "full", "seed": cfg.seed, "best_epoch": res.best_epoch, "test": test.to_dict(),
           "checkpoint": str(args.out)}, args.json)
    return 0


def cmd_eval(args) -> int:
    model, _ = GraphQAModel.load(args.ckpt)
    data = read_jsonl(args.data)
    m = evaluate(model, data, args.threshold)
    print(report.metrics_table([(Path(args.data).name, m)]))
    _emit({"data": str(args.data), **m.to_dict()}, args.json)
    if args.check and m.f1 < args.min_f1:
        print(f"CHECK FAILED: F1 {m.f1:.4f} < {args.min_f1}")
        return 1
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args)
    seeds = _seeds(args.seeds)
    unlabeled = read_corpus(args.unlabeled) if args.unlabeled else None
    fixed = _load_splits(args, cfg.seed) if args.train else None
    data = None if fixed else read_jsonl(args.data)
    only = args.only.split(",") if args.only else None
    if args.study == "pretrain":
        if unlabeled is None:
            raise SystemExit("--study pretrain needs --unlabeled")
        fixed = fixed or Splits(*split_dataset(data, cfg.seed))
        rows = run_pretrain_comparison(cfg, fixed, unlabeled, seeds, only)
        ref = "none"
    else:
        rows = run_ablation(cfg, data, seeds, unlabeled, fixed, only=only)
        ref = "full"
    print(report.summary_table(rows, ref))
    out = Path(args.out_dir)
    doc = report.summaries_json(rows)
    report.write_json(doc, out / f"{args.study}.json")
    report.write_runs_csv(rows, out / f"{args.study}.csv")
    report.plot_summaries(rows, out / f"{args.study}.png", args.study)
    print(f"wrote {out / (args.study + '.json')}, .csv and .png")
    _emit(doc, args.json)
    if args.check:
        gap = args.min_gap if args.min_gap is not None else (0.02 if args.study == "pretrain" else 0.10)
        failures = check_study(args.study, rows, args.min_f1, gap)
        for f in failures:
            print(f"CHECK FAILED: {f}")
        return 1 if failures else 0
    return 0


def check_study(study: str, rows, min_f1: float, min_gap: float) -> list[str]:
    by = {r.variant: r.mean_f1 for r in rows}
    failures = []
    if study == "pretrain":
        best = by.get("wcm+npo")
        if best is None or "none" not in by:
            return ["pre-training study needs the 'none' and 'wcm+npo' rows"]
        if best - by["none"] < min_gap:
            failures.append(f"wcm+npo - none = {best - by['none']:.4f} < {min_gap}")
        for single in ("wcm", "npo"):
            if single in by and best < by[single]:
                failures.append(f"wcm+npo {best:.4f} < {single} {by[single]:.4f}")
        return failures
    full = by.get("full")
    if full is None:
        return ["ablation study needs the 'full' row"]
    if full < min_f1:
        failures.append(f"full mean F1 {full:.4f} < {min_f1}")
    if "w/o GCN" in by and full - by["w/o GCN"] < min_gap:
        failures.append(f"full - w/o GCN = {full - by['w/o GCN']:.4f} < {min_gap}")
    return failures


def cmd_score(args) -> int:
    model, _ = GraphQAModel.load(args.ckpt)
    pairs = read_corpus(args.record)
    if not 0 <= args.index < len(pairs):
        raise SystemExit(f"--index {args.index} outside 0..{len(pairs) - 1}")
    query, t = pairs[args.index]
    query = args.query or query
    if not query.strip():
        raise SystemExit("no query given and the record has none")
    y = model.score(query, t)
    print(f"{'query':<40} {'score':>8}")
    print(f"{query[:40]:<40} {y:8.4f}")
    _emit({"query": query, "index": args.index, "score": y}, args.json)
    return 0


# ------------------------------------------------------------------ parsing


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--preset", choices=("desk", "published"), default="desk")


def _split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="labeled JSONL, split 80/10/10 by seed")
    p.add_argument("--train", help="explicit training JSONL")
    p.add_argument("--valid", help="explicit validation JSONL")
    p.add_argument("--test", help="explicit test JSONL")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semigraph", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="HTML tables or lists to JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("table", "list"), default="table")
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="synthetic labeled or unlabeled corpus")
    p.add_argument("--family", default="row", choices=("row", "caption", "header", "mixed"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--kind", default="table", choices=("table", "list"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-rows", type=int, default=SynthSpec.min_rows)
    p.add_argument("--max-rows", type=int, default=SynthSpec.max_rows)
    p.add_argument("--max-attributes", type=int, default=SynthSpec.max_attributes)
    p.add_argument("--n-entities", type=int, default=SynthSpec.n_entities)
    p.add_argument("--n-values", type=int, default=SynthSpec.n_values)
    p.add_argument("--unlabeled", action="store_true", help="tables only, no queries or labels")
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="WCM/NPO pre-training on an unlabeled corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--objectives", help="comma list from wcm,npo")
    p.add_argument("--vocab-from", help="labeled JSONL whose tokens join the vocabulary")
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    _config_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="fine-tune and keep the best validation epoch")
    _split_args(p)
    p.add_argument("--init", help="checkpoint to start from (e.g. after pretrain)")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="directory for the history figure and JSON")
    p.add_argument("--json")
    _config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="precision/recall/F1 of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--check", action="store_true")
    p.add_argument("--min-f1", type=float, default=0.9)
    p.add_argument("--json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="multi-seed component or pre-training study")
    _split_args(p)
    p.add_argument("--study", choices=("components", "pretrain"), default="components")
    p.add_argument("--unlabeled", help="unlabeled corpus for pre-training")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--only", help="comma list of variant names to run")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--check", action="store_true")
    p.add_argument("--min-f1", type=float, default=0.9)
    p.add_argument("--min-gap", type=float,
                   help="required margin (default 0.10 over w/o GCN, 0.02 over no pre-training)")
    p.add_argument("--json")
    _config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("score", help="match score for one query and one record")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--record", required=True, help="JSONL file holding the example")
    p.add_argument("--index", type=int, default=0, help="line index of the record")
    p.add_argument("--query", help="query text (defaults to the record's own)")
    p.add_argument("--json")
    p.set_defaults(func=cmd_score)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
