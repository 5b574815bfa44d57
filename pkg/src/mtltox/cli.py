"""Command-line entry point.

Subcommands: prep, propagate, train, evaluate, bias-report, templates,
ks-compare. Exit codes: 0 success, 2 input error, 3 numerical failure,
4 checkpoint/vocabulary compatibility error.

Config file (JSON) for propagate/train, all keys optional:

    {
      "hyper":      {"hidden": 8, "dense1": 16, "dense2": 16, "n_aux": 9,
                     "dropout_rate": 0.2, "attention": true, "max_len": 220},
      "embeddings": {"source1": "glove.txt", "source2": "fasttext.vec",
                     "dim1": 50, "dim2": 50, "oov_seed": 0},
      "train":      {"epochs": 30, "batch_size": 64, "learning_rate": 0.001,
                     "alpha": 0.6, "c": 3.0, "grad_clip_norm": 5.0,
                     "patience": 5, "aux_source": "identities"}
    }

Missing embedding sources fall back to seeded random vectors of the
configured dimensions. The MTLTOX_SEED environment variable overrides the
default seed wherever --seed is not given.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from mtltox.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from mtltox.corpus import (
    IDENTITY_COLUMNS,
    CorpusError,
    Vocabulary,
    binarize_and_weight,
    load_comments,
    load_corpus,
    make_folds,
    save_comments,
)
from mtltox.embeddings import EmbeddingError, EmbeddingTable, build_table, load_vectors
from mtltox.metrics import BiasReport, ScoredExample, bias_report, ks_two_sample
from mtltox.network import Hyper, NetworkError
from mtltox.templates import (
    DEFAULT_IDENTITY_KEYWORDS,
    builtin_templates,
    load_templates,
    run_probe,
)
from mtltox.training import (
    TrainConfig,
    evaluate_model,
    grid_search_alpha,
    propagate_identities,
    train_fold,
)

EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_COMPAT = 4


class CompatibilityError(RuntimeError):
    pass


def _default_seed() -> int:
    return int(os.environ.get("MTLTOX_SEED", "0"))


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"cannot read config {path}: {exc}") from exc


def _build_table(config: dict, vocab: Vocabulary) -> EmbeddingTable:
    emb = config.get("embeddings", {})
    dim1 = emb.get("dim1", 50)
    dim2 = emb.get("dim2", 50)
    src1 = load_vectors(emb["source1"], dim1) if emb.get("source1") else {}
    src2 = load_vectors(emb["source2"], dim2) if emb.get("source2") else {}
    return build_table(vocab, src1, src2, emb.get("oov_seed", 0), dim1=dim1, dim2=dim2)


def _build_hyper(config: dict, embed_dim: int) -> Hyper:
    return Hyper(embed_dim=embed_dim, **config.get("hyper", {}))


def _build_train_cfg(config: dict, args) -> TrainConfig:
    fields = dict(config.get("train", {}))
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    fields.setdefault("seed", _default_seed())
    if getattr(args, "folds", None) is not None:
        fields["k_folds"] = args.folds
    return TrainConfig(**fields)


def cmd_prep(args) -> int:
    records = load_corpus(args.input, schema=args.format)
    from mtltox.corpus import tokenize

    vocab = Vocabulary.build(tokenize(r.comment_text) for r in records)
    vocab.save(args.vocab_out)
    comments = [binarize_and_weight(r, args.c, vocab, args.max_len) for r in records]
    save_comments(args.out, comments)

    n = len(comments)
    n_nontoxic = sum(1 for c in comments if c.y_bin == 0)
    n_weighted = sum(1 for c in comments if c.beta != 1.0)
    n_unannotated = sum(1 for c in comments if c.needs_propagation)
    print(f"comments: {n}")
    print(f"non-toxic: {n_nontoxic} ({100.0 * n_nontoxic / n:.2f}%)")
    print(f"weighted (beta={args.c:g}): {n_weighted}")
    print(f"needing identity propagation: {n_unannotated}")
    print(f"vocabulary size: {len(vocab)}")
    for i, name in enumerate(IDENTITY_COLUMNS):
        count = sum(1 for c in comments if c.identity_labels[i] >= 0.5)
        print(f"identity {name}: {count}")
    return 0


def cmd_propagate(args) -> int:
    config = _load_config(args.config)
    comments = load_comments(args.data)
    vocab = Vocabulary.load(args.vocab)
    table = _build_table(config, vocab)
    hyper = _build_hyper(config, table.dim)
    cfg = _build_train_cfg(config, args)
    filled = propagate_identities(comments, table, hyper, cfg)
    save_comments(args.out, filled)
    print(f"propagated identities for {sum(1 for c in filled if c.propagated)} comments")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    comments = load_comments(args.data)
    vocab = Vocabulary.load(args.vocab)
    table = _build_table(config, vocab)
    hyper = _build_hyper(config, table.dim)
    cfg = _build_train_cfg(config, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subgroups = config.get("subgroups", list(IDENTITY_COLUMNS))

    if args.alpha and args.alpha.startswith("grid:"):
        grid = [float(v) for v in args.alpha[len("grid:") :].split(",")]
        chosen, results = grid_search_alpha(comments, table, hyper, cfg, subgroups, grid)
        (out_dir / "alpha_grid.json").write_text(
            json.dumps({"chosen_alpha": chosen, "results": results}, indent=2)
        )
        print(f"alpha grid search: chose alpha={chosen}")
        cfg = dataclasses.replace(cfg, alpha=chosen)
    elif args.alpha:
        cfg = dataclasses.replace(cfg, alpha=float(args.alpha))

    plan = make_folds(len(comments), cfg.k_folds, cfg.seed)
    for fold, (train_idx, val_idx) in enumerate(plan.folds):
        fold_cfg = dataclasses.replace(cfg, seed=cfg.seed + fold)
        val_set = [comments[i] for i in val_idx]
        params, record = train_fold(
            [comments[i] for i in train_idx], val_set, table, hyper, fold_cfg
        )
        report = evaluate_model(params, table, val_set, subgroups, cfg.power)
        record.fold = fold
        record.metrics = {
            "overall_auc": report.overall_auc,
            "f1": report.f1,
            "precision": report.precision,
            "recall": report.recall,
            "generalized_mean_bias_auc": report.generalized_mean_bias_auc,
        }
        save_checkpoint(
            out_dir / f"checkpoint_fold{fold}.json",
            params,
            table,
            vocab.checksum(),
            meta={"fold": fold, "alpha": cfg.alpha, "seed": fold_cfg.seed},
        )
        (out_dir / f"run_fold{fold}.json").write_text(json.dumps(record.to_dict(), indent=2))
        print(
            f"fold {fold}: val AUC={report.overall_auc}, F1={report.f1:.4f}, "
            f"GMB AUC={report.generalized_mean_bias_auc}"
        )
    return 0


def _report_to_csv(report: BiasReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subgroup", "subgroup_auc", "bpsn_auc", "n_pos", "n_neg"])
        for name, stats in report.subgroups.items():
            writer.writerow([name, stats.subgroup_auc, stats.bpsn_auc, stats.n_pos, stats.n_neg])


def cmd_evaluate(args) -> int:
    params, table, vocab_checksum, _ = load_checkpoint(args.checkpoint)
    if args.vocab:
        if Vocabulary.load(args.vocab).checksum() != vocab_checksum:
            raise CompatibilityError("vocabulary does not match the checkpoint")
    comments = load_comments(args.data)
    subgroups = [s for s in args.subgroups.split(",") if s] if args.subgroups else []
    report = evaluate_model(params, table, comments, subgroups, args.p)
    payload = {"p": args.p, "report": report.to_dict()}
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=2))
    _report_to_csv(report, out.with_suffix(".csv"))
    print(json.dumps(payload["report"], indent=2))
    return 0


def _predictions_to_examples(path: Path, subgroups: list[str]) -> list[ScoredExample]:
    rows: list[dict] = []
    if path.suffix == ".jsonl":
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rows.append(json.loads(line))
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    examples = []
    for row_num, row in enumerate(rows, 1):
        try:
            score = float(row["score"])
            label = int(float(row["label"]))
        except (KeyError, ValueError) as exc:
            raise CorpusError(f"predictions row {row_num}: {exc}") from exc
        groups = frozenset(
            name for name in subgroups if row.get(name) not in (None, "") and float(row[name]) >= 0.5
        )
        examples.append(ScoredExample(score=score, label=label, subgroups=groups))
    return examples


def cmd_bias_report(args) -> int:
    subgroups = [s for s in args.subgroups.split(",") if s] if args.subgroups else list(IDENTITY_COLUMNS)
    examples = _predictions_to_examples(Path(args.predictions), subgroups)
    report = bias_report(examples, subgroups, p=args.p)
    out = Path(args.out)
    out.write_text(json.dumps(report.to_dict(), indent=2))
    _report_to_csv(report, out.with_suffix(".csv"))
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_templates(args) -> int:
    params, table, vocab_checksum, _ = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    if vocab.checksum() != vocab_checksum:
        raise CompatibilityError("vocabulary does not match the checkpoint")
    identities = (
        tuple(s for s in args.identities.split(",") if s)
        if args.identities
        else DEFAULT_IDENTITY_KEYWORDS
    )
    templates = builtin_templates()
    if args.templates_file:
        templates = templates + load_templates(args.templates_file)
    results = run_probe(params, table, vocab, identities, templates)
    payload = {identity: result.to_dict() for identity, result in results.items()}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2))
    for identity, result in results.items():
        print(
            f"{identity}: mean nontoxic={result.mean_nontoxic:.4f} "
            f"mean toxic={result.mean_toxic:.4f} misclassified={result.misclassified()}"
        )
    return 0


def _per_fold_metric(run_dir: Path, metric: str) -> list[float]:
    key = {"auc": "overall_auc", "f1": "f1"}[metric]
    values = []
    for path in sorted(run_dir.glob("run_fold*.json")):
        record = json.loads(path.read_text(encoding="utf-8"))
        value = record.get("metrics", {}).get(key)
        if value is None:
            raise CorpusError(f"{path}: metric {key!r} missing or undefined")
        values.append(float(value))
    if len(values) < 2:
        raise CorpusError(f"{run_dir}: need at least two folds with metric {key!r}")
    return values


def cmd_ks_compare(args) -> int:
    a = _per_fold_metric(Path(args.run_a), args.metric)
    b = _per_fold_metric(Path(args.run_b), args.metric)
    d, p_value = ks_two_sample(a, b)
    print(f"D={d} p={p_value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtltox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="tokenize a corpus, build the vocabulary, write dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--vocab-out", required=True)
    p.add_argument("--max-len", type=int, default=220)
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("propagate", help="fill identity scores for unannotated comments")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("train", help="K-fold training, optional alpha grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--config")
    p.add_argument("--alpha", help="a float, or grid:0.2,0.6,1.0 for a search")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a dataset with a checkpoint, emit a bias report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--subgroups", default=",".join(IDENTITY_COLUMNS))
    p.add_argument("--p", type=float, default=-5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bias-report", help="bias report from an offline predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--subgroups")
    p.add_argument("--p", type=float, default=-5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bias_report)

    p = sub.add_parser("templates", help="score the identity probe templates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--identities")
    p.add_argument("--templates-file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_templates)

    p = sub.add_parser("ks-compare", help="KS test on per-fold metrics of two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--metric", choices=["auc", "f1"], default="auc")
    p.set_defaults(func=cmd_ks_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, EmbeddingError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NetworkError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CheckpointError, CompatibilityError) as exc:
        print(f"compatibility error: {exc}", file=sys.stderr)
        return EXIT_COMPAT


if __name__ == "__main__":
    sys.exit(main())
