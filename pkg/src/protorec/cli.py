"""Command-line pipeline: gen-synth, ingest, train, eval, control-eval, serve."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_pipeline_config
from .control import controllability_experiment
from .data import (
    DataError,
    generate_synthetic,
    load_dataset,
    make_foldin,
    save_dataset,
    select_anchor_songs,
)
from .metrics import (
    delta_table,
    format_float,
    popularity_baseline,
    write_bar_data,
    write_delta_table,
)
from .model import PrototypeBank, PrototypeRecommender
from .numerics import RngStream
from .training import evaluate_model, evaluate_ranking, train


class CliError(RuntimeError):
    pass


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:8]


def _load_model(path) -> PrototypeRecommender:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"checkpoint not found: {p}")
    return PrototypeRecommender.load(p)


def _split_pairs(bundle, split: str, cfg):
    if split not in bundle.splits:
        raise CliError(f"dataset has no {split!r} split")
    return make_foldin(bundle.splits[split], cfg.fold_in_fraction, cfg.seed)


def cmd_gen_synth(args) -> int:
    cfg = load_pipeline_config(args.config)
    dataset = generate_synthetic(cfg.synth)
    anchors = select_anchor_songs(dataset.catalog, dataset.train)
    save_dataset(
        args.out,
        dataset.catalog,
        dataset.splits,
        anchors,
        truth=dataset.truth,
        meta={"command": "gen-synth", "seed": cfg.seed},
    )
    print(
        f"gen-synth: {dataset.catalog.n_songs} songs, {dataset.catalog.n_tags} tags, "
        f"{len(dataset.train)}/{len(dataset.validation)}/{len(dataset.test)} users -> {args.out}"
    )
    return 0


def cmd_ingest(args) -> int:
    from .data import ingest

    cfg = load_pipeline_config(args.config)
    catalog, train_set, val_set, test_set = ingest(
        args.interactions, args.features, args.tags, args.vocab, cfg.ingest
    )
    anchors = select_anchor_songs(catalog, train_set)
    splits = {"train": train_set, "validation": val_set, "test": test_set}
    save_dataset(args.out, catalog, splits, anchors, meta={"command": "ingest", "seed": cfg.seed})
    print(
        f"ingest: retained {catalog.n_songs} songs, "
        f"{len(train_set)}/{len(val_set)}/{len(test_set)} users -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = load_pipeline_config(args.config)
    bundle = load_dataset(args.data)
    catalog = bundle.catalog
    model = PrototypeRecommender(
        cfg.model_config(catalog),
        PrototypeBank.from_catalog(catalog, bundle.anchor_songs, cfg.frozen_prototypes),
        rng=RngStream(cfg.seed, "model"),
    )
    val_pairs = _split_pairs(bundle, "validation", cfg)
    result = train(model, catalog, bundle.splits["train"], val_pairs, cfg.train, out_dir=args.out)
    if result.aborted:
        print("train: aborted on divergence; last good checkpoint written", file=sys.stderr)
        return 1
    best = "n/a" if result.best_val_ndcg is None else format_float(result.best_val_ndcg)
    print(
        f"train: {len(result.log.records)} epochs, best val ndcg@100 {best} "
        f"(epoch {result.best_epoch}) -> {Path(args.out) / 'best.ckpt'}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = load_pipeline_config(args.config)
    bundle = load_dataset(args.data)
    model = _load_model(args.checkpoint)
    pairs = _split_pairs(bundle, args.split, cfg)
    metrics = evaluate_model(model, bundle.catalog, pairs)
    pop = popularity_baseline(bundle.splits["train"], bundle.catalog.n_songs)
    pop_metrics = evaluate_ranking(lambda pair: pop, pairs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = _file_digest(args.checkpoint)
    stem = f"metrics_{args.split}_k20-50-100_{digest}"
    table = out / f"{stem}.tsv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("metric\tmodel\tpopularity\n")
        for name in ("recall@20", "recall@50", "ndcg@100"):
            fh.write(f"{name}\t{format_float(metrics[name])}\t{format_float(pop_metrics[name])}\n")
    summary = {
        "split": args.split,
        "checkpoint_sha8": digest,
        "model": {k: metrics[k] for k in ("recall@20", "recall@50", "ndcg@100")},
        "popularity": {k: pop_metrics[k] for k in ("recall@20", "recall@50", "ndcg@100")},
        "n_users": metrics["n_users"],
        "n_skipped": metrics["n_skipped"],
    }
    (out / f"{stem}.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    for name in ("recall@20", "recall@50", "ndcg@100"):
        print(f"eval[{args.split}] {name}: model {format_float(metrics[name])} "
              f"popularity {format_float(pop_metrics[name])}")
    return 0


def cmd_control_eval(args) -> int:
    cfg = load_pipeline_config(args.config)
    bundle = load_dataset(args.data)
    model = _load_model(args.checkpoint)
    pairs = _split_pairs(bundle, args.split, cfg)
    k = args.k if args.k is not None else cfg.control_k
    runs = controllability_experiment(model, bundle.catalog, pairs, k)
    rows, macro, dropped = delta_table(
        runs.full, runs.modified, bundle.catalog.song_tags, k
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = _file_digest(args.checkpoint)
    write_delta_table(
        out / f"delta_table_{args.split}_k{k}_{digest}.tsv",
        rows,
        bundle.catalog.tag_vocab,
        macro,
        k,
    )
    write_bar_data(out / f"bar_data_{args.split}_k{k}_{digest}.tsv", rows, bundle.catalog.tag_vocab, k)
    summary = {
        "split": args.split,
        "k": k,
        "checkpoint_sha8": digest,
        "macro_delta": macro,
        "n_tags": len(rows),
        "dropped_tags": dropped,
        "positive_fraction": (
            sum(1 for r in rows if r.delta > 0) / len(rows) if rows else 0.0
        ),
    }
    (out / f"control_summary_{args.split}_k{k}_{digest}.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2)
    )
    print(f"control-eval[{args.split}] macro delta@{k}: {format_float(macro)} "
          f"({summary['positive_fraction']:.0%} of tags positive)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import RecommenderService, SessionStore, create_app

    cfg = load_pipeline_config(args.config)
    bundle = load_dataset(args.data)
    model = _load_model(args.checkpoint)
    pairs = _split_pairs(bundle, args.split, cfg)
    sessions = SessionStore(bundle.catalog.n_tags, args.session_log)
    service = RecommenderService(
        model, bundle.catalog, pairs, sessions, clip_urls=bundle.clip_urls
    )
    app = create_app(service, ui_dir=args.ui_dir)
    print(f"serving {len(pairs)} users on port {args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protorec",
        description="Controllable prototype-attention recommender pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic planted-structure corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("ingest", help="ingest raw interaction/tag/feature files")
    p.add_argument("--config", required=True)
    p.add_argument("--interactions", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--tags", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ranking metrics on a held-out split")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("control-eval", help="per-tag masking experiment and delta table")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_control_eval)

    p = sub.add_parser("serve", help="HTTP steering service over a fixed checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--session-log", default=None)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
