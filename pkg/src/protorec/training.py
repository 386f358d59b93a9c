"""Mini-batch training with denoising input masking and NDCG-based early stopping.

Determinism contract: (seed, data, config) fully determine every number in
the canonical train log and the checkpoint bytes. Wall-clock timings are kept
out of the canonical log and written to a separate sidecar.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Catalog, FoldInPair, InteractionSet
from .losses import LossBreakdown, LossWeights, loss_total
from .metrics import ndcg_at_k, recall_at_k
from .model import PrototypeRecommender, top_k_indices
from .numerics import RngStream, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    input_drop_fraction: float = 0.2
    early_stop_patience: int = 10
    eval_every: int = 1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    soft_t: bool = True  # differentiable tag distribution in the loss
    t_topk: int = 100  # top-k horizon when soft_t is off

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.input_drop_fraction < 1.0:
            raise ValueError("input_drop_fraction must be in [0, 1)")
        if self.epochs < 1 or self.eval_every < 1:
            raise ValueError("epochs and eval_every must be >= 1")
        if self.t_topk < 1:
            raise ValueError("t_topk must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    recsys: float
    prototype_sep: float
    controllability: float
    val_ndcg100: float | None
    wall_seconds: float

    def canonical(self) -> dict:
        # wall time excluded: canonical records must be identical across
        # equal-seed runs
        return {
            "epoch": self.epoch,
            "recsys": self.recsys,
            "prototype_sep": self.prototype_sep,
            "controllability": self.controllability,
            "val_ndcg100": self.val_ndcg100,
        }


class TrainLog:
    """Per-epoch loss components and validation metric, serialized as JSONL."""

    def __init__(self) -> None:
        self.records: list[EpochRecord] = []

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def canonical_lines(self) -> list[str]:
        return [json.dumps(r.canonical(), sort_keys=True) for r in self.records]

    def save(self, path, timings_path=None) -> None:
        Path(path).write_text("\n".join(self.canonical_lines()) + "\n", encoding="utf-8")
        if timings_path is not None:
            lines = [f"{r.epoch}\t{r.wall_seconds:.3f}" for r in self.records]
            Path(timings_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class TrainResult:
    log: TrainLog
    best_epoch: int | None
    best_val_ndcg: float | None
    aborted: bool = False


def _drop_history(indices: list[int], fraction: float, rng: RngStream) -> list[int]:
    """Denoising mask over a history; at least one song always remains."""
    s = len(indices)
    n_drop = min(int(fraction * s), s - 1)
    if n_drop <= 0:
        return indices
    dropped = set(int(i) for i in rng.choice(s, size=n_drop, replace=False))
    return [song for j, song in enumerate(indices) if j not in dropped]


def train(
    model: PrototypeRecommender,
    catalog: Catalog,
    train_set: InteractionSet,
    val_pairs: list[FoldInPair],
    config: TrainConfig,
    out_dir=None,
) -> TrainResult:
    """Shuffled user batches, Adam updates, best-validation checkpoint retained.

    Each user's attention input drops input_drop_fraction of the history while
    the BCE target stays the full interaction vector. Early stopping fires
    after early_stop_patience evaluations without NDCG@100 improvement and the
    model is restored to the best recorded state.
    """
    rng = RngStream(config.seed, "train")
    shuffle_rng = rng.spawn("shuffle")
    drop_rng = rng.spawn("denoise")
    users = train_set.users
    if not users:
        raise ValueError("empty train split")
    feats = catalog.features
    n_songs = catalog.n_songs

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    train_log = TrainLog()
    best_state = None
    best_val = -np.inf
    best_epoch: int | None = None
    stale_evals = 0
    aborted = False

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(users))
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch = []
            for ui in chunk:
                uid, songs = users[int(ui)]
                idx = sorted(songs)
                kept = _drop_history(idx, config.input_drop_fraction, drop_rng)
                target = np.zeros(n_songs)
                target[idx] = 1.0
                batch.append((feats[np.asarray(kept)], target))
            bd = loss_total(
                model,
                batch,
                config.loss_weights,
                catalog,
                compute_grads=True,
                soft_t=config.soft_t,
                t_topk=config.t_topk,
            )
            if not np.isfinite(bd.total):
                log.error("loss diverged at epoch %d; aborting with last good state", epoch)
                aborted = True
                break
            adam_step(model.store, lr=config.lr)
            sums += (bd.recsys, bd.prototype_sep, bd.controllability)
            n_batches += 1
        if aborted:
            break

        val = None
        if epoch % config.eval_every == 0:
            val = evaluate_model(model, catalog, val_pairs, recall_ks=(), ndcg_ks=(100,))[
                "ndcg@100"
            ]
            if val > best_val:
                best_val = val
                best_epoch = epoch
                best_state = model.store.state_dict()
                stale_evals = 0
            else:
                stale_evals += 1

        record = EpochRecord(
            epoch,
            float(sums[0] / max(n_batches, 1)),
            float(sums[1] / max(n_batches, 1)),
            float(sums[2] / max(n_batches, 1)),
            val,
            time.perf_counter() - t0,
        )
        train_log.append(record)
        if out is not None:
            train_log.save(out / "train_log.jsonl", out / "timings.txt")
        if stale_evals >= config.early_stop_patience:
            log.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
            break

    if best_state is not None:
        model.store.load_values(best_state)
    if out is not None:
        model.save(out / "best.ckpt")
    return TrainResult(
        train_log,
        best_epoch,
        float(best_val) if best_state is not None else None,
        aborted,
    )


def evaluate_ranking(
    score_fn,
    pairs: list[FoldInPair],
    recall_ks=(20, 50),
    ndcg_ks=(100,),
) -> dict:
    """Mean Recall@k / NDCG@k of score_fn(pair) against held-out items.

    Fold-in songs are excluded from candidacy. Users with an empty fold-in or
    held-out set are skipped and counted.
    """
    ks = [*recall_ks, *ndcg_ks]
    if not ks:
        raise ValueError("need at least one k")
    max_k = max(ks)
    sums = {f"recall@{k}": 0.0 for k in recall_ks}
    sums.update({f"ndcg@{k}": 0.0 for k in ndcg_ks})
    n_users = 0
    n_skipped = 0
    for pair in pairs:
        if not pair.fold_in or not pair.held_out:
            n_skipped += 1
            continue
        scores = score_fn(pair)
        ranked = top_k_indices(scores, max_k, exclude=pair.fold_in)
        held = set(pair.held_out)
        for k in recall_ks:
            sums[f"recall@{k}"] += recall_at_k(ranked, held, min(k, len(ranked)))
        for k in ndcg_ks:
            sums[f"ndcg@{k}"] += ndcg_at_k(ranked, held, min(k, len(ranked)))
        n_users += 1
    if n_users == 0:
        raise ValueError("no evaluable users")
    result = {name: value / n_users for name, value in sums.items()}
    result["n_users"] = n_users
    result["n_skipped"] = n_skipped
    return result


def model_score_fn(model: PrototypeRecommender, catalog: Catalog):
    feats = catalog.features

    def score(pair: FoldInPair) -> np.ndarray:
        return model.decode(model.attend(feats[np.asarray(pair.fold_in)]))

    return score


def evaluate_model(
    model: PrototypeRecommender,
    catalog: Catalog,
    pairs: list[FoldInPair],
    recall_ks=(20, 50),
    ndcg_ks=(100,),
) -> dict:
    return evaluate_ranking(model_score_fn(model, catalog), pairs, recall_ks, ndcg_ks)
