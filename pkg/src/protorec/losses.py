"""Training objectives: recommendation BCE, Hellinger controllability, prototype separability.

The controllability loss compares the user's renormalized tag mass with the
tag distribution of the model output. At training time the tag distribution
is a soft, score-weighted tag frequency so exact analytic gradients exist;
the hard top-k counting version is used for all reported metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Catalog
from .model import PrototypeRecommender, top_k_indices
from .numerics import softmax_rows

LOG_CLAMP = 1e-12
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0  # prototype separability
    lambda2: float = 0.005  # controllability

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass
class LossBreakdown:
    total: float
    recsys: float
    prototype_sep: float
    controllability: float


def loss_recsys(scores: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy over the catalog, logs clamped at 1e-12."""
    scores = np.asarray(scores, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if scores.shape != target.shape:
        raise ValueError("scores and target must have the same shape")
    if np.any((target != 0.0) & (target != 1.0)):
        raise ValueError("target entries must be 0 or 1")
    if np.any(scores < 0.0) or np.any(scores > 1.0):
        raise ValueError("scores must lie in [0, 1]")
    log_p = np.log(np.maximum(scores, LOG_CLAMP))
    log_q = np.log(np.maximum(1.0 - scores, LOG_CLAMP))
    return float(-(target * log_p + (1.0 - target) * log_q).mean())


def hellinger(p: np.ndarray, q: np.ndarray) -> float:
    """Hellinger distance between two distributions; bounded in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise ValueError("distributions must be non-negative")
    return float(_INV_SQRT2 * np.sqrt(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))


# the controllability objective is the Hellinger distance itself
loss_controllability = hellinger


def tag_distribution_of(indices, catalog: Catalog) -> np.ndarray:
    """Tag distribution of a song list: count tag occurrences, normalize."""
    counts = catalog.tag_matrix()[np.asarray(indices, dtype=np.int64)].sum(axis=0)
    total = counts.sum()
    if total <= 0:
        raise ValueError("song list carries no tags")
    return counts / total


def tag_count(scores: np.ndarray, catalog: Catalog, top_k: int) -> np.ndarray:
    """Hard tag distribution of the top-k scored songs (evaluation-time T)."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    idx = top_k_indices(scores, min(top_k, catalog.n_songs))
    return tag_distribution_of(idx, catalog)


def soft_tag_distribution(scores: np.ndarray, tag_matrix: np.ndarray):
    """Score-weighted tag frequency (training-time T) and its normalizer."""
    counts_per_song = tag_matrix.sum(axis=1)
    denom = float(counts_per_song @ scores)
    t = (tag_matrix.T @ scores) / denom
    return t, denom, counts_per_song


def _hellinger_partials(p: np.ndarray, t: np.ndarray):
    """dHell/dp and dHell/dt; zero at structural-zero coordinates and at p == t."""
    sp, st = np.sqrt(p), np.sqrt(t)
    g = float(np.sum((sp - st) ** 2))
    if g <= 0.0:
        z = np.zeros_like(p)
        return z, z.copy()
    scale = _INV_SQRT2 / (2.0 * np.sqrt(g))
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = np.where(p > 0.0, scale * (sp - st) / sp, 0.0)
        dt = np.where(t > 0.0, scale * (st - sp) / st, 0.0)
    return dp, dt


def loss_prototype_sep(
    model: PrototypeRecommender, *, compute_grads: bool = False, weight: float = 1.0
) -> float:
    """Cross-entropy pushing each transformed prototype to classify as its own tag.

    One shared linear classifier over the per-head value space; averaged over
    tags and heads.
    """
    store = model.store
    w_phi = store["sep.w"]
    b_phi = store["sep.b"]
    k = model.config.n_tags
    n = k * model.config.n_heads
    p = model.prototypes
    total = 0.0
    for h, v in enumerate(model.head_values()):
        logits = v @ w_phi + b_phi
        probs = softmax_rows(logits)
        diag = np.diag(probs)
        total += float(-np.log(np.maximum(diag, LOG_CLAMP)).sum())
        if compute_grads:
            dlogits = probs.copy()
            dlogits[np.diag_indices(k)] -= 1.0
            dlogits *= weight / n
            gw = store.grad("sep.w")
            gw += v.T @ dlogits
            gb = store.grad("sep.b")
            gb += dlogits.sum(axis=0)
            dv = dlogits @ w_phi.T
            gp = store.grad(f"attn.h{h}.p")
            gp += model._chunk(p, h).T @ dv
            if "proto" in store:
                c = model.config.head_dim
                store.grad("proto")[:, h * c : (h + 1) * c] += dv @ store[f"attn.h{h}.p"].T
    return total / n


def loss_total(
    model: PrototypeRecommender,
    batch,
    weights: LossWeights,
    catalog: Catalog,
    *,
    compute_grads: bool = True,
    soft_t: bool = True,
    t_topk: int = 100,
) -> LossBreakdown:
    """Batch objective: mean BCE + lambda1 * separability + lambda2 * mean Hellinger.

    batch is a list of (history_features, target) pairs. Gradients accumulate
    into the model's parameter store in batch order (deterministic reduction).
    With soft_t=False the hard top-k tag distribution is used and treated as
    constant with respect to the scores.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    b = len(batch)
    m = catalog.tag_matrix()
    n_songs = model.config.n_songs
    rec_sum = 0.0
    ctrl_sum = 0.0
    for history, target in batch:
        target = np.asarray(target, dtype=np.float64)
        cache = model.forward_user(history)
        scores = cache.scores
        rec_sum += loss_recsys(scores, target)

        w_bar = cache.profile.weights
        w_sum = float(w_bar.sum())
        p = w_bar / w_sum
        if soft_t:
            t, denom, counts = soft_tag_distribution(scores, m)
        else:
            t = tag_count(scores, catalog, t_topk)
        ctrl_sum += hellinger(p, t)

        if compute_grads:
            d_logits = (scores - target) / (n_songs * b)
            dp, dt = _hellinger_partials(p, t)
            if soft_t and weights.lambda2 > 0.0:
                dy = (m @ dt - float(dt @ t) * counts) / denom
                d_logits = d_logits + (weights.lambda2 / b) * dy * scores * (1.0 - scores)
            d_head = None
            if weights.lambda2 > 0.0:
                per_head = (weights.lambda2 / (b * w_sum * model.config.n_heads)) * dp
                d_head = np.tile(per_head, (model.config.n_heads, 1))
            model.backward_user(cache, d_logits, d_head)

    sep = loss_prototype_sep(model, compute_grads=compute_grads, weight=weights.lambda1)
    rec = rec_sum / b
    ctrl = ctrl_sum / b
    total = rec + weights.lambda1 * sep + weights.lambda2 * ctrl
    return LossBreakdown(total, rec, sep, ctrl)
