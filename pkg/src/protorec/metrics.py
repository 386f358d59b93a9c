"""Ranking metrics, tag-wise controllability metrics, and the popularity baseline.

Tag-wise NDCG is normalized by the all-tag ideal (the tag present at every
rank) so values are comparable across k and bounded by 1; the literal
unnormalized variant stays available behind ``normalized=False``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import InteractionSet

log = logging.getLogger(__name__)


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


def recall_at_k(ranked, relevant, k: int) -> float:
    """|top-k hits| / min(k, |relevant|)."""
    if k > len(ranked):
        raise ValueError("k exceeds the ranked list length")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    hits = len(set(ranked[:k]) & set(relevant))
    return hits / min(k, len(relevant))


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-relevance DCG over the top-k, normalized by the ideal DCG."""
    if k > len(ranked):
        raise ValueError("k exceeds the ranked list length")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    relevant = set(relevant)
    disc = _discounts(k)
    dcg = sum(disc[i] for i, song in enumerate(ranked[:k]) if song in relevant)
    ideal = _discounts(min(k, len(relevant))).sum()
    return float(dcg / ideal)


def ideal_tag_dcg(k: int) -> float:
    """DCG of a list carrying the tag at every rank."""
    return float(_discounts(k).sum())


def dcg_tag(ranked, tag: int, k: int, song_tags) -> float:
    """Sum of 1/log2(i+1) over top-k ranks whose song carries the tag."""
    disc = _discounts(k)
    return float(sum(disc[i] for i, song in enumerate(ranked[:k]) if tag in song_tags[song]))


def ndcg_tag(recs_by_user, tag: int, k: int, song_tags, normalized: bool = True) -> float:
    """Mean per-user tag DCG over the given users.

    Callers are responsible for excluding users that score zero in both the
    full and the modified run (they contribute nothing to the tag).
    """
    if not recs_by_user:
        raise ValueError("ndcg_tag needs at least one user")
    ideal = ideal_tag_dcg(k) if normalized else 1.0
    vals = [dcg_tag(ranked, tag, k, song_tags) / ideal for ranked in recs_by_user.values()]
    return float(np.mean(vals))


@dataclass(frozen=True)
class TagMetricRow:
    tag: int
    ndcg_full: float
    ndcg_masked: float
    delta: float
    pct_delta: float | None
    n_users: int


def pct_delta(delta: float, ndcg_full: float) -> float | None:
    """Relative drop in percent; undefined when the full-run NDCG is zero."""
    if ndcg_full <= 0.0:
        return None
    return 100.0 * delta / ndcg_full


def implied_full_from_pct(delta: float, pct: float) -> float:
    """Invert the percent formula: the full-run NDCG implied by (delta, pct)."""
    return 100.0 * delta / pct


def delta_table(
    full_runs: dict,
    modified_runs: dict,
    song_tags,
    k: int,
    *,
    normalized: bool = True,
    weighted: bool = False,
):
    """Per-tag NDCG drop between full and tag-masked runs.

    full_runs / modified_runs map tag -> {user -> ranked list}; both runs of
    a tag must cover the same users. Users scoring zero tag-DCG in both runs
    are filtered out; tags with no remaining users are dropped with a warning.
    Returns (rows, macro average of delta, dropped tag ids).
    """
    if set(full_runs) != set(modified_runs):
        raise ValueError("full and modified runs must cover the same tags")
    rows: list[TagMetricRow] = []
    dropped: list[int] = []
    for tag in sorted(full_runs):
        full = full_runs[tag]
        mod = modified_runs[tag]
        if set(full) != set(mod):
            raise ValueError(f"tag {tag}: full and modified runs cover different users")
        kept_f, kept_m = {}, {}
        for user in sorted(full):
            df = dcg_tag(full[user], tag, k, song_tags)
            dm = dcg_tag(mod[user], tag, k, song_tags)
            if df == 0.0 and dm == 0.0:
                continue
            kept_f[user] = full[user]
            kept_m[user] = mod[user]
        if not kept_f:
            log.warning("delta_table: tag %d has no contributing users, dropped", tag)
            dropped.append(tag)
            continue
        nf = ndcg_tag(kept_f, tag, k, song_tags, normalized)
        nm = ndcg_tag(kept_m, tag, k, song_tags, normalized)
        delta = nf - nm
        rows.append(TagMetricRow(tag, nf, nm, delta, pct_delta(delta, nf), len(kept_f)))
    if rows:
        if weighted:
            total = sum(r.n_users for r in rows)
            macro = float(sum(r.delta * r.n_users for r in rows) / total)
        else:
            macro = float(np.mean([r.delta for r in rows]))
    else:
        macro = 0.0
    return rows, macro, dropped


def popularity_baseline(interactions: InteractionSet, n_songs: int) -> np.ndarray:
    """Global listener counts as a user-independent score vector."""
    if not interactions.users:
        raise ValueError("popularity baseline needs a non-empty train split")
    scores = np.zeros(n_songs, dtype=np.float64)
    for _, songs in interactions.users:
        scores[list(songs)] += 1.0
    return scores


def format_float(x: float) -> str:
    return f"{x:.12g}"


def write_delta_table(path, rows, tag_vocab, macro: float, k: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tag_id\ttag_name\tcategory\tndcg_full\tndcg_masked\tdelta\tpct_delta\tn_users\n")
        for r in rows:
            tag = tag_vocab[r.tag]
            pct = format_float(r.pct_delta) if r.pct_delta is not None else "NA"
            fh.write(
                f"{r.tag}\t{tag.name}\t{tag.category}\t{format_float(r.ndcg_full)}\t"
                f"{format_float(r.ndcg_masked)}\t{format_float(r.delta)}\t{pct}\t{r.n_users}\n"
            )
        fh.write(f"# macro_delta@{k}\t{format_float(macro)}\n")


def write_bar_data(path, rows, tag_vocab, k: int) -> None:
    """Per-tag bar-chart data: the NDCG drop caused by masking each tag."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"tag_name\tcategory\tdelta_at_{k}\n")
        for r in rows:
            tag = tag_vocab[r.tag]
            fh.write(f"{tag.name}\t{tag.category}\t{format_float(r.delta)}\n")
