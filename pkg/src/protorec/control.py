"""Intervention engine: rescale or drop tags in the attention and measure the shift.

The default mode removes masked tags from the softmax support and lets the
remaining prototypes renormalize; post_scale instead rescales the aggregated
profile weights, which matches proportional slider semantics in the UI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Catalog, FoldInPair
from .losses import hellinger, tag_distribution_of
from .model import (
    INTERVENTION_MODES,
    MASK_SOFTMAX,
    PrototypeRecommender,
    recommend,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Intervention:
    """Per-tag multiplier vector; 1 leaves a tag untouched, 0 drops it."""

    multipliers: tuple[float, ...]
    mode: str = MASK_SOFTMAX

    def __post_init__(self) -> None:
        m = np.asarray(self.multipliers, dtype=np.float64)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("multipliers must be a non-empty vector")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("multipliers must be finite and non-negative")
        if not np.any(m > 0):
            raise ValueError("at least one tag must keep positive weight")
        if self.mode not in INTERVENTION_MODES:
            raise ValueError(f"unknown intervention mode {self.mode!r}")
        object.__setattr__(self, "multipliers", tuple(float(x) for x in m))

    @classmethod
    def identity(cls, n_tags: int, mode: str = MASK_SOFTMAX) -> "Intervention":
        return cls((1.0,) * n_tags, mode)

    @classmethod
    def drop_tag(cls, tag: int, n_tags: int, mode: str = MASK_SOFTMAX) -> "Intervention":
        m = [1.0] * n_tags
        m[tag] = 0.0
        return cls(tuple(m), mode)

    def compose(self, other: "Intervention") -> "Intervention":
        if self.mode != other.mode:
            raise ValueError("cannot compose interventions with different modes")
        m = np.asarray(self.multipliers) * np.asarray(other.multipliers)
        return Intervention(tuple(m), self.mode)

    @property
    def is_identity(self) -> bool:
        return all(x == 1.0 for x in self.multipliers)


@dataclass
class WhatIfResult:
    """Side-by-side outcome of one intervention on one user."""

    original: list[tuple[int, float]]
    modified: list[tuple[int, float]]
    tags_before: np.ndarray
    tags_after: np.ndarray
    hellinger_shift: float
    overlap: float
    k: int
    truncated: bool = False

    @property
    def original_indices(self) -> list[int]:
        return [i for i, _ in self.original]

    @property
    def modified_indices(self) -> list[int]:
        return [i for i, _ in self.modified]


def apply_intervention(
    model: PrototypeRecommender,
    catalog: Catalog,
    history_features: np.ndarray,
    intervention: Intervention,
    exclude,
    k: int,
) -> WhatIfResult:
    """Recommendations before/after an intervention, with tag-shift summary."""
    full_profile = model.attend(history_features)
    full_scores = model.decode(full_profile)
    full_rec = recommend(full_scores, exclude, k)
    if intervention.is_identity:
        mod_rec = full_rec
    else:
        mod_profile = model.attend(
            history_features,
            multipliers=np.asarray(intervention.multipliers),
            mode=intervention.mode,
        )
        mod_scores = model.decode(mod_profile)
        mod_rec = recommend(mod_scores, exclude, k)
    tags_before = tag_distribution_of(full_rec.indices, catalog)
    tags_after = tag_distribution_of(mod_rec.indices, catalog)
    shift = hellinger(tags_before, tags_after)
    n = len(full_rec.items)
    overlap = len(set(full_rec.indices) & set(mod_rec.indices)) / n if n else 1.0
    return WhatIfResult(
        full_rec.items,
        mod_rec.items,
        tags_before,
        tags_after,
        shift,
        overlap,
        n,
        full_rec.truncated,
    )


@dataclass
class ExperimentRuns:
    """Paired full/masked top-k lists per tag, ready for the delta table."""

    k: int
    full: dict[int, dict[str, list[int]]]
    modified: dict[int, dict[str, list[int]]]
    users_by_tag: dict[int, list[str]]
    skipped_tags: list[int] = field(default_factory=list)


def controllability_experiment(
    model: PrototypeRecommender,
    catalog: Catalog,
    pairs: list[FoldInPair],
    k: int,
    mode: str = MASK_SOFTMAX,
) -> ExperimentRuns:
    """For each tag, compare full recommendations against tag-masked ones.

    The full-model run is computed once per user and shared across tags.
    A tag's user set contains the users whose interactions carry that tag;
    tags with no such users are skipped.
    """
    feats = catalog.features
    full_by_user: dict[str, list[int]] = {}
    tagged_users: dict[int, list[str]] = {t: [] for t in range(catalog.n_tags)}
    for pair in pairs:
        history = feats[np.asarray(pair.fold_in)]
        scores = model.decode(model.attend(history))
        full_by_user[pair.user_id] = recommend(scores, pair.fold_in, k).indices
        owned = set()
        for idx in (*pair.fold_in, *pair.held_out):
            owned |= catalog.song_tags[idx]
        for t in owned:
            tagged_users[t].append(pair.user_id)

    by_pair = {p.user_id: p for p in pairs}
    runs = ExperimentRuns(k, {}, {}, {})
    for tag in range(catalog.n_tags):
        users = tagged_users[tag]
        if not users:
            log.warning("controllability_experiment: tag %d has no users, skipped", tag)
            runs.skipped_tags.append(tag)
            continue
        iv = Intervention.drop_tag(tag, catalog.n_tags, mode)
        mult = np.asarray(iv.multipliers)
        modified: dict[str, list[int]] = {}
        for uid in users:
            pair = by_pair[uid]
            history = feats[np.asarray(pair.fold_in)]
            profile = model.attend(history, multipliers=mult, mode=mode)
            scores = model.decode(profile)
            modified[uid] = recommend(scores, pair.fold_in, k).indices
        runs.users_by_tag[tag] = users
        runs.full[tag] = {uid: full_by_user[uid] for uid in users}
        runs.modified[tag] = modified
    return runs
