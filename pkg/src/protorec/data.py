"""Corpus ingestion, preprocessing filters, user splits, fold-in pairs, synthetic data.

File formats (all plain text, tab-separated):
  interactions  one event per line, ``<user_id>\\t<song_id>``; duplicates collapse
  tag vocab     ``<tag_name>\\t<category>``, one line per tag
  tags          ``<song_id>\\t<tag_name>[,<tag_name>...]``
  features      header ``D=<int>``, then ``<song_id>\\t<f1> <f2> ... <fD>``
  prototypes    ``<tag_name>\\t<anchor_song_id>[\\t<clip_url>]``

Feature values are stored as 32-bit floats on disk and promoted to float64
in memory so gradient checks stay reliable.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import RngStream

log = logging.getLogger(__name__)

TAG_CATEGORIES = ("era", "genre", "mood", "instrumentation")


class DataError(ValueError):
    """Raised for malformed corpus files or inconsistent corpus content."""


@dataclass(frozen=True)
class Tag:
    name: str
    category: str


class Catalog:
    """Immutable song catalog: ids, feature matrix, per-song tag sets, vocabulary."""

    def __init__(
        self,
        songs: list[str],
        features: np.ndarray,
        song_tags: list[frozenset[int]],
        tag_vocab: list[Tag],
    ) -> None:
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != len(songs):
            raise DataError("feature matrix must be L x D aligned with the song list")
        if len(song_tags) != len(songs):
            raise DataError("song_tags must align with the song list")
        if len(set(songs)) != len(songs):
            raise DataError("duplicate song ids in catalog")
        if not np.all(np.isfinite(features)):
            raise DataError("non-finite feature values")
        k = len(tag_vocab)
        for song, tags in zip(songs, song_tags):
            if not tags:
                raise DataError(f"song {song!r} carries no vocabulary tag")
            if any(t < 0 or t >= k for t in tags):
                raise DataError(f"song {song!r} has a tag id outside the vocabulary")
        self.songs = list(songs)
        self.features = features
        self.song_tags = [frozenset(int(t) for t in tags) for tags in song_tags]
        self.tag_vocab = list(tag_vocab)
        self._index = {song: i for i, song in enumerate(self.songs)}
        m = np.zeros((len(songs), k), dtype=np.float64)
        for i, tags in enumerate(self.song_tags):
            for t in tags:
                m[i, t] = 1.0
        self._tag_matrix = m

    @property
    def n_songs(self) -> int:
        return len(self.songs)

    @property
    def n_tags(self) -> int:
        return len(self.tag_vocab)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def song_index(self, song_id: str) -> int:
        try:
            return self._index[song_id]
        except KeyError:
            raise KeyError(f"unknown song id {song_id!r}") from None

    def tag_matrix(self) -> np.ndarray:
        """Binary song-by-tag matrix (L x K, float64)."""
        return self._tag_matrix

    def tags_of(self, song_id: str) -> frozenset[int]:
        return self.song_tags[self.song_index(song_id)]

    def feature_of(self, song_id: str) -> np.ndarray:
        return self.features[self.song_index(song_id)]


@dataclass
class InteractionSet:
    """Per-user song-index sets for one split; user ids unique, kept sorted."""

    users: list[tuple[str, frozenset[int]]]
    split_label: str

    def __post_init__(self) -> None:
        self.users = sorted(((u, frozenset(s)) for u, s in self.users), key=lambda p: p[0])
        ids = [u for u, _ in self.users]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate user ids in split {self.split_label!r}")

    def user_ids(self) -> list[str]:
        return [u for u, _ in self.users]

    def as_dict(self) -> dict[str, frozenset[int]]:
        return dict(self.users)

    def __len__(self) -> int:
        return len(self.users)


@dataclass(frozen=True)
class FoldInPair:
    """A user's history split into model input (fold-in) and ranking targets."""

    user_id: str
    fold_in: tuple[int, ...]
    held_out: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.fold_in or not self.held_out:
            raise DataError(f"user {self.user_id!r}: fold-in and held-out must be non-empty")
        if set(self.fold_in) & set(self.held_out):
            raise DataError(f"user {self.user_id!r}: fold-in and held-out overlap")


# ---------------------------------------------------------------------------
# file parsing / writing
# ---------------------------------------------------------------------------

def read_interactions(path) -> dict[str, set[str]]:
    histories: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected '<user_id>\\t<song_id>'")
            histories.setdefault(parts[0], set()).add(parts[1])
    return histories


def write_interactions(path, histories: dict[str, set[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(histories):
            for song in sorted(histories[user]):
                fh.write(f"{user}\t{song}\n")


def read_tag_vocab(path) -> list[Tag]:
    vocab: list[Tag] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected '<tag_name>\\t<category>'")
            name, category = parts
            if category not in TAG_CATEGORIES:
                raise DataError(f"{path}:{n}: unknown tag category {category!r}")
            if name in seen:
                raise DataError(f"{path}:{n}: duplicate tag {name!r}")
            seen.add(name)
            vocab.append(Tag(name, category))
    if not vocab:
        raise DataError(f"{path}: empty tag vocabulary")
    return vocab


def read_tags(path, vocab: list[Tag]) -> dict[str, frozenset[int]]:
    """Song to tag-id sets; tag names outside the vocabulary are ignored."""
    by_name = {tag.name: i for i, tag in enumerate(vocab)}
    tags: dict[str, frozenset[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected '<song_id>\\t<tags>'")
            song, names = parts
            ids = frozenset(by_name[t] for t in names.split(",") if t in by_name)
            if song in tags:
                ids = tags[song] | ids
            tags[song] = ids
    return tags


def read_features(path) -> tuple[dict[str, np.ndarray], int]:
    """Feature vectors keyed by song id (float32 storage), plus the dimension D."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("D="):
            raise DataError(f"{path}: missing 'D=<int>' header")
        try:
            dim = int(header[2:])
        except ValueError:
            raise DataError(f"{path}: bad feature dimension {header!r}") from None
        feats: dict[str, np.ndarray] = {}
        for n, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected '<song_id>\\t<values>'")
            song, values = parts
            vec = np.array(values.split(" "), dtype=np.float32)
            if vec.shape != (dim,):
                raise DataError(
                    f"{path}:{n}: feature dimension mismatch for song {song!r} "
                    f"(got {vec.size}, header says {dim})"
                )
            feats[song] = vec
    return feats, dim


def write_features(path, songs: list[str], matrix: np.ndarray) -> None:
    m32 = np.asarray(matrix, dtype=np.float32)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"D={m32.shape[1]}\n")
        for song, row in zip(songs, m32):
            fh.write(song + "\t" + " ".join(f"{v:.9g}" for v in row) + "\n")


def write_tags(path, songs: list[str], song_tags: list[frozenset[int]], vocab: list[Tag]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for song, ids in zip(songs, song_tags):
            names = ",".join(vocab[i].name for i in sorted(ids))
            fh.write(f"{song}\t{names}\n")


def write_tag_vocab(path, vocab: list[Tag]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tag in vocab:
            fh.write(f"{tag.name}\t{tag.category}\n")


def read_prototype_manifest(path) -> list[tuple[str, str, str | None]]:
    rows: list[tuple[str, str, str | None]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{n}: expected '<tag_name>\\t<anchor_song_id>[\\t<url>]'")
            rows.append((parts[0], parts[1], parts[2] if len(parts) == 3 else None))
    return rows


def write_prototype_manifest(path, vocab, anchor_songs, clip_urls=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, (tag, song) in enumerate(zip(vocab, anchor_songs)):
            url = clip_urls[i] if clip_urls else None
            fh.write(f"{tag.name}\t{song}" + (f"\t{url}" if url else "") + "\n")


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def filter_interactions(
    histories: dict[str, set[str]],
    min_user_interactions: int,
    min_song_listeners: int,
) -> dict[str, set[str]]:
    """Support filtering iterated to a fixed point.

    Users below the interaction threshold and songs below the listener
    threshold invalidate each other, so both filters are re-applied until
    nothing changes.
    """
    users = {u: set(s) for u, s in histories.items()}
    while True:
        changed = False
        for u in [u for u, s in users.items() if len(s) < min_user_interactions]:
            del users[u]
            changed = True
        counts: Counter[str] = Counter()
        for songs in users.values():
            counts.update(songs)
        dead = {song for song, c in counts.items() if c < min_song_listeners}
        if dead:
            for songs in users.values():
                songs -= dead
            changed = True
        if not changed:
            return users


def split_users(
    user_songs: dict[str, frozenset[int]],
    train_fraction: float,
    validation_fraction: float,
    seed: int,
) -> tuple[InteractionSet, InteractionSet, InteractionSet]:
    """Disjoint-by-user splits (strong generalization), seeded shuffle."""
    if train_fraction <= 0 or validation_fraction < 0:
        raise DataError("split fractions must be positive")
    if train_fraction + validation_fraction >= 1.0:
        raise DataError("train + validation fractions must leave room for the test split")
    uids = sorted(user_songs)
    perm = RngStream(seed, "split").permutation(len(uids))
    n_train = int(len(uids) * train_fraction)
    n_val = int(len(uids) * validation_fraction)
    shuffled = [uids[i] for i in perm]
    groups = (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )
    labels = ("train", "validation", "test")
    return tuple(
        InteractionSet([(u, user_songs[u]) for u in grp], label)
        for grp, label in zip(groups, labels)
    )


@dataclass(frozen=True)
class IngestConfig:
    min_user_interactions: int = 20
    min_song_listeners: int = 200
    train_fraction: float = 0.82
    validation_fraction: float = 0.09
    seed: int = 0


def ingest(
    interactions_path,
    features_path,
    tags_path,
    vocab_path,
    config: IngestConfig,
) -> tuple[Catalog, InteractionSet, InteractionSet, InteractionSet]:
    """Parse raw files, filter to a fixed point, and split users.

    Songs without any vocabulary tag are dropped before support filtering
    (they cannot be expressed by prototypes). A retained song without a
    feature vector is a hard error.
    """
    vocab = read_tag_vocab(vocab_path)
    tags = read_tags(tags_path, vocab)
    histories = read_interactions(interactions_path)
    tagged = {song for song, ids in tags.items() if ids}
    histories = {u: s & tagged for u, s in histories.items()}
    retained = filter_interactions(
        histories, config.min_user_interactions, config.min_song_listeners
    )
    songs = sorted(set().union(*retained.values())) if retained else []
    if not songs:
        raise DataError("no songs survive preprocessing")
    feats, dim = read_features(features_path)
    for song in songs:
        if song not in feats:
            raise DataError(f"missing feature vector for retained song {song!r}")
    matrix = np.stack([feats[s] for s in songs]).astype(np.float64)
    catalog = Catalog(songs, matrix, [tags[s] for s in songs], vocab)
    index = {s: i for i, s in enumerate(songs)}
    user_songs = {u: frozenset(index[s] for s in ss) for u, ss in retained.items()}
    train, val, test = split_users(
        user_songs, config.train_fraction, config.validation_fraction, config.seed
    )
    return catalog, train, val, test


def make_foldin(
    interactions: InteractionSet, fold_in_fraction: float, seed: int
) -> list[FoldInPair]:
    """Per-user fold-in/held-out partition, deterministic per (user id, seed).

    ceil(fraction * S) songs go to fold-in, but at least one song is always
    held out. Users with a single interaction are skipped (warning count).
    """
    if not 0.0 < fold_in_fraction < 1.0:
        raise DataError("fold_in_fraction must be in (0, 1)")
    pairs: list[FoldInPair] = []
    skipped = 0
    for uid, songs in interactions.users:
        items = sorted(songs)
        if len(items) < 2:
            skipped += 1
            continue
        perm = RngStream(seed, f"foldin/{uid}").permutation(len(items))
        n_fold = max(1, min(math.ceil(fold_in_fraction * len(items)), len(items) - 1))
        fold = tuple(sorted(items[i] for i in perm[:n_fold]))
        held = tuple(sorted(items[i] for i in perm[n_fold:]))
        pairs.append(FoldInPair(uid, fold, held))
    if skipped:
        log.warning("make_foldin: skipped %d users with fewer than 2 interactions", skipped)
    return pairs


# ---------------------------------------------------------------------------
# synthetic corpus with planted tag structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    n_tags: int = 8
    feature_dim: int = 32
    n_users: int = 500
    songs_per_tag: int = 25
    n_songs: int | None = None  # defaults to n_tags * songs_per_tag
    noise_std: float = 0.05
    seed: int = 1234
    history_min: int = 15
    history_max: int = 40
    sampling_temperature: float = 1.0
    # songs carry 1-3 tags; extras kept rare so tag counts recover preferences
    tag_count_probs: tuple[float, float, float] = (0.90, 0.08, 0.02)
    pref_count_probs: tuple[float, float, float] = (0.3, 0.4, 0.3)
    train_fraction: float = 0.82
    validation_fraction: float = 0.09

    def __post_init__(self) -> None:
        if self.n_tags < 2:
            raise DataError("need at least 2 tags")
        if self.feature_dim < 4:
            raise DataError("feature_dim must be >= 4")
        if self.resolved_n_songs < self.n_tags:
            raise DataError("need at least one song per tag")
        if not 2 <= self.history_min <= self.history_max:
            raise DataError("bad history size range")
        if self.sampling_temperature <= 0:
            raise DataError("sampling_temperature must be positive")

    @property
    def resolved_n_songs(self) -> int:
        return self.n_songs if self.n_songs is not None else self.n_tags * self.songs_per_tag


@dataclass
class SyntheticTruth:
    """Planted ground truth kept alongside a synthetic corpus for test oracles."""

    user_prefs: dict[str, np.ndarray]
    anchors: np.ndarray
    primary_tags: list[int]
    sampling_temperature: float

    def sampling_tag_distribution(self, pref: np.ndarray) -> np.ndarray:
        q = np.power(np.asarray(pref, dtype=np.float64), 1.0 / self.sampling_temperature,
                     where=np.asarray(pref) > 0, out=np.zeros(len(pref)))
        return q / q.sum()

    def tag_pools(self) -> list[np.ndarray]:
        k = self.anchors.shape[0]
        pools = [[] for _ in range(k)]
        for i, t in enumerate(self.primary_tags):
            pools[t].append(i)
        return [np.array(p, dtype=np.int64) for p in pools]


@dataclass
class SyntheticDataset:
    catalog: Catalog
    train: InteractionSet
    validation: InteractionSet
    test: InteractionSet
    truth: SyntheticTruth

    @property
    def splits(self) -> dict[str, InteractionSet]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def sample_song_draws(
    truth: SyntheticTruth, pref: np.ndarray, n: int, rng: RngStream
) -> np.ndarray:
    """n song draws (with replacement) from the generator's sampling distribution.

    A draw picks a tag from the sharpened preference, then a song uniformly
    from that tag's primary pool. Used by the recovery oracles.
    """
    q = truth.sampling_tag_distribution(pref)
    pools = truth.tag_pools()
    tags = rng.choice(len(q), size=n, p=q)
    out = np.empty(n, dtype=np.int64)
    for k in range(len(q)):
        at = np.flatnonzero(tags == k)
        if at.size:
            out[at] = pools[k][rng.integers(0, len(pools[k]), size=at.size)]
    return out


def generate_synthetic(config: SyntheticConfig) -> SyntheticDataset:
    """Planted-structure corpus: tag anchors, tag-mixture songs, tag-driven users.

    Each tag gets a random unit anchor direction. A song's feature is the
    normalized sum of its tags' anchors plus Gaussian noise. Each user gets a
    sparse preference over tags and samples history songs from the primary
    pools of preferred tags, so true preferences are known and stored.
    """
    k, d, L = config.n_tags, config.feature_dim, config.resolved_n_songs
    rng = RngStream(config.seed, "synthetic")
    anchor_rng = rng.spawn("anchors")
    song_rng = rng.spawn("songs")
    user_rng = rng.spawn("users")

    anchors = anchor_rng.normal(size=(k, d))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)

    songs = [f"s{i:05d}" for i in range(L)]
    primary = [i % k for i in range(L)]
    song_tags: list[frozenset[int]] = []
    features = np.empty((L, d))
    extra_counts = song_rng.choice(3, size=L, p=list(config.tag_count_probs))
    for i in range(L):
        tags = {primary[i]}
        if extra_counts[i]:
            others = [t for t in range(k) if t != primary[i]]
            tags.update(song_rng.choice(others, size=int(extra_counts[i]), replace=False))
        vec = anchors[sorted(tags)].sum(axis=0)
        vec = vec / np.linalg.norm(vec)
        if config.noise_std > 0:
            vec = vec + config.noise_std * song_rng.normal(size=d)
        features[i] = vec
        song_tags.append(frozenset(tags))
    # quantize to the on-disk precision so in-memory and reloaded corpora agree
    features = features.astype(np.float32).astype(np.float64)
    catalog = Catalog(songs, features, song_tags, _synthetic_vocab(k))

    truth = SyntheticTruth({}, anchors, primary, config.sampling_temperature)
    pools = truth.tag_pools()
    user_songs: dict[str, frozenset[int]] = {}
    for u in range(config.n_users):
        uid = f"u{u:05d}"
        n_pref = int(user_rng.choice([1, 2, 3], p=list(config.pref_count_probs)))
        chosen = user_rng.choice(k, size=n_pref, replace=False)
        weights = user_rng.dirichlet(np.ones(n_pref))
        pref = np.zeros(k)
        pref[chosen] = weights
        truth.user_prefs[uid] = pref
        q = truth.sampling_tag_distribution(pref)
        target = int(user_rng.integers(config.history_min, config.history_max + 1))
        counts = user_rng.multinomial(target, q)
        history: list[int] = []
        for t in range(k):
            take = int(min(counts[t], len(pools[t])))
            if take:
                picked = user_rng.choice(len(pools[t]), size=take, replace=False)
                history.extend(int(pools[t][j]) for j in picked)
        if len(history) < 2:  # degenerate draw; top up from the favourite pool
            pool = pools[int(np.argmax(pref))]
            history = list(pool[: max(2, config.history_min)])
        user_songs[uid] = frozenset(history)

    train, val, test = split_users(
        user_songs, config.train_fraction, config.validation_fraction, config.seed
    )
    return SyntheticDataset(catalog, train, val, test, truth)


def _synthetic_vocab(k: int) -> list[Tag]:
    return [Tag(f"tag{i:02d}", TAG_CATEGORIES[i % len(TAG_CATEGORIES)]) for i in range(k)]


def select_anchor_songs(catalog: Catalog, train: InteractionSet) -> list[str]:
    """Most-listened song per tag from the train split; ties break by song id."""
    counts = np.zeros(catalog.n_songs, dtype=np.int64)
    for _, songs in train.users:
        counts[list(songs)] += 1
    anchors: list[str] = []
    for t in range(catalog.n_tags):
        best: tuple[int, str] | None = None
        for i, tags in enumerate(catalog.song_tags):
            if t in tags:
                key = (-int(counts[i]), catalog.songs[i])
                if best is None or key < best:
                    best = key
        if best is None:
            raise DataError(f"tag {catalog.tag_vocab[t].name!r} has no catalog song to anchor")
        anchors.append(best[1])
    return anchors


# ---------------------------------------------------------------------------
# dataset directory layout
# ---------------------------------------------------------------------------

@dataclass
class DatasetBundle:
    catalog: Catalog
    splits: dict[str, InteractionSet]
    anchor_songs: list[str]
    truth: SyntheticTruth | None
    meta: dict
    clip_urls: list[str | None] = field(default_factory=list)


def save_dataset(
    out_dir,
    catalog: Catalog,
    splits: dict[str, InteractionSet],
    anchor_songs: list[str],
    truth: SyntheticTruth | None = None,
    meta: dict | None = None,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tag_vocab(out / "tag_vocab.tsv", catalog.tag_vocab)
    write_tags(out / "tags.tsv", catalog.songs, catalog.song_tags, catalog.tag_vocab)
    write_features(out / "features.tsv", catalog.songs, catalog.features)
    write_prototype_manifest(out / "prototypes.tsv", catalog.tag_vocab, anchor_songs)
    for label, split in splits.items():
        histories = {u: {catalog.songs[i] for i in s} for u, s in split.users}
        write_interactions(out / f"interactions_{label}.tsv", histories)
    if truth is not None:
        payload = {
            "user_prefs": {u: [float(x) for x in p] for u, p in sorted(truth.user_prefs.items())},
            "anchors": [[float(x) for x in row] for row in truth.anchors],
            "primary_tags": list(truth.primary_tags),
            "sampling_temperature": truth.sampling_temperature,
        }
        (out / "truth.json").write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    info = dict(meta or {})
    info.update({"n_songs": catalog.n_songs, "n_tags": catalog.n_tags, "feature_dim": catalog.feature_dim})
    (out / "meta.json").write_text(json.dumps(info, sort_keys=True, indent=2), encoding="utf-8")


def load_dataset(data_dir) -> DatasetBundle:
    root = Path(data_dir)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    vocab = read_tag_vocab(root / "tag_vocab.tsv")
    tags = read_tags(root / "tags.tsv", vocab)
    feats, dim = read_features(root / "features.tsv")
    songs = sorted(feats)
    matrix = np.stack([feats[s] for s in songs]).astype(np.float64)
    catalog = Catalog(songs, matrix, [tags[s] for s in songs], vocab)
    index = {s: i for i, s in enumerate(songs)}
    splits: dict[str, InteractionSet] = {}
    for label in ("train", "validation", "test"):
        path = root / f"interactions_{label}.tsv"
        if path.exists():
            histories = read_interactions(path)
            users = [(u, frozenset(index[s] for s in ss)) for u, ss in histories.items()]
            splits[label] = InteractionSet(users, label)
    manifest = read_prototype_manifest(root / "prototypes.tsv")
    by_name = {t.name: i for i, t in enumerate(vocab)}
    anchor_songs = [""] * len(vocab)
    clip_urls: list[str | None] = [None] * len(vocab)
    for name, song, url in manifest:
        if name not in by_name:
            raise DataError(f"prototype manifest names unknown tag {name!r}")
        anchor_songs[by_name[name]] = song
        clip_urls[by_name[name]] = url
    if any(not s for s in anchor_songs):
        raise DataError("prototype manifest does not cover every tag")
    truth = None
    truth_path = root / "truth.json"
    if truth_path.exists():
        payload = json.loads(truth_path.read_text(encoding="utf-8"))
        truth = SyntheticTruth(
            {u: np.array(p) for u, p in payload["user_prefs"].items()},
            np.array(payload["anchors"]),
            list(payload["primary_tags"]),
            float(payload["sampling_temperature"]),
        )
    meta = {}
    meta_path = root / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return DatasetBundle(catalog, splits, anchor_songs, truth, meta, clip_urls)
