import numpy as np
import pytest

from protorec.data import (
    DataError,
    IngestConfig,
    SyntheticConfig,
    filter_interactions,
    generate_synthetic,
    ingest,
    load_dataset,
    make_foldin,
    sample_song_draws,
    save_dataset,
    select_anchor_songs,
    split_users,
    write_features,
    write_interactions,
    write_tag_vocab,
    write_tags,
)
from protorec.numerics import RngStream


class TestFiltering:
    def test_threshold_boundary(self):
        histories = {
            "u1": {f"s{i}" for i in range(25)},
            "u2": {f"s{i}" for i in range(19)},
            "u3": {f"s{i}" for i in range(30)},
        }
        kept = filter_interactions(histories, min_user_interactions=20, min_song_listeners=1)
        assert set(kept) == {"u1", "u3"}

    def test_fixed_point_cascade(self):
        # s9 is listened to only by u2; dropping u2 must drop s9, then u1 is
        # rechecked against the user threshold
        histories = {
            "u1": {"s0", "s1", "s2"},
            "u2": {"s0", "s1", "s9"},
        }
        kept = filter_interactions(histories, min_user_interactions=3, min_song_listeners=2)
        assert kept == {}

    def test_brute_force_fixed_point_oracle(self):
        ds = generate_synthetic(SyntheticConfig(n_users=500, seed=99))
        histories = {}
        for split in (ds.train, ds.validation, ds.test):
            for uid, songs in split.users:
                histories[uid] = {ds.catalog.songs[i] for i in songs}
        got = filter_interactions(histories, 5, 3)

        # independent brute-force loop
        users = {u: set(s) for u, s in histories.items()}
        while True:
            before = sum(len(s) for s in users.values()), len(users)
            users = {u: s for u, s in users.items() if len(s) >= 5}
            listeners = {}
            for s in users.values():
                for song in s:
                    listeners[song] = listeners.get(song, 0) + 1
            keep = {song for song, c in listeners.items() if c >= 3}
            users = {u: s & keep for u, s in users.items()}
            after = sum(len(s) for s in users.values()), len(users)
            if before == after:
                break
        users = {u: s for u, s in users.items() if len(s) >= 5}
        assert got == users

    def test_filtering_is_fixed_point(self):
        ds = generate_synthetic(SyntheticConfig(n_users=200, seed=5))
        histories = {
            uid: {ds.catalog.songs[i] for i in songs} for uid, songs in ds.train.users
        }
        once = filter_interactions(histories, 5, 3)
        twice = filter_interactions(once, 5, 3)
        assert once == twice


class TestSplits:
    def test_disjoint_users(self):
        user_songs = {f"u{i}": frozenset({i % 7}) for i in range(100)}
        train, val, test = split_users(user_songs, 0.8, 0.1, seed=3)
        a, b, c = set(train.user_ids()), set(val.user_ids()), set(test.user_ids())
        assert not (a & b) and not (a & c) and not (b & c)
        assert len(a) + len(b) + len(c) == 100

    def test_deterministic(self):
        user_songs = {f"u{i}": frozenset({i}) for i in range(50)}
        first = split_users(user_songs, 0.8, 0.1, seed=11)
        second = split_users(user_songs, 0.8, 0.1, seed=11)
        assert [s.user_ids() for s in first] == [s.user_ids() for s in second]


class TestFoldIn:
    def _interactions(self, sizes):
        from protorec.data import InteractionSet

        users = [(f"u{i}", frozenset(range(n))) for i, n in enumerate(sizes)]
        return InteractionSet(users, "test")

    def test_fraction_arithmetic(self):
        pairs = make_foldin(self._interactions([10]), 0.8, seed=0)
        assert len(pairs[0].fold_in) == 8
        assert len(pairs[0].held_out) == 2

    def test_held_out_floor(self):
        pairs = make_foldin(self._interactions([2]), 0.8, seed=0)
        assert len(pairs[0].fold_in) == 1
        assert len(pairs[0].held_out) == 1

    def test_deterministic_per_user(self):
        inter = self._interactions([10, 15, 20])
        a = make_foldin(inter, 0.8, seed=4)
        b = make_foldin(inter, 0.8, seed=4)
        assert a == b

    def test_single_interaction_skipped(self):
        pairs = make_foldin(self._interactions([1, 5]), 0.8, seed=0)
        assert len(pairs) == 1

    def test_partition_property(self):
        inter = self._interactions([9, 13, 30])
        for pair in make_foldin(inter, 0.5, seed=2):
            full = set(pair.fold_in) | set(pair.held_out)
            assert full == set(range(len(full)))
            assert not set(pair.fold_in) & set(pair.held_out)


class TestSynthetic:
    def test_zero_noise_single_tag_alignment(self):
        ds = generate_synthetic(SyntheticConfig(noise_std=0.0, n_users=20, seed=2))
        cat = ds.catalog
        for i, tags in enumerate(cat.song_tags):
            if len(tags) == 1:
                (tag,) = tags
                f = cat.features[i]
                a = ds.truth.anchors[tag]
                cos = f @ a / (np.linalg.norm(f) * np.linalg.norm(a))
                # float32 storage quantization bounds the error
                assert cos > 1.0 - 1e-6

    def test_concentrated_user_sampling(self):
        ds = generate_synthetic(SyntheticConfig(seed=3, n_users=10))
        pref = np.zeros(ds.catalog.n_tags)
        pref[3] = 1.0
        draws = sample_song_draws(ds.truth, pref, 10_000, RngStream(0, "draws"))
        frac = np.mean([3 in ds.catalog.song_tags[i] for i in draws])
        assert frac >= 0.8

    def test_preference_recovery_within_tv(self):
        ds = generate_synthetic(SyntheticConfig(seed=4, n_users=30))
        cat = ds.catalog
        rng = RngStream(1, "tv")
        checked = 0
        for uid in sorted(ds.truth.user_prefs)[:8]:
            pref = ds.truth.user_prefs[uid]
            assert abs(pref.sum() - 1.0) <= 1e-9
            draws = sample_song_draws(ds.truth, pref, 10_000, rng)
            counts = np.zeros(cat.n_tags)
            for i in draws:
                for t in cat.song_tags[i]:
                    counts[t] += 1
            recovered = counts / counts.sum()
            tv = 0.5 * np.abs(recovered - pref).sum()
            assert tv <= 0.15, f"user {uid}: tv={tv:.3f}"
            checked += 1
        assert checked == 8

    def test_byte_identical_across_runs(self, tmp_path):
        cfg = SyntheticConfig(n_tags=8, n_songs=200, n_users=500, seed=77)
        for name in ("a", "b"):
            ds = generate_synthetic(cfg)
            anchors = select_anchor_songs(ds.catalog, ds.train)
            save_dataset(tmp_path / name, ds.catalog, ds.splits, anchors, truth=ds.truth)
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name

    def test_every_song_has_a_tag_and_tags_in_range(self):
        ds = generate_synthetic(SyntheticConfig(seed=6, n_users=20))
        for tags in ds.catalog.song_tags:
            assert 1 <= len(tags) <= 3
            assert all(0 <= t < ds.catalog.n_tags for t in tags)

    def test_config_validation(self):
        with pytest.raises(DataError):
            SyntheticConfig(n_tags=1)
        with pytest.raises(DataError):
            SyntheticConfig(feature_dim=2)
        with pytest.raises(DataError):
            SyntheticConfig(n_tags=8, n_songs=4)


class TestIngest:
    def _write_corpus(self, root, histories, vocab, tags, features):
        write_interactions(root / "interactions.tsv", histories)
        write_tag_vocab(root / "vocab.tsv", vocab)
        songs = sorted(features)
        write_tags(root / "tags.tsv", songs, [tags[s] for s in songs], vocab)
        matrix = np.stack([features[s] for s in songs])
        write_features(root / "features.tsv", songs, matrix)

    def test_round_trip_through_files(self, tmp_path):
        ds = generate_synthetic(SyntheticConfig(n_users=120, seed=8, history_min=8, history_max=14))
        cat = ds.catalog
        histories = {}
        for split in ds.splits.values():
            for uid, songs in split.users:
                histories[uid] = {cat.songs[i] for i in songs}
        self._write_corpus(
            tmp_path,
            histories,
            cat.tag_vocab,
            dict(zip(cat.songs, cat.song_tags)),
            {s: cat.features[i] for i, s in enumerate(cat.songs)},
        )
        catalog, train, val, test = ingest(
            tmp_path / "interactions.tsv",
            tmp_path / "features.tsv",
            tmp_path / "tags.tsv",
            tmp_path / "vocab.tsv",
            IngestConfig(min_user_interactions=5, min_song_listeners=3, seed=8),
        )
        assert catalog.feature_dim == cat.feature_dim
        retained = filter_interactions(histories, 5, 3)
        assert len(train) + len(val) + len(test) == len(retained)
        all_ids = set(train.user_ids()) | set(val.user_ids()) | set(test.user_ids())
        assert all_ids == set(retained)

    def test_missing_feature_is_hard_error(self, tmp_path):
        vocab = generate_synthetic(SyntheticConfig(n_users=5, seed=1)).catalog.tag_vocab[:2]
        histories = {f"u{i}": {"sA", "sB"} for i in range(4)}
        tags = {"sA": frozenset({0}), "sB": frozenset({1})}
        features = {"sA": np.ones(4, dtype=np.float32)}  # sB missing
        write_interactions(tmp_path / "interactions.tsv", histories)
        write_tag_vocab(tmp_path / "vocab.tsv", vocab)
        write_tags(tmp_path / "tags.tsv", ["sA", "sB"], [tags["sA"], tags["sB"]], vocab)
        write_features(tmp_path / "features.tsv", ["sA"], np.stack([features["sA"]]))
        with pytest.raises(DataError, match="sB"):
            ingest(
                tmp_path / "interactions.tsv",
                tmp_path / "features.tsv",
                tmp_path / "tags.tsv",
                tmp_path / "vocab.tsv",
                IngestConfig(min_user_interactions=2, min_song_listeners=2, seed=0),
            )

    def test_dimension_mismatch_is_hard_error(self, tmp_path):
        (tmp_path / "features.tsv").write_text("D=3\nsA\t1 2 3\nsB\t1 2\n")
        from protorec.data import read_features

        with pytest.raises(DataError, match="dimension mismatch"):
            read_features(tmp_path / "features.tsv")

    def test_untagged_songs_dropped(self, tmp_path):
        vocab = generate_synthetic(SyntheticConfig(n_users=5, seed=1)).catalog.tag_vocab[:1]
        histories = {f"u{i}": {"sA", "sB", "sC"} for i in range(4)}
        write_interactions(tmp_path / "interactions.tsv", histories)
        write_tag_vocab(tmp_path / "vocab.tsv", vocab)
        (tmp_path / "tags.tsv").write_text("sA\t" + vocab[0].name + "\nsB\t" + vocab[0].name + "\nsC\tnot_in_vocab\n")
        write_features(
            tmp_path / "features.tsv", ["sA", "sB", "sC"], np.eye(3, 4, dtype=np.float32) + 1
        )
        catalog, train, val, test = ingest(
            tmp_path / "interactions.tsv",
            tmp_path / "features.tsv",
            tmp_path / "tags.tsv",
            tmp_path / "vocab.tsv",
            IngestConfig(min_user_interactions=2, min_song_listeners=2, seed=0),
        )
        assert catalog.songs == ["sA", "sB"]


class TestDatasetDir:
    def test_save_load_round_trip(self, tmp_path):
        ds = generate_synthetic(SyntheticConfig(n_users=60, seed=13, history_min=6, history_max=10))
        anchors = select_anchor_songs(ds.catalog, ds.train)
        save_dataset(tmp_path, ds.catalog, ds.splits, anchors, truth=ds.truth)
        bundle = load_dataset(tmp_path)
        assert bundle.catalog.songs == ds.catalog.songs
        np.testing.assert_array_equal(bundle.catalog.features, ds.catalog.features)
        assert bundle.catalog.song_tags == ds.catalog.song_tags
        assert bundle.anchor_songs == anchors
        for label, split in ds.splits.items():
            assert bundle.splits[label].users == split.users
        assert bundle.truth is not None
        for uid, pref in ds.truth.user_prefs.items():
            np.testing.assert_allclose(bundle.truth.user_prefs[uid], pref, atol=1e-15)

    def test_anchor_songs_carry_their_tag(self, tmp_path):
        ds = generate_synthetic(SyntheticConfig(n_users=60, seed=14))
        anchors = select_anchor_songs(ds.catalog, ds.train)
        for tag_id, song in enumerate(anchors):
            assert tag_id in ds.catalog.tags_of(song)
