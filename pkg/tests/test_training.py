import numpy as np
import pytest

from protorec.data import SyntheticConfig, generate_synthetic, make_foldin, select_anchor_songs
from protorec.losses import LossWeights
from protorec.model import PrototypeBank, PrototypeRecommender, ModelConfig
from protorec.numerics import RngStream
from protorec.training import (
    TrainConfig,
    _drop_history,
    evaluate_model,
    evaluate_ranking,
    train,
)

from conftest import DESK_SEED, FOLD_FRACTION, MODEL_SEED


def tiny_setup(seed=31):
    ds = generate_synthetic(
        SyntheticConfig(
            n_tags=4,
            feature_dim=16,
            n_songs=60,
            songs_per_tag=15,
            n_users=80,
            seed=seed,
            history_min=6,
            history_max=12,
        )
    )
    bank = PrototypeBank.from_catalog(ds.catalog, select_anchor_songs(ds.catalog, ds.train))
    cfg = ModelConfig(
        n_tags=4,
        feature_dim=16,
        proj_dim=8,
        n_heads=2,
        n_songs=ds.catalog.n_songs,
        hidden_widths=(16,),
    )
    model = PrototypeRecommender(cfg, bank, rng=RngStream(seed, "model"))
    val_pairs = make_foldin(ds.validation, 0.8, seed)
    return ds, model, val_pairs


class TestTrainLoop:
    def test_lr_zero_is_null_update(self):
        ds, model, val_pairs = tiny_setup()
        before = model.store.state_dict()
        cfg = TrainConfig(epochs=1, batch_size=16, lr=0.0, seed=1)
        result = train(model, ds.catalog, ds.train, val_pairs, cfg)
        after = model.store.state_dict()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])
        # single evaluation, metric recorded
        assert result.log.records[0].val_ndcg100 is not None

    def test_same_seed_bit_identical(self, tmp_path):
        logs = []
        ckpts = []
        for run in ("a", "b"):
            ds, model, val_pairs = tiny_setup()
            cfg = TrainConfig(epochs=3, batch_size=16, lr=1e-3, seed=5)
            out = tmp_path / run
            train(model, ds.catalog, ds.train, val_pairs, cfg, out_dir=out)
            logs.append((out / "train_log.jsonl").read_bytes())
            ckpts.append((out / "best.ckpt").read_bytes())
        assert logs[0] == logs[1]
        assert ckpts[0] == ckpts[1]

    def test_best_checkpoint_retained_not_last(self):
        ds, model, val_pairs = tiny_setup()
        cfg = TrainConfig(epochs=6, batch_size=16, lr=1e-3, seed=2)
        result = train(model, ds.catalog, ds.train, val_pairs, cfg)
        vals = [r.val_ndcg100 for r in result.log.records]
        assert result.best_val_ndcg == max(vals)
        # restored model reproduces the best epoch's metric exactly
        got = evaluate_model(model, ds.catalog, val_pairs, recall_ks=(), ndcg_ks=(100,))
        assert got["ndcg@100"] == pytest.approx(result.best_val_ndcg, abs=1e-12)

    def test_early_stopping_stops(self):
        ds, model, val_pairs = tiny_setup()
        cfg = TrainConfig(epochs=50, batch_size=16, lr=0.0, seed=3, early_stop_patience=2)
        result = train(model, ds.catalog, ds.train, val_pairs, cfg)
        # lr=0 never improves after the first evaluation
        assert len(result.log.records) == 3

    def test_canonical_log_has_no_wall_time(self, tmp_path):
        ds, model, val_pairs = tiny_setup()
        cfg = TrainConfig(epochs=1, batch_size=16, seed=4)
        train(model, ds.catalog, ds.train, val_pairs, cfg, out_dir=tmp_path)
        line = (tmp_path / "train_log.jsonl").read_text().splitlines()[0]
        assert "wall" not in line
        assert (tmp_path / "timings.txt").exists()


class TestDenoising:
    def test_never_empties_history(self):
        rng = RngStream(0, "drop")
        for s in range(1, 8):
            kept = _drop_history(list(range(s)), 0.9, rng)
            assert len(kept) >= 1

    def test_drop_fraction_applied(self):
        rng = RngStream(1, "drop")
        kept = _drop_history(list(range(20)), 0.2, rng)
        assert len(kept) == 16

    def test_zero_fraction_keeps_all(self):
        rng = RngStream(2, "drop")
        assert _drop_history(list(range(9)), 0.0, rng) == list(range(9))


class TestEvaluate:
    def test_perfect_ranking_gives_recall_one(self):
        ds, model, _ = tiny_setup()
        pairs = make_foldin(ds.test, 0.8, 9)

        def oracle_scores(pair):
            scores = np.zeros(ds.catalog.n_songs)
            scores[list(pair.held_out)] = 1.0
            return scores

        metrics = evaluate_ranking(oracle_scores, pairs)
        assert metrics["recall@20"] == 1.0
        assert metrics["recall@50"] == 1.0
        assert metrics["ndcg@100"] == 1.0

    def test_random_scores_match_analytic_expectation(self, desk_dataset):
        # recall@20 of a random ranking is 20 / n_candidates per user when
        # the held-out set is smaller than 20; verify the mean over 200 users
        # is within 3 sigma of the hypergeometric expectation
        pairs = make_foldin(desk_dataset.train, FOLD_FRACTION, DESK_SEED)[:200]
        n_songs = desk_dataset.catalog.n_songs
        rng = RngStream(12, "random-scores")

        def random_scores(pair):
            return rng.uniform(size=n_songs)

        metrics = evaluate_ranking(random_scores, pairs, recall_ks=(20,), ndcg_ks=(100,))
        k = 20
        expectations, variances = [], []
        for pair in pairs:
            n = n_songs - len(pair.fold_in)
            r = len(pair.held_out)
            denom = min(k, r)
            e_hits = k * r / n
            v_hits = k * (r / n) * (1 - r / n) * (n - k) / (n - 1)
            expectations.append(e_hits / denom)
            variances.append(v_hits / denom**2)
        expected = float(np.mean(expectations))
        sigma = float(np.sqrt(np.sum(variances)) / len(pairs))
        assert abs(metrics["recall@20"] - expected) <= 3 * sigma

    def test_paper_scale_reference_recorded(self):
        # Table-scale reference values are not desk-reproducible; they are
        # kept here as the documented target of the full-scale pipeline
        reference = {"recall@20": 0.277, "recall@50": 0.377, "ndcg@100": 0.327}
        assert set(reference) == {"recall@20", "recall@50", "ndcg@100"}


class TestLearningSanity:
    def test_beats_popularity_on_validation(self, trained_model, desk_dataset, val_pairs):
        from protorec.metrics import popularity_baseline

        model, result, _ = trained_model
        pop = popularity_baseline(desk_dataset.train, desk_dataset.catalog.n_songs)
        pop_metrics = evaluate_ranking(lambda p: pop, val_pairs, recall_ks=(), ndcg_ks=(100,))
        assert result.best_val_ndcg >= 1.2 * pop_metrics["ndcg@100"]
