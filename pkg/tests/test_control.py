import numpy as np
import pytest

from protorec.control import (
    ExperimentRuns,
    Intervention,
    apply_intervention,
    controllability_experiment,
)
from protorec.losses import tag_distribution_of
from protorec.metrics import delta_table
from protorec.model import MASK_SOFTMAX, POST_SCALE


class TestIntervention:
    def test_validation(self):
        with pytest.raises(ValueError):
            Intervention((0.0, 0.0))
        with pytest.raises(ValueError):
            Intervention((1.0, -0.5))
        with pytest.raises(ValueError):
            Intervention((1.0, 1.0), mode="something")

    def test_drop_tag(self):
        iv = Intervention.drop_tag(2, 4)
        assert iv.multipliers == (1.0, 1.0, 0.0, 1.0)
        assert not iv.is_identity

    def test_identity(self):
        assert Intervention.identity(3).is_identity

    def test_compose_is_elementwise_product(self):
        a = Intervention((1.0, 0.5, 0.0, 1.0))
        b = Intervention((0.5, 0.5, 1.0, 1.0))
        c = a.compose(b)
        assert c.multipliers == (0.5, 0.25, 0.0, 1.0)

    def test_compose_mode_mismatch_rejected(self):
        a = Intervention((1.0, 1.0), mode=MASK_SOFTMAX)
        b = Intervention((1.0, 1.0), mode=POST_SCALE)
        with pytest.raises(ValueError):
            a.compose(b)


class TestApplyIntervention:
    def _history(self, dataset, uid_index=0):
        uid, songs = dataset.test.users[uid_index]
        idx = sorted(songs)
        return dataset.catalog.features[np.asarray(idx)], set(idx)

    def test_null_intervention_identity(self, untrained_model, desk_dataset):
        history, exclude = self._history(desk_dataset)
        result = apply_intervention(
            untrained_model,
            desk_dataset.catalog,
            history,
            Intervention.identity(desk_dataset.catalog.n_tags),
            exclude,
            k=20,
        )
        assert result.original == result.modified
        assert result.overlap == 1.0
        assert result.hellinger_shift == 0.0
        np.testing.assert_array_equal(result.tags_before, result.tags_after)

    def test_masked_tag_profile_mass_is_zero(self, untrained_model, desk_dataset):
        history, _ = self._history(desk_dataset)
        mult = np.ones(desk_dataset.catalog.n_tags)
        mult[3] = 0.0
        profile = untrained_model.attend(history, multipliers=mult)
        assert np.all(profile.head_weights[:, 3] == 0.0)
        assert profile.weights[3] == 0.0

    def test_composition_equals_single_application(self, untrained_model, desk_dataset):
        history, _ = self._history(desk_dataset)
        k_tags = desk_dataset.catalog.n_tags
        a = Intervention(tuple([0.5] + [1.0] * (k_tags - 1)))
        b = Intervention.drop_tag(2, k_tags)
        composed = a.compose(b)
        via_compose = untrained_model.attend(
            history, multipliers=np.asarray(composed.multipliers)
        )
        product = np.asarray(a.multipliers) * np.asarray(b.multipliers)
        via_product = untrained_model.attend(history, multipliers=product)
        np.testing.assert_allclose(
            via_compose.head_weights, via_product.head_weights, atol=1e-12
        )

    def test_masking_never_increases_masked_mass(self, untrained_model, desk_dataset):
        history, _ = self._history(desk_dataset)
        k_tags = desk_dataset.catalog.n_tags
        base = untrained_model.attend(history)
        for tag in range(k_tags):
            iv = Intervention.drop_tag(tag, k_tags)
            masked = untrained_model.attend(history, multipliers=np.asarray(iv.multipliers))
            assert masked.weights[tag] == 0.0 <= base.weights[tag]

    def test_result_consistency(self, untrained_model, desk_dataset):
        history, exclude = self._history(desk_dataset)
        k_tags = desk_dataset.catalog.n_tags
        result = apply_intervention(
            untrained_model,
            desk_dataset.catalog,
            history,
            Intervention.drop_tag(1, k_tags),
            exclude,
            k=15,
        )
        assert len(result.original) == len(result.modified) == 15
        inter = set(result.original_indices) & set(result.modified_indices)
        assert result.overlap == pytest.approx(len(inter) / 15)
        np.testing.assert_allclose(
            result.tags_before,
            tag_distribution_of(result.original_indices, desk_dataset.catalog),
            atol=1e-15,
        )

    def test_planted_users_lose_preferred_tag_songs(
        self, trained_model, desk_dataset, test_pairs
    ):
        # sign check over the concentrated planted users: masking the
        # preferred tag strictly reduces its presence in the top-20 in
        # aggregate, and per-user decreases outnumber increases
        model, _, _ = trained_model
        catalog = desk_dataset.catalog
        prefs = desk_dataset.truth.user_prefs
        total_before = total_after = 0
        strict_down = strict_up = checked = 0
        for pair in test_pairs:
            pref = prefs[pair.user_id]
            tag = int(np.argmax(pref))
            if pref[tag] < 0.9:
                continue
            history = catalog.features[np.asarray(pair.fold_in)]
            result = apply_intervention(
                model,
                catalog,
                history,
                Intervention.drop_tag(tag, catalog.n_tags),
                set(pair.fold_in),
                k=20,
            )
            before = sum(1 for i in result.original_indices if tag in catalog.song_tags[i])
            after = sum(1 for i in result.modified_indices if tag in catalog.song_tags[i])
            total_before += before
            total_after += after
            strict_down += after < before
            strict_up += after > before
            checked += 1
        assert checked >= 5
        assert total_after < total_before
        assert strict_down > strict_up


class TestExperiment:
    def test_row_per_tag_with_users(self, untrained_model, desk_dataset, test_pairs):
        runs = controllability_experiment(untrained_model, desk_dataset.catalog, test_pairs, 20)
        covered = set(runs.users_by_tag)
        assert covered | set(runs.skipped_tags) == set(range(desk_dataset.catalog.n_tags))
        for tag, users in runs.users_by_tag.items():
            assert set(runs.full[tag]) == set(users)
            assert set(runs.modified[tag]) == set(users)
            for uid in users:
                assert len(runs.full[tag][uid]) == 20

    def test_full_run_shared_across_tags(self, untrained_model, desk_dataset, test_pairs):
        runs = controllability_experiment(untrained_model, desk_dataset.catalog, test_pairs, 20)
        seen = {}
        for tag, by_user in runs.full.items():
            for uid, ranked in by_user.items():
                if uid in seen:
                    assert seen[uid] == ranked
                seen[uid] = ranked

    def test_trained_model_macro_positive(self, trained_model, desk_dataset, test_pairs):
        model, _, _ = trained_model
        runs = controllability_experiment(model, desk_dataset.catalog, test_pairs, 20)
        rows, macro, dropped = delta_table(
            runs.full, runs.modified, desk_dataset.catalog.song_tags, 20
        )
        assert macro > 0.0
        positive = sum(1 for r in rows if r.delta > 0)
        assert positive / len(rows) >= 0.9
