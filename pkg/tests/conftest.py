import numpy as np
import pytest

from protorec.data import (
    SyntheticConfig,
    generate_synthetic,
    make_foldin,
    select_anchor_songs,
)
from protorec.losses import LossWeights
from protorec.model import ModelConfig, PrototypeBank, PrototypeRecommender
from protorec.numerics import RngStream
from protorec.training import TrainConfig, train

DESK_SEED = 1234
MODEL_SEED = 7
FOLD_FRACTION = 0.8

DESK_TRAIN = TrainConfig(
    epochs=40,
    batch_size=32,
    lr=1e-3,
    seed=MODEL_SEED,
    loss_weights=LossWeights(1.0, 0.005),
)


@pytest.fixture(scope="session")
def desk_dataset():
    return generate_synthetic(SyntheticConfig(seed=DESK_SEED))


@pytest.fixture(scope="session")
def desk_catalog(desk_dataset):
    return desk_dataset.catalog


@pytest.fixture(scope="session")
def desk_bank(desk_dataset):
    anchors = select_anchor_songs(desk_dataset.catalog, desk_dataset.train)
    return PrototypeBank.from_catalog(desk_dataset.catalog, anchors)


@pytest.fixture(scope="session")
def desk_model_config(desk_catalog):
    return ModelConfig(
        n_tags=desk_catalog.n_tags,
        feature_dim=desk_catalog.feature_dim,
        proj_dim=16,
        n_heads=4,
        n_songs=desk_catalog.n_songs,
        hidden_widths=(64,),
    )


@pytest.fixture(scope="session")
def val_pairs(desk_dataset):
    return make_foldin(desk_dataset.validation, FOLD_FRACTION, DESK_SEED)


@pytest.fixture(scope="session")
def test_pairs(desk_dataset):
    return make_foldin(desk_dataset.test, FOLD_FRACTION, DESK_SEED)


@pytest.fixture()
def untrained_model(desk_model_config, desk_bank):
    return PrototypeRecommender(desk_model_config, desk_bank, rng=RngStream(MODEL_SEED, "model"))


@pytest.fixture(scope="session")
def trained_model(desk_dataset, desk_model_config, desk_bank, val_pairs):
    import time

    model = PrototypeRecommender(desk_model_config, desk_bank, rng=RngStream(MODEL_SEED, "model"))
    t0 = time.perf_counter()
    result = train(model, desk_dataset.catalog, desk_dataset.train, val_pairs, DESK_TRAIN)
    elapsed = time.perf_counter() - t0
    assert not result.aborted
    return model, result, elapsed


def desk_batch(dataset, n_users=5):
    """First n train users as (history, target) pairs with full histories."""
    catalog = dataset.catalog
    batch = []
    for uid, songs in dataset.train.users[:n_users]:
        idx = sorted(songs)
        target = np.zeros(catalog.n_songs)
        target[idx] = 1.0
        batch.append((catalog.features[np.asarray(idx)], target))
    return batch
