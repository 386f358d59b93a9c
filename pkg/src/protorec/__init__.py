"""Controllable prototype-attention music recommender.

Users are profiled as attention mass over tag-anchored prototypes; editing
that mass (masking or rescaling tags) steers the recommendations, and the
package ships the metrics, CLI, and HTTP service to measure and drive that
loop.
"""

from .config import PipelineConfig, load_pipeline_config
from .control import Intervention, WhatIfResult, apply_intervention, controllability_experiment
from .data import (
    Catalog,
    DatasetBundle,
    FoldInPair,
    IngestConfig,
    InteractionSet,
    SyntheticConfig,
    generate_synthetic,
    ingest,
    load_dataset,
    make_foldin,
    save_dataset,
)
from .losses import LossWeights, hellinger, loss_recsys, loss_total, tag_count
from .metrics import delta_table, dcg_tag, ndcg_at_k, ndcg_tag, popularity_baseline, recall_at_k
from .model import (
    MASK_SOFTMAX,
    POST_SCALE,
    ModelConfig,
    PrototypeBank,
    PrototypeRecommender,
    UserProfile,
    recommend,
)
from .numerics import ParameterStore, RngStream, adam_step, grad_check, sigmoid, softmax
from .training import TrainConfig, evaluate_model, evaluate_ranking, train

__version__ = "0.1.0"
