"""Flat key=value config files shared by all pipeline commands.

Lines are ``key=value``; blank lines and ``#`` comments are ignored. Unknown
keys are rejected so typos fail loudly. See ``configs/desk.cfg`` for the
documented desk-scale defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import IngestConfig, SyntheticConfig
from .losses import LossWeights
from .training import TrainConfig


class ConfigError(ValueError):
    """Raised for unparseable or unknown configuration input."""


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key=value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config_file(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def _to_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _to_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _to_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _to_int_tuple(key: str, value: str) -> tuple[int, ...]:
    if not value:
        return ()
    try:
        return tuple(int(part) for part in value.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {value!r}") from None


@dataclass
class PipelineConfig:
    """Everything the CLI needs, assembled from one flat key=value file."""

    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    proj_dim: int = 16
    n_heads: int = 4
    hidden_widths: tuple[int, ...] = (64,)
    frozen_prototypes: bool = True
    activation: str = "sigmoid"
    fold_in_fraction: float = 0.8
    t_soft: bool = True
    t_topk: int = 100
    control_k: int = 20
    seed: int = 1234

    def model_config(self, catalog):
        from .model import ModelConfig

        return ModelConfig(
            n_tags=catalog.n_tags,
            feature_dim=catalog.feature_dim,
            proj_dim=self.proj_dim,
            n_heads=self.n_heads,
            n_songs=catalog.n_songs,
            hidden_widths=self.hidden_widths,
            frozen_prototypes=self.frozen_prototypes,
            activation=self.activation,
        )


def build_pipeline_config(kv: dict[str, str]) -> PipelineConfig:
    kv = dict(kv)

    def take(key, default=None):
        return kv.pop(key, default)

    seed = _to_int("seed", take("seed", "1234"))
    synth = SyntheticConfig(
        n_tags=_to_int("K", take("K", "8")),
        feature_dim=_to_int("D", take("D", "32")),
        n_users=_to_int("n_users", take("n_users", "500")),
        songs_per_tag=_to_int("songs_per_tag", take("songs_per_tag", "25")),
        n_songs=(lambda v: _to_int("L", v) if v is not None else None)(take("L")),
        noise_std=_to_float("noise_std", take("noise_std", "0.05")),
        seed=seed,
        history_min=_to_int("history_min", take("history_min", "15")),
        history_max=_to_int("history_max", take("history_max", "40")),
        sampling_temperature=_to_float(
            "sampling_temperature", take("sampling_temperature", "1.0")
        ),
        train_fraction=_to_float("train_fraction", take("train_fraction", "0.82")),
        validation_fraction=_to_float(
            "validation_fraction", take("validation_fraction", "0.09")
        ),
    )
    ingest = IngestConfig(
        min_user_interactions=_to_int(
            "min_user_interactions", take("min_user_interactions", "20")
        ),
        min_song_listeners=_to_int("min_song_listeners", take("min_song_listeners", "200")),
        train_fraction=synth.train_fraction,
        validation_fraction=synth.validation_fraction,
        seed=seed,
    )
    weights = LossWeights(
        lambda1=_to_float("lambda1", take("lambda1", "1.0")),
        lambda2=_to_float("lambda2", take("lambda2", "0.005")),
    )
    t_soft = _to_bool("t_soft", take("t_soft", "true"))
    t_topk = _to_int("t_topk", take("t_topk", "100"))
    train = TrainConfig(
        epochs=_to_int("epochs", take("epochs", "40")),
        batch_size=_to_int("batch_size", take("batch_size", "32")),
        lr=_to_float("lr", take("lr", "0.001")),
        seed=seed,
        input_drop_fraction=_to_float(
            "input_drop_fraction", take("input_drop_fraction", "0.2")
        ),
        early_stop_patience=_to_int("early_stop_patience", take("early_stop_patience", "10")),
        eval_every=_to_int("eval_every", take("eval_every", "1")),
        loss_weights=weights,
        soft_t=t_soft,
        t_topk=t_topk,
    )
    cfg = PipelineConfig(
        synth=synth,
        ingest=ingest,
        train=train,
        proj_dim=_to_int("D_prime", take("D_prime", "16")),
        n_heads=_to_int("H", take("H", "4")),
        hidden_widths=_to_int_tuple("hidden_widths", take("hidden_widths", "64")),
        frozen_prototypes=_to_bool("frozen_prototypes", take("frozen_prototypes", "true")),
        activation=take("activation", "sigmoid"),
        fold_in_fraction=_to_float("fold_in_fraction", take("fold_in_fraction", "0.8")),
        t_soft=t_soft,
        t_topk=t_topk,
        control_k=_to_int("control_k", take("control_k", "20")),
        seed=seed,
    )
    if kv:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(kv))}")
    return cfg


def load_pipeline_config(path) -> PipelineConfig:
    return build_pipeline_config(read_config_file(path))
