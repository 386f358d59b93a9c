"""Multi-head prototype attention over user histories, plus the score decoder.

Per head h the prototype matrix and each history feature are chunked into
D/H-dimensional pieces. Keys and values share one projection: the transformed
prototype row serves as both the attention key and the value that builds the
user embedding. Head embeddings are concatenated and decoded through a tanh
feed-forward stack with a sigmoid output per catalog song.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Catalog
from .numerics import (
    ParameterStore,
    RngStream,
    assert_finite,
    read_checkpoint,
    sigmoid,
    softmax_rows,
    write_checkpoint,
    xavier_uniform,
)

MASK_SOFTMAX = "mask_softmax"
POST_SCALE = "post_scale"
INTERVENTION_MODES = (MASK_SOFTMAX, POST_SCALE)

# Key and query projections start from the same (scaled Xavier) draw. The
# initial attention logit is then a positive semidefinite form, so songs
# route toward prototypes they resemble instead of an arbitrary rotation of
# them; both matrices remain independently learnable afterwards.
ATTN_INIT_GAIN = 2.0

# The user embedding sums attention mass over the whole history, so its
# magnitude grows with the history size; the first decoder layer's init is
# shrunk to keep tanh pre-activations out of saturation.
DECODER_INPUT_GAIN = 0.1


@dataclass(frozen=True)
class ModelConfig:
    n_tags: int
    feature_dim: int
    proj_dim: int
    n_heads: int
    n_songs: int
    hidden_widths: tuple[int, ...] = (600,)
    frozen_prototypes: bool = True
    activation: str = "sigmoid"

    def __post_init__(self) -> None:
        if min(self.n_tags, self.feature_dim, self.proj_dim, self.n_heads, self.n_songs) < 1:
            raise ValueError("all model dimensions must be positive")
        if self.feature_dim % self.n_heads != 0:
            raise ValueError("feature_dim must be divisible by n_heads")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.activation != "sigmoid":
            raise ValueError("only the sigmoid output activation is supported")

    @property
    def head_dim(self) -> int:
        return self.feature_dim // self.n_heads

    @property
    def embedding_dim(self) -> int:
        return self.n_heads * self.proj_dim


@dataclass
class PrototypeBank:
    """One anchor vector per tag, each tied to a real (listenable) catalog song."""

    vectors: np.ndarray
    source_songs: list[str]
    frozen: bool = True

    def __post_init__(self) -> None:
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.source_songs):
            raise ValueError("prototype bank must be K x D with one source song per row")
        assert_finite(self.vectors, "prototype bank")

    @classmethod
    def from_catalog(cls, catalog: Catalog, anchor_songs: list[str], frozen: bool = True):
        if len(anchor_songs) != catalog.n_tags:
            raise ValueError("need exactly one anchor song per tag")
        rows = []
        for tag_id, song in enumerate(anchor_songs):
            idx = catalog.song_index(song)
            if tag_id not in catalog.song_tags[idx]:
                raise ValueError(
                    f"anchor song {song!r} does not carry tag "
                    f"{catalog.tag_vocab[tag_id].name!r}"
                )
            rows.append(catalog.features[idx])
        return cls(np.stack(rows), list(anchor_songs), frozen)


@dataclass
class UserProfile:
    """Per-tag attention mass and the concatenated head embeddings for one user."""

    head_weights: np.ndarray  # H x K, each head sums to the history size
    embedding: np.ndarray  # H * proj_dim
    history_size: int

    @property
    def weights(self) -> np.ndarray:
        """Across-head mean of per-head tag mass; sums to the history size."""
        return self.head_weights.mean(axis=0)

    @property
    def normalized_weights(self) -> np.ndarray:
        w = self.weights
        return w / w.sum()


@dataclass
class UserForward:
    """Cached intermediates of one user's forward pass, for backprop."""

    history: np.ndarray  # S x D
    queries: list[np.ndarray]  # per head: S x D'
    values: list[np.ndarray]  # per head: K x D' (transformed prototypes)
    attn: list[np.ndarray]  # per head: S x K rows on the simplex
    profile: UserProfile
    activations: list[np.ndarray]  # decoder layer inputs, activations[0] = embedding
    logits: np.ndarray
    scores: np.ndarray
    intervened: bool = False


@dataclass
class RecommendationList:
    items: list[tuple[int, float]]
    truncated: bool = False

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.items]


def top_k_indices(scores: np.ndarray, k: int, exclude=()) -> np.ndarray:
    """Indices of the k largest scores; ties break by ascending index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.asarray(scores, dtype=np.float64)
    assert_finite(s, "scores")
    if exclude:
        s = s.copy()
        s[list(exclude)] = -np.inf
    avail = s.size - len(set(exclude))
    kk = min(k, avail)
    if kk <= 0:
        return np.empty(0, dtype=np.int64)
    if kk * 4 >= s.size:
        order = np.argsort(-s, kind="stable")
        return order[:kk].astype(np.int64)
    # threshold selection, then an exact stable ordering of the candidates
    thresh = np.partition(s, s.size - kk)[s.size - kk]
    above = np.flatnonzero(s > thresh)
    need = kk - above.size
    at = np.flatnonzero(s == thresh)[:need]
    cand = np.concatenate([above, at])
    return cand[np.argsort(-s[cand], kind="stable")].astype(np.int64)


def recommend(scores: np.ndarray, exclude, k: int) -> RecommendationList:
    """Top-k songs by score with excluded indices removed from candidacy.

    Asking for more songs than remain returns everything available, flagged.
    """
    scores = np.asarray(scores, dtype=np.float64)
    exclude = set(exclude)
    avail = scores.size - len(exclude)
    truncated = k > avail
    idx = top_k_indices(scores, min(k, avail), exclude)
    return RecommendationList([(int(i), float(scores[i])) for i in idx], truncated)


class PrototypeRecommender:
    """Forward model: prototype attention -> user embedding -> per-song scores."""

    def __init__(
        self,
        config: ModelConfig,
        bank: PrototypeBank,
        rng: RngStream | None = None,
        _empty: bool = False,
    ) -> None:
        if bank.vectors.shape != (config.n_tags, config.feature_dim):
            raise ValueError("prototype bank shape does not match the model config")
        if bank.frozen != config.frozen_prototypes:
            bank = PrototypeBank(bank.vectors, bank.source_songs, config.frozen_prototypes)
        self.config = config
        self.bank = bank
        self.store = ParameterStore()
        if _empty:
            return
        init = (rng if rng is not None else RngStream(0, "model")).spawn("init")
        c, dp = config.head_dim, config.proj_dim
        for h in range(config.n_heads):
            proj = ATTN_INIT_GAIN * xavier_uniform(init, c, dp)
            self.store.add(f"attn.h{h}.p", proj)
            self.store.add(f"attn.h{h}.x", proj.copy())
        dims = [config.embedding_dim, *config.hidden_widths, config.n_songs]
        for i in range(len(dims) - 1):
            w = xavier_uniform(init, dims[i], dims[i + 1])
            if i == 0:
                w *= DECODER_INPUT_GAIN
            self.store.add(f"dec.w{i}", w)
            self.store.add(f"dec.b{i}", np.zeros(dims[i + 1]))
        self.store.add("sep.w", xavier_uniform(init, dp, config.n_tags))
        self.store.add("sep.b", np.zeros(config.n_tags))
        if not config.frozen_prototypes:
            self.store.add("proto", bank.vectors.copy())

    # -- parameter access ---------------------------------------------------

    @property
    def prototypes(self) -> np.ndarray:
        return self.store["proto"] if "proto" in self.store else self.bank.vectors

    def _chunk(self, arr: np.ndarray, h: int) -> np.ndarray:
        c = self.config.head_dim
        return arr[:, h * c : (h + 1) * c]

    def head_values(self) -> list[np.ndarray]:
        """Transformed prototypes per head (K x D'), the attention keys/values."""
        p = self.prototypes
        return [
            self._chunk(p, h) @ self.store[f"attn.h{h}.p"]
            for h in range(self.config.n_heads)
        ]

    @property
    def n_decoder_layers(self) -> int:
        return len(self.config.hidden_widths) + 1

    # -- forward ------------------------------------------------------------

    def _check_multipliers(self, multipliers) -> np.ndarray | None:
        if multipliers is None:
            return None
        m = np.asarray(multipliers, dtype=np.float64)
        if m.shape != (self.config.n_tags,):
            raise ValueError(f"multiplier vector must have length {self.config.n_tags}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("multipliers must be finite and non-negative")
        if not np.any(m > 0):
            raise ValueError("intervention masks every prototype")
        return m

    def _attention(self, history, multipliers=None, mode=MASK_SOFTMAX):
        if mode not in INTERVENTION_MODES:
            raise ValueError(f"unknown intervention mode {mode!r}")
        x = np.ascontiguousarray(history, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("history must be a non-empty S x D matrix")
        if x.shape[1] != self.config.feature_dim:
            raise ValueError(
                f"history feature dimension {x.shape[1]} != {self.config.feature_dim}"
            )
        m = self._check_multipliers(multipliers)
        # all-ones multipliers short-circuit so the null intervention is exact
        adjust = m is not None and not np.all(m == 1.0)
        cfg = self.config
        s = x.shape[0]
        shift = None
        if adjust and mode == MASK_SOFTMAX:
            with np.errstate(divide="ignore"):
                shift = np.log(m)  # -inf removes the tag from the softmax support
        p = self.prototypes
        queries, values, attn = [], [], []
        head_weights = np.empty((cfg.n_heads, cfg.n_tags))
        embedding = np.empty(cfg.embedding_dim)
        for h in range(cfg.n_heads):
            v = self._chunk(p, h) @ self.store[f"attn.h{h}.p"]
            q = self._chunk(x, h) @ self.store[f"attn.h{h}.x"]
            z = q @ v.T
            if shift is not None:
                z = z + shift[None, :]
            w = softmax_rows(z)
            w_hat = w.sum(axis=0)
            if adjust and mode == POST_SCALE:
                scaled = w_hat * m
                total = scaled.sum()
                if total <= 0.0:
                    raise ValueError("intervention removed all attention mass")
                w_hat = scaled * (s / total)
            head_weights[h] = w_hat
            embedding[h * cfg.proj_dim : (h + 1) * cfg.proj_dim] = v.T @ w_hat
            queries.append(q)
            values.append(v)
            attn.append(w)
        profile = UserProfile(head_weights, embedding, s)
        return x, queries, values, attn, profile, adjust

    def attend(self, history, multipliers=None, mode=MASK_SOFTMAX) -> UserProfile:
        """Profile a history: per-head tag mass and the concatenated embedding."""
        return self._attention(history, multipliers, mode)[4]

    def decode(self, profile) -> np.ndarray:
        """Score every catalog song from a profile (or a raw embedding)."""
        emb = profile.embedding if isinstance(profile, UserProfile) else np.asarray(profile)
        return self._decode_with_cache(emb)[2]

    def _decode_with_cache(self, emb: np.ndarray):
        if emb.shape != (self.config.embedding_dim,):
            raise ValueError(
                f"embedding dimension {emb.shape} != ({self.config.embedding_dim},)"
            )
        activations = [emb]
        a = emb
        for i in range(self.n_decoder_layers - 1):
            a = np.tanh(a @ self.store[f"dec.w{i}"] + self.store[f"dec.b{i}"])
            activations.append(a)
        last = self.n_decoder_layers - 1
        logits = a @ self.store[f"dec.w{last}"] + self.store[f"dec.b{last}"]
        return activations, logits, sigmoid(logits)

    def forward_user(self, history, multipliers=None, mode=MASK_SOFTMAX) -> UserForward:
        x, queries, values, attn, profile, adjusted = self._attention(history, multipliers, mode)
        activations, logits, scores = self._decode_with_cache(profile.embedding)
        return UserForward(
            x, queries, values, attn, profile, activations, logits, scores, adjusted
        )

    # -- backward -----------------------------------------------------------

    def backward_user(
        self,
        cache: UserForward,
        d_logits: np.ndarray,
        d_head_weights: np.ndarray | None = None,
    ) -> None:
        """Accumulate gradients for one user into the store.

        d_logits is dL/d(decoder output logits); d_head_weights, when given,
        is dL/d(per-head tag mass) from loss terms that read the profile
        directly. Only the un-intervened forward path has gradients.
        """
        if cache.intervened:
            raise ValueError("gradients are only defined for the un-intervened path")
        cfg = self.config
        store = self.store
        delta = np.asarray(d_logits, dtype=np.float64)
        for i in range(self.n_decoder_layers - 1, -1, -1):
            a_in = cache.activations[i]
            gw = store.grad(f"dec.w{i}")
            gw += np.outer(a_in, delta)
            gb = store.grad(f"dec.b{i}")
            gb += delta
            back = store[f"dec.w{i}"] @ delta
            if i > 0:
                delta = back * (1.0 - a_in * a_in)  # tanh'
            else:
                d_emb = back
        trainable_proto = "proto" in store
        p = self.prototypes
        for h in range(cfg.n_heads):
            g_u = d_emb[h * cfg.proj_dim : (h + 1) * cfg.proj_dim]
            v = cache.values[h]
            w_hat = cache.profile.head_weights[h]
            g_what = v @ g_u
            if d_head_weights is not None:
                g_what = g_what + d_head_weights[h]
            dv = np.outer(w_hat, g_u)
            w = cache.attn[h]
            dots = w @ g_what
            dz = w * (g_what[None, :] - dots[:, None])  # softmax rows backprop
            dv += dz.T @ cache.queries[h]
            dq = dz @ v
            gx = store.grad(f"attn.h{h}.x")
            gx += self._chunk(cache.history, h).T @ dq
            gp = store.grad(f"attn.h{h}.p")
            gp += self._chunk(p, h).T @ dv
            if trainable_proto:
                c = cfg.head_dim
                store.grad("proto")[:, h * c : (h + 1) * c] += dv @ store[f"attn.h{h}.p"].T

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "n_tags": self.config.n_tags,
            "feature_dim": self.config.feature_dim,
            "proj_dim": self.config.proj_dim,
            "n_heads": self.config.n_heads,
            "n_songs": self.config.n_songs,
            "hidden_widths": list(self.config.hidden_widths),
            "frozen_prototypes": self.config.frozen_prototypes,
            "activation": self.config.activation,
            "source_songs": self.bank.source_songs,
            "adam_step": self.store.step,
        }
        arrays = dict(self.store.state_dict())
        arrays["prototype_bank"] = self.bank.vectors
        write_checkpoint(path, header, arrays)

    @classmethod
    def load(cls, path) -> "PrototypeRecommender":
        header, arrays = read_checkpoint(path)
        config = ModelConfig(
            n_tags=header["n_tags"],
            feature_dim=header["feature_dim"],
            proj_dim=header["proj_dim"],
            n_heads=header["n_heads"],
            n_songs=header["n_songs"],
            hidden_widths=tuple(header["hidden_widths"]),
            frozen_prototypes=header["frozen_prototypes"],
            activation=header["activation"],
        )
        bank = PrototypeBank(
            arrays.pop("prototype_bank"), header["source_songs"], config.frozen_prototypes
        )
        model = cls(config, bank, _empty=True)
        for name, arr in arrays.items():
            model.store.add(name, arr)
        model.store.step = int(header.get("adam_step", 0))
        return model
