"""HTTP steering surface: profiles, recommendations, what-if previews, multiplier edits.

The service is a thin view over the library: every payload field is computed
by the same calls a direct library user would make, over an immutable model
snapshot. Per-user multiplier state lives in an append-log-backed session
store with per-user locking (last writer wins).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import Intervention, apply_intervention
from .data import Catalog, FoldInPair
from .model import INTERVENTION_MODES, MASK_SOFTMAX, PrototypeRecommender, recommend

API_VERSION = "1"


@dataclass
class ApiError(Exception):
    status: int
    code: str
    message: str


class SessionStore:
    """Per-user multipliers persisted to an append log and replayed on startup."""

    def __init__(self, n_tags: int, log_path=None) -> None:
        self.n_tags = n_tags
        self.log_path = Path(log_path) if log_path else None
        self._state: dict[str, tuple[list[float], str]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        if self.log_path is not None and self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry["op"] == "set":
                self._state[entry["user"]] = (entry["multipliers"], entry["mode"])
            elif entry["op"] == "reset":
                self._state.pop(entry["user"], None)

    def _append(self, entry: dict) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def lock(self, user: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(user, threading.Lock())

    def get(self, user: str) -> tuple[list[float], str]:
        mult, mode = self._state.get(user, ([1.0] * self.n_tags, MASK_SOFTMAX))
        return list(mult), mode

    def set(self, user: str, multipliers: list[float], mode: str) -> None:
        self._state[user] = (list(multipliers), mode)
        self._append({"op": "set", "user": user, "multipliers": list(multipliers), "mode": mode})

    def reset(self, user: str) -> None:
        self._state.pop(user, None)
        self._append({"op": "reset", "user": user})


class RecommenderService:
    """Steering operations for the evaluation users of one fixed checkpoint."""

    def __init__(
        self,
        model: PrototypeRecommender,
        catalog: Catalog,
        pairs: list[FoldInPair],
        sessions: SessionStore | None = None,
        clip_urls: list[str | None] | None = None,
    ) -> None:
        if catalog.n_tags != model.config.n_tags or catalog.n_songs != model.config.n_songs:
            raise ValueError("catalog does not match the model checkpoint")
        self.model = model
        self.catalog = catalog
        self.pairs = {p.user_id: p for p in pairs}
        self.sessions = sessions if sessions is not None else SessionStore(catalog.n_tags)
        self.clip_urls = clip_urls if clip_urls else [None] * catalog.n_tags

    # -- helpers --------------------------------------------------------------

    def _pair(self, user_id: str) -> FoldInPair:
        try:
            return self.pairs[user_id]
        except KeyError:
            raise ApiError(404, "user_not_found", f"unknown user {user_id!r}") from None

    def _history(self, pair: FoldInPair) -> np.ndarray:
        return self.catalog.features[np.asarray(pair.fold_in)]

    def _validate_multipliers(self, raw) -> list[float]:
        if not isinstance(raw, (list, tuple)) or len(raw) != self.catalog.n_tags:
            raise ApiError(
                400,
                "bad_multipliers",
                f"multipliers must be a list of {self.catalog.n_tags} numbers",
            )
        try:
            m = [float(x) for x in raw]
        except (TypeError, ValueError):
            raise ApiError(400, "bad_multipliers", "multipliers must be numbers") from None
        if any(not np.isfinite(x) or x < 0 for x in m):
            raise ApiError(400, "bad_multipliers", "multipliers must be finite and >= 0")
        if not any(x > 0 for x in m):
            raise ApiError(400, "bad_multipliers", "at least one multiplier must be positive")
        return m

    def _validate_mode(self, mode) -> str:
        if mode not in INTERVENTION_MODES:
            raise ApiError(400, "bad_mode", f"mode must be one of {INTERVENTION_MODES}")
        return mode

    def _validate_k(self, k) -> int:
        try:
            k = int(k)
        except (TypeError, ValueError):
            raise ApiError(400, "bad_k", "k must be an integer") from None
        if k < 1:
            raise ApiError(400, "bad_k", "k must be >= 1")
        return k

    def _item(self, index: int, score: float) -> dict:
        tags = sorted(self.catalog.song_tags[index])
        return {
            "song_id": self.catalog.songs[index],
            "index": index,
            "score": score,
            "tags": tags,
            "tag_names": [self.catalog.tag_vocab[t].name for t in tags],
        }

    # -- payloads -------------------------------------------------------------

    def tags_payload(self) -> dict:
        return {
            "api_version": API_VERSION,
            "tags": [
                {
                    "id": i,
                    "name": tag.name,
                    "category": tag.category,
                    "prototype_song": self.model.bank.source_songs[i],
                    "clip_url": self.clip_urls[i],
                }
                for i, tag in enumerate(self.catalog.tag_vocab)
            ],
        }

    def profile_payload(self, user_id: str, raw: bool = False) -> dict:
        from .data import TAG_CATEGORIES

        pair = self._pair(user_id)
        profile = self.model.attend(self._history(pair))
        weights = profile.normalized_weights
        multipliers, mode = self.sessions.get(user_id)
        rank = {c: i for i, c in enumerate(TAG_CATEGORIES)}
        order = sorted(
            range(self.catalog.n_tags),
            key=lambda i: (rank[self.catalog.tag_vocab[i].category], i),
        )
        payload = {
            "api_version": API_VERSION,
            "user_id": user_id,
            "history_size": profile.history_size,
            "weights": [
                {
                    "tag_id": i,
                    "name": self.catalog.tag_vocab[i].name,
                    "category": self.catalog.tag_vocab[i].category,
                    "weight": float(weights[i]),
                }
                for i in order
            ],
            "multipliers": multipliers,
            "mode": mode,
        }
        if raw:
            payload["raw_head_weights"] = [
                [float(x) for x in row] for row in profile.head_weights
            ]
        return payload

    def recommendations_payload(self, user_id: str, k) -> dict:
        k = self._validate_k(k)
        pair = self._pair(user_id)
        with self.sessions.lock(user_id):
            multipliers, mode = self.sessions.get(user_id)
        active = any(x != 1.0 for x in multipliers)
        if active:
            profile = self.model.attend(
                self._history(pair), multipliers=np.asarray(multipliers), mode=mode
            )
        else:
            profile = self.model.attend(self._history(pair))
        rec = recommend(self.model.decode(profile), pair.fold_in, k)
        return {
            "api_version": API_VERSION,
            "user_id": user_id,
            "k": k,
            "items": [self._item(i, s) for i, s in rec.items],
            "truncated": rec.truncated,
            "multipliers_active": active,
        }

    def whatif_payload(self, user_id: str, multipliers, k, mode=MASK_SOFTMAX) -> dict:
        pair = self._pair(user_id)
        m = self._validate_multipliers(multipliers)
        mode = self._validate_mode(mode)
        k = self._validate_k(k)
        result = apply_intervention(
            self.model,
            self.catalog,
            self._history(pair),
            Intervention(tuple(m), mode),
            pair.fold_in,
            k,
        )
        return {
            "api_version": API_VERSION,
            "user_id": user_id,
            "k": result.k,
            "mode": mode,
            "multipliers": m,
            "original": [self._item(i, s) for i, s in result.original],
            "modified": [self._item(i, s) for i, s in result.modified],
            "tag_distribution_before": [float(x) for x in result.tags_before],
            "tag_distribution_after": [float(x) for x in result.tags_after],
            "hellinger_shift": result.hellinger_shift,
            "overlap": result.overlap,
            "truncated": result.truncated,
        }

    def multipliers_payload(self, user_id: str) -> dict:
        multipliers, mode = self.sessions.get(user_id)
        return {
            "api_version": API_VERSION,
            "user_id": user_id,
            "multipliers": multipliers,
            "mode": mode,
        }

    def set_multipliers(self, user_id: str, multipliers, mode=MASK_SOFTMAX) -> dict:
        self._pair(user_id)
        m = self._validate_multipliers(multipliers)
        mode = self._validate_mode(mode)
        with self.sessions.lock(user_id):
            self.sessions.set(user_id, m, mode)
        return self.multipliers_payload(user_id)

    def reset_multipliers(self, user_id: str) -> dict:
        self._pair(user_id)
        with self.sessions.lock(user_id):
            self.sessions.reset(user_id)
        return self.multipliers_payload(user_id)


def create_app(service: RecommenderService, ui_dir=None):
    from fastapi import Body, FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="protorec steering service", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"api_version": API_VERSION, "code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "api_version": API_VERSION,
                "code": "bad_multipliers",
                "message": "malformed request body",
            },
        )

    @app.get("/api/tags")
    def get_tags():
        return service.tags_payload()

    @app.get("/api/users/{user_id}/profile")
    def get_profile(user_id: str, raw: int = 0):
        return service.profile_payload(user_id, raw=bool(raw))

    @app.get("/api/users/{user_id}/recommendations")
    def get_recommendations(user_id: str, k: int = 20):
        return service.recommendations_payload(user_id, k)

    @app.post("/api/users/{user_id}/whatif")
    def post_whatif(user_id: str, payload: dict = Body(...)):
        if not isinstance(payload, dict) or "multipliers" not in payload:
            raise ApiError(400, "bad_multipliers", "body must carry a multipliers list")
        return service.whatif_payload(
            user_id,
            payload.get("multipliers"),
            payload.get("k", 20),
            payload.get("mode", MASK_SOFTMAX),
        )

    @app.put("/api/users/{user_id}/multipliers")
    def put_multipliers(user_id: str, payload: dict = Body(...)):
        if not isinstance(payload, dict) or "multipliers" not in payload:
            raise ApiError(400, "bad_multipliers", "body must carry a multipliers list")
        return service.set_multipliers(
            user_id, payload.get("multipliers"), payload.get("mode", MASK_SOFTMAX)
        )

    @app.delete("/api/users/{user_id}/multipliers")
    def delete_multipliers(user_id: str):
        return service.reset_multipliers(user_id)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
