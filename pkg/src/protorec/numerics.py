"""Deterministic float64 math substrate: kernels, parameter slots, Adam, gradient checks.

Training code owns a ParameterStore exclusively (single writer). Forward-only
evaluation may share read-only snapshots of the parameter arrays across threads.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

CHECKPOINT_MAGIC = b"PRRECCKP"
CHECKPOINT_VERSION = 1


def assert_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


def _label_entropy(label: str) -> int:
    # stable across platforms and processes, unlike hash()
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


class RngStream:
    """Named, seeded random stream.

    The same (seed, label) always yields the same draw sequence; the counter
    records how far the stream has advanced. Distinct labels give independent
    streams, so init / shuffle / denoise draws never interact.
    """

    def __init__(self, seed: int, label: str = "root") -> None:
        self.seed = int(seed)
        self.label = label
        self.counter = 0
        self._gen = np.random.default_rng(
            np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, _label_entropy(label)])
        )

    def spawn(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")

    def _tick(self) -> np.random.Generator:
        self.counter += 1
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._tick().uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._tick().normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._tick().integers(low, high, size)

    def permutation(self, n):
        return self._tick().permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self._tick().choice(a, size=size, replace=replace, p=p)

    def multinomial(self, n, pvals):
        return self._tick().multinomial(n, pvals)

    def dirichlet(self, alpha):
        return self._tick().dirichlet(alpha)


def xavier_uniform(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """Glorot-uniform init, the usual choice for tanh / linear stacks."""
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def softmax(v: np.ndarray) -> np.ndarray:
    """Stable softmax of a 1-D vector (max subtracted before exponentiation)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("softmax expects a non-empty 1-D vector")
    assert_finite(v, "softmax input")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax.

    -inf entries are allowed and get exactly zero weight (masked support);
    a row whose entries are all -inf is an error.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise ValueError("softmax_rows expects a non-empty 2-D matrix")
    if np.any(np.isnan(m)) or np.any(np.isposinf(m)):
        raise FloatingPointError("NaN/+inf in softmax input")
    row_max = np.max(m, axis=1, keepdims=True)
    if np.any(np.isneginf(row_max)):
        raise ValueError("softmax row has empty support")
    e = np.exp(m - row_max)  # exp(-inf) == 0 handles masked entries
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class Slot:
    """One named parameter with its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray


class ParameterStore:
    """Named parameter slots sharing a single Adam step counter."""

    def __init__(self) -> None:
        self._slots: dict[str, Slot] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._slots:
            raise KeyError(f"duplicate parameter slot {name!r}")
        value = np.ascontiguousarray(value, dtype=np.float64)
        assert_finite(value, name)
        self._slots[name] = Slot(
            value, np.zeros_like(value), np.zeros_like(value), np.zeros_like(value)
        )
        return value

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def __getitem__(self, name: str) -> np.ndarray:
        return self._slots[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._slots[name].grad

    def names(self) -> list[str]:
        return list(self._slots)

    def zero_grads(self) -> None:
        for slot in self._slots.values():
            slot.grad[...] = 0.0

    def n_parameters(self) -> int:
        return sum(slot.value.size for slot in self._slots.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: slot.value.copy() for name, slot in self._slots.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, slot in self._slots.items():
            if name not in values:
                raise KeyError(f"missing value for slot {name!r}")
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != slot.value.shape:
                raise ValueError(f"shape mismatch for slot {name!r}")
            slot.value[...] = arr


def adam_step(store: ParameterStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Bias-corrected Adam update over every slot; gradients are zeroed after.

    With lr=0 the parameter values are untouched (moments still advance).
    """
    for name in store.names():
        if np.any(np.isnan(store.grad(name))):
            raise FloatingPointError(f"NaN gradient in slot {name!r}")
    store.step += 1
    c1 = 1.0 - beta1 ** store.step
    c2 = 1.0 - beta2 ** store.step
    for name in store.names():
        slot = store._slots[name]
        slot.m *= beta1
        slot.m += (1.0 - beta1) * slot.grad
        slot.v *= beta2
        slot.v += (1.0 - beta2) * np.square(slot.grad)
        slot.value -= lr * (slot.m / c1) / (np.sqrt(slot.v / c2) + eps)
        slot.grad[...] = 0.0


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_slot: str
    worst_index: int
    n_probes: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    loss_fn: Callable[[bool], float],
    store: ParameterStore,
    n_probes: int = 200,
    h: float = 1e-5,
    tol: float = 1e-4,
    rng: RngStream | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_fn(want_grads) must return the scalar loss; with want_grads=True it
    also accumulates analytic gradients into the store (zeroed here first).
    Relative error per probe is |a - f| / max(|a|, |f|, 1e-8). Probed values
    are restored exactly.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    rng = rng if rng is not None else RngStream(0, "gradcheck")
    store.zero_grads()
    loss_fn(True)
    analytic = {name: store.grad(name).copy() for name in store.names()}
    store.zero_grads()

    sizes = [(name, store[name].size) for name in store.names()]
    total = sum(size for _, size in sizes)
    if n_probes >= total:
        probes = [(name, i) for name, size in sizes for i in range(size)]
    else:
        flat = np.sort(rng.choice(total, size=n_probes, replace=False))
        probes = []
        offset = 0
        it = iter(sizes)
        name, size = next(it)
        for f in flat:
            while f >= offset + size:
                offset += size
                name, size = next(it)
            probes.append((name, int(f - offset)))

    max_rel, worst_slot, worst_index = 0.0, "", -1
    for name, idx in probes:
        value = store[name]
        orig = value.flat[idx]
        value.flat[idx] = orig + h
        loss_plus = loss_fn(False)
        value.flat[idx] = orig - h
        loss_minus = loss_fn(False)
        value.flat[idx] = orig
        fd = (loss_plus - loss_minus) / (2.0 * h)
        a = analytic[name].flat[idx]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        if rel > max_rel:
            max_rel, worst_slot, worst_index = rel, name, idx
    return GradCheckReport(max_rel, worst_slot, worst_index, len(probes), tol)


def write_checkpoint(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Binary checkpoint: magic, version, JSON header, raw float64 payloads, sha256."""
    meta = dict(header)
    meta["format_version"] = CHECKPOINT_VERSION
    meta["slots"] = [[name, list(arr.shape)] for name, arr in arrays.items()]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<Q", len(blob))
    out += blob
    for arr in arrays.values():
        out += np.ascontiguousarray(arr).astype("<f8").tobytes()
    out += hashlib.sha256(bytes(out)).digest()
    Path(path).write_bytes(bytes(out))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 12 + 32:
        raise ValueError(f"checkpoint file too short: {path}")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError(f"checkpoint checksum mismatch: {path}")
    if body[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    pos = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    header = json.loads(body[pos : pos + blob_len].decode("utf-8"))
    pos += blob_len
    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["slots"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).astype(np.float64)
        arrays[name] = arr.reshape(shape)
        pos += count * 8
    if pos != len(body):
        raise ValueError("checkpoint payload length mismatch")
    return header, arrays
