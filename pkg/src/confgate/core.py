"""Shared primitives: inputs in [0, 1], norms, seeded streams and budgeted oracles.

Inputs are plain ``numpy`` arrays with shape ``(C, H, W)`` or ``(d,)`` and values
in ``[0, 1]``; probability vectors are 1-D float arrays summing to one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, Union

import numpy as np

_MASK64 = (1 << 64) - 1


class BudgetExhausted(RuntimeError):
    """Raised when an oracle is queried after the ledger reached its budget."""


class ShapeMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs and norms


def clamp(x: np.ndarray) -> np.ndarray:
    # ufunc pair avoids np.clip's per-call overhead on small arrays
    return np.minimum(np.maximum(x, 0.0), 1.0)


def argmax(values: Sequence[float]) -> int:
    """Index of the largest entry; ties resolve to the lowest index."""
    # np.argmax already returns the first maximal index
    return int(np.argmax(np.asarray(values)))


def distance(a: np.ndarray, b: np.ndarray, p: int = 2) -> float:
    """l_p distance between two inputs of identical shape."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    if p != 2:
        raise ValueError(f"unsupported norm p={p}; only l2 is implemented")
    return float(np.linalg.norm((a - b).ravel()))


# ---------------------------------------------------------------------------
# deterministic randomness


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary printable parts (independent of PYTHONHASHSEED)."""
    text = "\x1f".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream: ``(seed, stream)`` fixes every draw."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & _MASK64, self.stream & _MASK64])
        return np.random.Generator(np.random.PCG64(ss))


def fork_rng(master: RngStream, instance: int) -> RngStream:
    """Child stream for ``instance``; siblings never share state and depend on nothing else."""
    return RngStream(master.seed, derive_seed("fork", master.stream, instance))


# ---------------------------------------------------------------------------
# oracle access


@dataclass
class QueryLedger:
    budget: int
    used: int = 0

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def charge(self) -> None:
        if self.used >= self.budget:
            raise BudgetExhausted(f"query budget of {self.budget} exhausted")
        self.used += 1


@dataclass(frozen=True)
class Decision:
    label: int


@dataclass(frozen=True)
class Scores:
    probs: np.ndarray

    @property
    def label(self) -> int:
        return argmax(self.probs)


OracleResponse = Union[Decision, Scores]


class Oracle(Protocol):
    """Anything an attacker can query.

    ``probs`` returns the probability vector the classifier would act on for
    ``x`` (drawing defense randomness from ``rng`` if it is randomized);
    ``mode`` decides whether the attacker sees the label or the scores.
    """

    mode: str
    randomized: bool

    def probs(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray: ...


def oracle_query(oracle: Oracle, x: np.ndarray, ledger: QueryLedger,
                 rng: np.random.Generator | None = None) -> OracleResponse:
    """One attacker query: charge the ledger, then answer in the oracle's mode."""
    ledger.charge()
    p = oracle.probs(x, rng)
    if oracle.mode == "decision":
        return Decision(argmax(p))
    if oracle.mode == "score":
        return Scores(p)
    raise ValueError(f"unknown oracle mode {oracle.mode!r}")


# ---------------------------------------------------------------------------
# tensor files: raw little-endian f32 plus a JSON sidecar


def save_tensor(path: str | Path, x: np.ndarray, count: int | None = None) -> Path:
    """Write ``x`` to ``<path>.f32`` with a ``<path>.json`` sidecar.

    For a batch pass ``count`` and an array of shape ``(count, *item_shape)``;
    the sidecar ``shape`` is always the per-item shape.
    """
    path = Path(path)
    x = np.asarray(x)
    item_shape = x.shape[1:] if count is not None else x.shape
    if count is not None and x.shape[0] != count:
        raise ShapeMismatch(f"count {count} does not match leading dim {x.shape[0]}")
    blob = path.with_suffix(".f32")
    blob.parent.mkdir(parents=True, exist_ok=True)
    blob.write_bytes(x.astype("<f4").tobytes())
    meta = {"shape": list(item_shape), "count": 1 if count is None else count,
            "dtype": "f32", "layout": "chw" if len(item_shape) == 3 else "flat"}
    if count is not None:
        meta["batched"] = True
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    return blob


def load_tensor(path: str | Path) -> np.ndarray:
    """Inverse of :func:`save_tensor`; returns float64, batched if ``count > 1``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("dtype") != "f32":
        raise ValueError(f"unsupported dtype {meta.get('dtype')!r}")
    data = np.frombuffer(path.with_suffix(".f32").read_bytes(), dtype="<f4").astype(np.float64)
    shape = tuple(meta["shape"])
    count = int(meta["count"])
    if data.size != count * int(np.prod(shape)):
        raise ShapeMismatch(f"{path}: {data.size} values for count={count} shape={shape}")
    return data.reshape((count, *shape)) if count > 1 or meta.get("batched") else data.reshape(shape)
