"""Append-only database of model evaluations.

Records are kept in memory and, when the store has a path, appended to a
line-delimited JSON file as they arrive.  Each line is a flat object::

    {"x": [..], "y": 1.5, "iter": 0, "src": "sampler-start", "seq": 0}

A truncated final line (e.g. after a crash mid-write) is dropped on load.
"""
from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

logger = logging.getLogger(__name__)

SOURCES = ("sampler-start", "solver-step", "probe")


@dataclass(frozen=True)
class EvalRecord:
    x: tuple[float, ...]
    y: float
    iteration: int
    source: str
    seq: int

    def to_json(self) -> str:
        # json uses repr() for floats, which round-trips exactly
        return json.dumps(
            {"x": list(self.x), "y": self.y, "iter": self.iteration, "src": self.source, "seq": self.seq},
            allow_nan=True,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(tuple(float(v) for v in d["x"]), float(d["y"]), int(d["iter"]), str(d["src"]), int(d["seq"]))


class StoreError(RuntimeError):
    pass


def _key(x: np.ndarray) -> bytes:
    return np.ascontiguousarray(x, dtype=np.float64).tobytes()


class EvalStore:
    """Evaluation database with an exact-match cache on the input vector.

    Many readers may query concurrently; writes are serialized by a lock.
    """

    def __init__(self, dim: int, path: str | os.PathLike | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.path = Path(path) if path is not None else None
        self._records: list[EvalRecord] = []
        self._index: dict[bytes, int] = {}
        self._lock = threading.Lock()
        self.model_calls = 0
        self.cache_hits = 0

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> list[EvalRecord]:
        return list(self._records)

    def record(self, x, y: float, iteration: int, source: str) -> int:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: store dim {self.dim}, got shape {x.shape}")
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}")
        if iteration < 0:
            raise ValueError("iteration must be non-negative")
        with self._lock:
            rec = EvalRecord(tuple(x.tolist()), float(y), int(iteration), source, len(self._records))
            if self.path is not None:
                try:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(rec.to_json() + "\n")
                except OSError as exc:
                    raise StoreError(f"could not append to {self.path}: {exc}") from exc
            self._records.append(rec)
            # first write wins
            self._index.setdefault(_key(x), rec.seq)
        return rec.seq

    def lookup(self, x) -> float | None:
        seq = self._index.get(_key(np.asarray(x, dtype=float)))
        return None if seq is None else self._records[seq].y

    def index_of(self, x) -> int | None:
        """Sequence number of the first record stored at exactly ``x``."""
        return self._index.get(_key(np.asarray(x, dtype=float)))

    def cached_evaluate(self, model: Callable, x, iteration: int, source: str) -> float:
        """Return the stored output for ``x`` or evaluate, record and return it."""
        x = np.asarray(x, dtype=float)
        y = self.lookup(x)
        if y is not None:
            self.cache_hits += 1
            return y
        y = float(model(x))
        self.model_calls += 1
        self.record(x, y, iteration, source)
        return y

    # -- queries --------------------------------------------------------
    def query_all(self) -> list[tuple[np.ndarray, float]]:
        return [(np.array(r.x), r.y) for r in self._records]

    def query_iteration(self, i: int) -> list[tuple[np.ndarray, float]]:
        return [(np.array(r.x), r.y) for r in self._records if r.iteration == i]

    def query_last_iterations(self, n: int) -> list[list[tuple[np.ndarray, float]]]:
        """Per-iteration partitions for the last ``n`` iterations up to the newest."""
        if not self._records or n < 1:
            return []
        last = self.max_iteration()
        return [self.query_iteration(j) for j in range(max(0, last - n + 1), last + 1)]

    def max_iteration(self) -> int:
        return max((r.iteration for r in self._records), default=-1)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All records as ``(X, Y, iterations)`` arrays, in insertion order."""
        recs = self._records
        X = np.array([r.x for r in recs], dtype=float).reshape(len(recs), self.dim)
        Y = np.array([r.y for r in recs], dtype=float)
        it = np.array([r.iteration for r in recs], dtype=int)
        return X, Y, it

    # -- persistence ----------------------------------------------------
    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self._records:
                fh.write(rec.to_json() + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike, dim: int | None = None, attach: bool = False) -> "EvalStore":
        """Read a store file.  With ``attach=True`` new records append to it."""
        path = Path(path)
        records: list[EvalRecord] = []
        lines = path.read_text(encoding="utf-8").splitlines(keepends=True) if path.exists() else []
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                rec = EvalRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if lineno == len(lines) and not line.endswith("\n"):
                    logger.warning("%s: dropping truncated last line %d", path, lineno)
                    break
                raise StoreError(f"{path}:{lineno}: malformed record ({exc})") from exc
            records.append(rec)
        if dim is None:
            if not records:
                raise StoreError(f"{path}: cannot infer dimension of an empty store")
            dim = len(records[0].x)
        store = cls(dim)
        for rec in records:
            if len(rec.x) != dim:
                raise StoreError(f"{path}: record {rec.seq} has dimension {len(rec.x)}, expected {dim}")
            if rec.seq != len(store._records):
                raise StoreError(f"{path}: non-sequential seq {rec.seq}")
            store._records.append(rec)
            store._index.setdefault(_key(np.array(rec.x)), rec.seq)
        if attach:
            store.path = path
            if lines and not lines[-1].endswith("\n"):
                # rewrite without the partial line so appends start clean
                store.save(path)
        return store

    def extend(self, records: Iterable[EvalRecord]) -> None:
        for rec in records:
            self.record(rec.x, rec.y, rec.iteration, rec.source)
