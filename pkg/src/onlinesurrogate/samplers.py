"""Samplers that feed new model evaluations into the store.

Traditional sampling draws whole batches without looking at the response.
Optimizer-directed sampling uses each drawn point as the start of a
Nelder-Mead run and records every probe the solver makes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .models import Model
from .optimize import SolverConfig, SolverTrace, run_ensemble
from .store import EvalStore

__all__ = [
    "SamplerConfig",
    "SampleOutcome",
    "random_batch",
    "lattice_starts",
    "sparsity_starts",
    "draw",
    "sample_iteration",
]

STRATEGIES = ("random", "lattice", "sparsity")


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "random"
    directed: bool = False
    n_s: int | tuple[int, ...] = 16
    batch_size: int = 500
    warm: int = 1000
    pool_size: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if isinstance(self.n_s, (tuple, list)):
            if self.strategy != "lattice":
                raise ValueError("per-dimension n_s is only meaningful for the lattice strategy")
            if any(int(k) < 1 for k in self.n_s):
                raise ValueError("n_s entries must be >= 1")
            object.__setattr__(self, "n_s", tuple(int(k) for k in self.n_s))
        elif int(self.n_s) < 1:
            raise ValueError("n_s must be >= 1")
        if self.warm < 1 or self.batch_size < 1:
            raise ValueError("warm and batch_size must be >= 1")

    @property
    def ensemble_size(self) -> int:
        return math.prod(self.n_s) if isinstance(self.n_s, tuple) else int(self.n_s)


@dataclass
class SampleOutcome:
    new_evals: int
    traces: list[SolverTrace] = field(default_factory=list)


def _bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    return b[:, 0], b[:, 1]


def random_batch(bounds, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = _bounds(bounds)
    return rng.uniform(lo, hi, size=(n, lo.size))


def _int_root_ceil(n: int, d: int) -> int:
    b = max(1, int(round(n ** (1.0 / d))))
    while b**d < n:
        b += 1
    while b > 1 and (b - 1) ** d >= n:
        b -= 1
    return b


def lattice_starts(bounds, n_s, rng: np.random.Generator) -> np.ndarray:
    """One uniform start inside each cell of a grid over the box.

    A tuple gives bins per dimension and every cell gets a start.  A scalar
    builds the smallest uniform grid with at least ``n_s`` cells and fills
    ``n_s`` distinct cells chosen at random.
    """
    lo, hi = _bounds(bounds)
    d = lo.size
    if isinstance(n_s, (tuple, list)):
        bins = tuple(int(k) for k in n_s)
        if len(bins) != d:
            raise ValueError(f"n_s has {len(bins)} entries for a {d}-D box")
        cells = np.array(list(product(*(range(k) for k in bins))), dtype=float)
    else:
        n_s = int(n_s)
        b = _int_root_ceil(n_s, d)
        bins = (b,) * d
        total = b**d
        assert n_s <= total
        pick = np.sort(rng.choice(total, size=n_s, replace=False))
        cells = np.array(np.unravel_index(pick, bins), dtype=float).T
    width = (hi - lo) / np.array(bins, dtype=float)
    u = rng.uniform(size=cells.shape)
    return np.clip(lo + (cells + u) * width, lo, hi)


def sparsity_starts(bounds, existing, k: int, rng: np.random.Generator, pool_size: int | None = None) -> np.ndarray:
    """Greedy farthest-point picks from a uniform candidate pool.

    Each pick maximizes the distance to the nearest of ``existing`` and the
    points already picked; ties go to the lowest pool index.
    """
    lo, hi = _bounds(bounds)
    d = lo.size
    if k < 1:
        raise ValueError("k must be >= 1")
    pool_size = pool_size or 10 * k * d
    if pool_size < k:
        raise ValueError("pool_size must be >= k")
    pool = rng.uniform(lo, hi, size=(pool_size, d))
    existing = np.asarray(existing, dtype=float).reshape(-1, d)
    if existing.shape[0]:
        nearest, _ = cKDTree(existing).query(pool)
    else:
        nearest = np.full(pool_size, np.inf)
    chosen = []
    for _ in range(k):
        j = int(np.argmax(nearest))
        chosen.append(j)
        nearest = np.minimum(nearest, np.sqrt(np.sum((pool - pool[j]) ** 2, axis=1)))
        nearest[j] = -np.inf
    return pool[chosen]


def draw(config: SamplerConfig, bounds, n: int, store: EvalStore, rng: np.random.Generator) -> np.ndarray:
    """``n`` points under the configured strategy (lattice uses its own n_s)."""
    if config.strategy == "random":
        return random_batch(bounds, n, rng)
    if config.strategy == "lattice":
        return lattice_starts(bounds, config.n_s if isinstance(config.n_s, tuple) else n, rng)
    existing = store.arrays()[0]
    return sparsity_starts(bounds, existing, n, rng, config.pool_size)


def sample_iteration(
    model: Model,
    store: EvalStore,
    config: SamplerConfig,
    solver: SolverConfig | None,
    bounds,
    iteration: int,
    rng: np.random.Generator,
) -> SampleOutcome:
    """Add at least ``warm`` new evaluations to ``store`` for one iteration.

    Traditional mode records whole batches of ``batch_size`` points.
    Directed mode launches waves of ``n_s`` solvers from fresh starts until
    the warm count is reached, recording starts and every solver probe.
    A model failure stops the iteration; evaluations made so far stay stored.
    """
    if store.dim != model.dim:
        raise ValueError(f"store dim {store.dim} != model dim {model.dim}")
    before = len(store)
    outcome = SampleOutcome(0)

    if not config.directed:
        while len(store) - before < config.warm:
            n = min(config.batch_size, config.warm - (len(store) - before))
            if config.strategy == "lattice" and isinstance(config.n_s, tuple):
                n = config.ensemble_size
            for x in draw(config, bounds, n, store, rng):
                store.cached_evaluate(model, x, iteration, "sampler-start")
            if len(store) == before:
                break
        outcome.new_evals = len(store) - before
        return outcome

    solver = solver or SolverConfig()
    n_s = config.ensemble_size
    objective = lambda x: store.cached_evaluate(model, x, iteration, "solver-step")  # noqa: E731
    for _ in range(math.ceil(config.warm / n_s)):
        starts = draw(config, bounds, n_s, store, rng)
        for x in starts:
            store.cached_evaluate(model, x, iteration, "sampler-start")
        traces = run_ensemble(objective, starts, bounds, solver)
        outcome.traces.extend(traces)
        failed = [t for t in traces if t.error is not None]
        if failed:
            outcome.new_evals = len(store) - before
            raise failed[0].error
        if len(store) - before >= config.warm:
            break
    outcome.new_evals = len(store) - before
    return outcome
