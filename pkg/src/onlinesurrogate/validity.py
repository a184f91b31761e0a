"""Validity predicates, the training metric, scores and the extrema registry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .distance import DistanceReport, report
from .optimize import TOLERANCE, SolverTrace

__all__ = [
    "ToleranceConfig",
    "PRESETS",
    "preset",
    "ExtremaRegistry",
    "IterationSummary",
    "test_valid",
    "train_valid",
    "quality_delta",
    "iteration_score",
    "update_extrema",
    "omega",
    "converged",
]

AVE_MAX = "ave-max"
SUM_MAX = "sum-max"


@dataclass(frozen=True)
class ToleranceConfig:
    predicate_form: str = AVE_MAX
    tol_ave: float = 1e-5
    tol_max: float = 1e-4
    tol_sum: float = 1e-3
    tol_stop: float = 2e-4
    M: int = 3
    N: int = 3

    def __post_init__(self):
        if self.predicate_form not in (AVE_MAX, SUM_MAX):
            raise ValueError(f"unknown predicate form {self.predicate_form!r}")
        for name in ("tol_ave", "tol_max", "tol_sum", "tol_stop"):
            # tol_stop may be 0 (omega-only) or inf (stop after one iteration)
            if getattr(self, name) < 0 or (name != "tol_stop" and not getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")

    def with_(self, **kw) -> "ToleranceConfig":
        return replace(self, **kw)


PRESETS = {
    "loose": ToleranceConfig(AVE_MAX, tol_ave=1e-5, tol_max=1e-4, tol_stop=2e-4),
    "strict": ToleranceConfig(AVE_MAX, tol_ave=1e-7, tol_max=1e-6, tol_stop=2e-6),
}


def preset(name: str, **overrides) -> ToleranceConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown tolerance preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def test_valid(rep: DistanceReport, cfg: ToleranceConfig) -> bool:
    if cfg.predicate_form == AVE_MAX:
        return rep.ave <= cfg.tol_ave and rep.max <= cfg.tol_max
    return rep.sum <= cfg.tol_sum and rep.max <= cfg.tol_max


test_valid.__test__ = False  # not a pytest test despite the name


def train_valid(rep: DistanceReport, cfg: ToleranceConfig) -> bool:
    return test_valid(rep, cfg)


def quality_delta(rep: DistanceReport) -> float:
    return rep.sum


def iteration_score(surrogate, store, iteration: int, bounds=None, mode: str = "graphical") -> float:
    """Mean distance from ``surrogate`` to the points sampled in ``iteration`` only."""
    data = store.query_iteration(iteration)
    if not data:
        raise ValueError(f"no data recorded in iteration {iteration}")
    return report(surrogate, data, mode, bounds).ave


@dataclass
class ExtremaRegistry:
    dedupe_radius: float
    entries: list[tuple[np.ndarray, float, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.dedupe_radius > 0:
            raise ValueError("dedupe_radius must be positive")

    @classmethod
    def for_bounds(cls, bounds, factor: float = 1e-3) -> "ExtremaRegistry":
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        return cls(factor * float(np.linalg.norm(b[:, 1] - b[:, 0])))

    def __len__(self) -> int:
        return len(self.entries)

    def iterations(self) -> list[int]:
        return [it for _, _, it in self.entries]

    def insert(self, x, value: float, iteration: int) -> bool:
        x = np.asarray(x, dtype=float)
        for loc, _, _ in self.entries:
            if np.linalg.norm(loc - x) <= self.dedupe_radius:
                return False
        self.entries.append((x.copy(), float(value), int(iteration)))
        return True


def update_extrema(registry: ExtremaRegistry, traces: Iterable[SolverTrace], iteration: int) -> int:
    """Insert tolerance-terminated solver terminals not already registered."""
    added = 0
    for t in traces:
        if t.terminated_by != TOLERANCE:
            continue
        added += registry.insert(t.x_best, t.f_best, iteration)
    return added


def omega(registry: ExtremaRegistry, current_iteration: int, M: int, directed: bool = True) -> bool:
    """True when no extremum was registered in the last ``M`` iterations.

    Needs at least ``M`` completed iterations of history.  Traditional
    sampling never feeds the registry, so it never satisfies omega.
    """
    if not directed or current_iteration + 1 < M:
        return False
    window = range(current_iteration - M + 1, current_iteration + 1)
    return not any(it in window for it in registry.iterations())


def converged(
    scores: Sequence[float],
    registry: ExtremaRegistry,
    cfg: ToleranceConfig,
    directed: bool = True,
) -> bool:
    """Omega(M) or the worst of the last ``N`` iteration scores within ``tol_stop``.

    ``scores[i]`` is the score of iteration ``i``; the current iteration is
    the last one.  With fewer than ``N`` scores all of them are used.
    """
    if not scores:
        raise ValueError("converged needs at least one completed iteration")
    current = len(scores) - 1
    if omega(registry, current, cfg.M, directed):
        return True
    window = [s for s in scores[-cfg.N :]]
    return all(math.isfinite(s) for s in window) and max(window) <= cfg.tol_stop


@dataclass(frozen=True)
class IterationSummary:
    iteration: int
    new_evals: int
    total_evals: int
    score: float
    test_valid: bool
    delta: float
    new_extrema: int
    converged: bool
    via: str = ""  # "omega", "tol_stop" or "" when not converged

    CSV_HEADER = "iter,new_evals,total_evals,score,delta,test_valid,new_extrema,converged"

    def csv_row(self) -> str:
        return (
            f"{self.iteration},{self.new_evals},{self.total_evals},{self.score!r},{self.delta!r},"
            f"{str(self.test_valid).lower()},{self.new_extrema},{str(self.converged).lower()}"
        )
