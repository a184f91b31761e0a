"""The sample / test / train / converge loop.

:func:`run_single` stops as soon as a surrogate tests valid against the
stored data.  :func:`run_asymptotic` keeps sampling one iteration at a
time until the surrogate is test valid *and* the convergence condition
holds, so the final surrogate has been checked against data it was not
fitted to.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import rbf
from .distance import GRAPHICAL, MODES, DistanceReport, report
from .models import Model, get_model
from .optimize import SolverConfig
from .rbf import FitError, Hyperparams, Surrogate
from .samplers import SamplerConfig, sample_iteration
from .store import EvalStore
from .validity import (
    ExtremaRegistry,
    IterationSummary,
    ToleranceConfig,
    converged,
    omega,
    preset,
    quality_delta,
    test_valid,
    train_valid,
    update_extrema,
)

__all__ = [
    "WorkflowConfig",
    "WorkflowResult",
    "TrainOutcome",
    "TrainFailure",
    "SMOOTH_SCHEDULE",
    "hyper_schedule",
    "train_until_valid",
    "run_single",
    "run_asymptotic",
    "summary_csv",
]

log = logging.getLogger(__name__)

SMOOTH_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)
SEEDS_PER_SMOOTH = 2

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
TRAIN_EXHAUSTED = "train-exhausted"


class TrainFailure(RuntimeError):
    """Every candidate fit in a training phase failed."""


@dataclass(frozen=True)
class WorkflowConfig:
    model_id: str
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    test_tol: ToleranceConfig = field(default_factory=lambda: preset("loose"))
    train_tol: ToleranceConfig = field(default_factory=lambda: preset("loose"))
    mode: str = GRAPHICAL
    train_budget: int = 12
    max_iterations: int = 100
    rng_seed: int = 0
    noise_sigma: float = 1e-8
    report_cap: int | None = None  # graphical test reports on at most this many points
    min_separation: float = 1e-5  # fit-center thinning radius, as a fraction of the box diagonal
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.train_budget < 1 or self.max_iterations < 1:
            raise ValueError("train_budget and max_iterations must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown distance mode {self.mode!r}")
        if self.min_separation < 0:
            raise ValueError("min_separation must be >= 0")
        if self.report_cap is not None and self.report_cap < 1:
            raise ValueError("report_cap must be >= 1")

    def model(self) -> Model:
        return get_model(self.model_id, self.bounds)


@dataclass
class TrainOutcome:
    surrogate: Surrogate
    report: DistanceReport
    train_valid: bool
    attempts: int

    @property
    def delta(self) -> float:
        return quality_delta(self.report)


@dataclass
class WorkflowResult:
    summaries: list[IterationSummary]
    surrogate: Surrogate | None
    termination: str
    total_evals: int
    model_calls: int
    registry: ExtremaRegistry | None = None

    def csv(self) -> str:
        return summary_csv(self.summaries)


def summary_csv(summaries) -> str:
    lines = [IterationSummary.CSV_HEADER] + [s.csv_row() for s in summaries]
    return "\n".join(lines) + "\n"


def hyper_schedule(budget: int, rng_seed: int = 0, phase: int = 0, noise_sigma: float = 1e-8) -> list[Hyperparams]:
    """Candidate hyperparameters in trial order, truncated to ``budget``.

    Smoothing values run from none upward; each is tried with two jitter
    seeds derived from ``(rng_seed, phase, k)``.
    """
    out = []
    for s in SMOOTH_SCHEDULE:
        for k in range(SEEDS_PER_SMOOTH):
            if len(out) == budget:
                return out
            seed = int(np.random.SeedSequence([rng_seed, phase, len(out)]).generate_state(1)[0])
            out.append(Hyperparams(smooth=s, noise_sigma=noise_sigma, noise_seed=seed))
    return out


def _keep_rows(store: EvalStore, registry: ExtremaRegistry | None) -> list[int]:
    if registry is None:
        return []
    rows = (store.index_of(x) for x, _, _ in registry.entries)
    return sorted({r for r in rows if r is not None})


def _test_report(s: Surrogate, X, Y, mode, bounds, cap, rng_seed, phase) -> DistanceReport:
    if cap is not None and X.shape[0] > cap:
        rng = np.random.default_rng([rng_seed, phase, 1])
        idx = np.sort(rng.choice(X.shape[0], size=cap, replace=False))
        X, Y = X[idx], Y[idx]
    return report(s, (X, Y), mode, bounds)


def train_until_valid(
    store: EvalStore,
    train_tol: ToleranceConfig,
    mode: str = GRAPHICAL,
    bounds=None,
    budget: int = 12,
    *,
    rng_seed: int = 0,
    phase: int = 0,
    noise_sigma: float = 1e-8,
    incumbent: TrainOutcome | None = None,
    registry: ExtremaRegistry | None = None,
    surrogate_path: str | os.PathLike | None = None,
    predicate: Callable[[DistanceReport, ToleranceConfig], bool] = train_valid,
    min_separation: float = 0.0,
) -> TrainOutcome:
    """Fit candidates from the hyperparameter schedule until one is train valid.

    Each candidate is scored by ``delta`` over all stored data and the best
    so far is kept.  ``incumbent`` (already scored on the current data) sets
    the bar: the surrogate file is rewritten only when a candidate beats it.
    With the budget spent the best candidate comes back with
    ``train_valid=False``.  ``min_separation`` is an absolute distance.
    """
    X, Y, _ = store.arrays()
    d = store.dim
    if X.shape[0] < d + 1:
        raise ValueError(f"training needs at least {d + 1} records, store has {X.shape[0]}")
    keep = _keep_rows(store, registry)
    best = incumbent
    failures = []
    attempts = 0
    for hyper in hyper_schedule(budget, rng_seed, phase, noise_sigma):
        attempts += 1
        try:
            s = rbf.fit_arrays(X, Y, hyper, keep=keep, bounds=bounds, min_separation=min_separation)
        except FitError as exc:
            failures.append(exc)
            log.debug("fit failed (%s): %s", hyper, exc)
            continue
        rep = report(s, (X, Y), mode, bounds)
        ok = predicate(rep, train_tol)
        if best is None or quality_delta(rep) < best.delta:
            best = TrainOutcome(s, rep, ok, attempts)
            if surrogate_path is not None:
                rbf.save(s, surrogate_path)
        if best.train_valid or (best.attempts == 0 and predicate(best.report, train_tol)):
            best.attempts = attempts
            best.train_valid = True
            return best
    if best is None:
        raise TrainFailure(f"all {attempts} candidate fits failed; last error: {failures[-1]}")
    best.attempts = attempts
    best.train_valid = predicate(best.report, train_tol)
    return best


def _prepare(model, cfg: WorkflowConfig, store, surrogate_path):
    model = model if model is not None else cfg.model()
    bounds = cfg.bounds if cfg.bounds is not None else model.bounds
    store = store if store is not None else EvalStore(model.dim)
    if store.dim != model.dim:
        raise ValueError(f"store dim {store.dim} != model dim {model.dim}")
    # a resumed run must not replay the draws already in the store
    first = store.max_iteration() + 1
    rng = np.random.default_rng([cfg.rng_seed, cfg.sampler.rng_seed] + ([first] if first else []))
    return model, bounds, store, rng


def _separation(cfg: WorkflowConfig, bounds) -> float:
    b = np.asarray(bounds, dtype=float)
    return cfg.min_separation * float(np.linalg.norm(b[:, 1] - b[:, 0]))


def _score(rep: DistanceReport, iters: np.ndarray, i: int) -> float:
    mask = iters == i
    return rep.subset(mask).ave if mask.any() else math.nan


def run_asymptotic(
    model: Model | None,
    cfg: WorkflowConfig,
    *,
    store: EvalStore | None = None,
    surrogate_path: str | os.PathLike | None = None,
    on_iteration: Callable[[IterationSummary], None] | None = None,
) -> WorkflowResult:
    """Iterate sample, train, test and score until valid and converged.

    An iteration whose new data the current surrogate already fits (test
    valid on all data) keeps that surrogate; otherwise training restarts
    from the schedule with the current surrogate as the bar to beat.
    The iteration score is the mean distance to that iteration's points.
    """
    model, bounds, store, rng = _prepare(model, cfg, store, surrogate_path)
    registry = ExtremaRegistry.for_bounds(bounds)
    directed = cfg.sampler.directed
    summaries: list[IterationSummary] = []
    scores: list[float] = []
    current: TrainOutcome | None = None
    first = store.max_iteration() + 1

    for i in range(first, first + cfg.max_iterations):
        outcome = sample_iteration(model, store, cfg.sampler, cfg.solver, bounds, i, rng)
        X, Y, iters = store.arrays()

        full = cfg.report_cap is None
        tested = None
        if current is not None:
            tested = _test_report(current.surrogate, X, Y, cfg.mode, bounds, cfg.report_cap, cfg.rng_seed, i)
            if test_valid(tested, cfg.test_tol):
                current = TrainOutcome(current.surrogate, tested, train_valid(tested, cfg.train_tol), 0)
            else:
                # a capped report is not a delta over all data, so it cannot set the bar
                current = TrainOutcome(current.surrogate, tested, False, 0) if full else None
                tested = None
        if tested is None:
            current = train_until_valid(
                store, cfg.train_tol, cfg.mode, bounds, cfg.train_budget,
                rng_seed=cfg.rng_seed, phase=i, noise_sigma=cfg.noise_sigma,
                incumbent=current, registry=registry, surrogate_path=surrogate_path,
                min_separation=_separation(cfg, bounds),
            )
            tested = current.report if full else _test_report(
                current.surrogate, X, Y, cfg.mode, bounds, cfg.report_cap, cfg.rng_seed, i
            )
        valid = test_valid(tested, cfg.test_tol)
        if full:
            score = _score(tested, iters, i)
        else:
            score = report(current.surrogate, (X[iters == i], Y[iters == i]), cfg.mode, bounds).ave
        scores.append(score)
        # registry iterations count from this run's start, like ``scores``
        new_extrema = update_extrema(registry, outcome.traces, i - first) if directed else 0
        conv = converged(scores, registry, cfg.test_tol, directed)
        via = ""
        if conv:
            via = "omega" if omega(registry, len(scores) - 1, cfg.test_tol.M, directed) else "tol_stop"
        summary = IterationSummary(
            i, outcome.new_evals, len(store), score, valid, current.delta, new_extrema, conv, via
        )
        summaries.append(summary)
        log.info("iter %d: %d evals, score %.3g, valid %s, converged %s", i, len(store), score, valid, conv)
        if on_iteration is not None:
            on_iteration(summary)
        if valid and conv:
            return WorkflowResult(summaries, current.surrogate, CONVERGED, len(store), store.model_calls, registry)

    term = MAX_ITERATIONS if current is not None and current.train_valid else TRAIN_EXHAUSTED
    return WorkflowResult(summaries, current.surrogate if current else None, term, len(store), store.model_calls, registry)


def run_single(
    model: Model | None,
    cfg: WorkflowConfig,
    *,
    store: EvalStore | None = None,
    surrogate: Surrogate | None = None,
    surrogate_path: str | os.PathLike | None = None,
    train_predicate: Callable[[DistanceReport, ToleranceConfig], bool] = train_valid,
) -> WorkflowResult:
    """Test a stored surrogate and stop if valid, else train and sample.

    A surrogate already at ``surrogate_path`` is loaded and tested first.
    Sampling happens only when there is too little data to train or when
    training could not produce a train-valid surrogate.
    """
    model, bounds, store, rng = _prepare(model, cfg, store, surrogate_path)
    if surrogate is None and surrogate_path is not None and Path(surrogate_path).exists():
        surrogate = rbf.load(surrogate_path)
    summaries: list[IterationSummary] = []
    current: TrainOutcome | None = None
    last_train_valid = True
    i = store.max_iteration() + 1

    for step in range(cfg.max_iterations + 1):
        X, Y, iters = store.arrays()
        if surrogate is not None and X.shape[0]:
            rep = report(surrogate, (X, Y), cfg.mode, bounds)
            if test_valid(rep, cfg.test_tol):
                if summaries:
                    s = summaries[-1]
                    summaries[-1] = IterationSummary(
                        s.iteration, s.new_evals, s.total_evals, s.score, True, rep.sum, s.new_extrema, True, "test"
                    )
                return WorkflowResult(summaries, surrogate, CONVERGED, len(store), store.model_calls)
            current = TrainOutcome(surrogate, rep, train_predicate(rep, cfg.train_tol), 0)
        if step == cfg.max_iterations:
            break

        new = 0
        if X.shape[0] < model.dim + 1 or not last_train_valid:
            # too little data, or training alone could not satisfy the train tolerance
            new = sample_iteration(model, store, cfg.sampler, cfg.solver, bounds, i, rng).new_evals
            if new and current is not None:
                # the incumbent's report must cover the new data to serve as the bar
                rep = report(current.surrogate, store.arrays()[:2], cfg.mode, bounds)
                current = TrainOutcome(current.surrogate, rep, train_predicate(rep, cfg.train_tol), 0)
        try:
            current = train_until_valid(
                store, cfg.train_tol, cfg.mode, bounds, cfg.train_budget,
                rng_seed=cfg.rng_seed, phase=i, noise_sigma=cfg.noise_sigma,
                incumbent=current if current is not None and current.surrogate is surrogate else None,
                surrogate_path=surrogate_path, predicate=train_predicate,
                min_separation=_separation(cfg, bounds),
            )
            surrogate = current.surrogate
            last_train_valid = current.train_valid
        except TrainFailure as exc:
            log.info("training failed: %s", exc)
            last_train_valid = False
        _, _, iters = store.arrays()
        score = _score(current.report, iters, i) if current is not None and new else math.nan
        summaries.append(
            IterationSummary(
                i, new, len(store), score, False,
                current.delta if current is not None else math.nan, 0, False,
            )
        )
        if new:
            i += 1

    term = TRAIN_EXHAUSTED if not last_train_valid else MAX_ITERATIONS
    return WorkflowResult(summaries, surrogate, term, len(store), store.model_calls)
