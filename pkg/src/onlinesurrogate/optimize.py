"""Bounded Nelder-Mead simplex search and a simple solver ensemble.

The simplex core is written for a batch of independent problems that advance
in lock step, each with its own simplex, termination state and iteration
count.  :func:`nelder_mead` runs a batch of one and records every objective
call; the distance module uses the batch form directly to minimize many
small problems at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SolverConfig",
    "SolverTrace",
    "SolverError",
    "initial_simplex",
    "nelder_mead",
    "run_ensemble",
    "minimize_batch",
]

TOLERANCE = "tolerance"
MAX_ITERATIONS = "max-iterations"
ERROR = "error"


@dataclass(frozen=True)
class SolverConfig:
    xtol: float = 1e-4
    ftol: float = 1e-4
    max_iterations: int | None = None  # None -> 200 * dim
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5

    def __post_init__(self):
        if self.xtol <= 0 or self.ftol <= 0:
            raise ValueError("tolerances must be positive")
        if self.reflection <= 0 or self.expansion <= 1:
            raise ValueError("need reflection > 0 and expansion > 1")
        if not (0 < self.contraction < 1 and 0 < self.shrink < 1):
            raise ValueError("contraction and shrink must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def iteration_cap(self, dim: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 200 * dim


@dataclass
class SolverTrace:
    evaluations: list[tuple[np.ndarray, float]]
    x_best: np.ndarray
    f_best: float
    iterations_used: int
    terminated_by: str
    error: BaseException | None = field(default=None, repr=False)

    @property
    def terminal(self) -> tuple[np.ndarray, float]:
        return self.x_best, self.f_best

    def __len__(self) -> int:
        return len(self.evaluations)


class SolverError(RuntimeError):
    """Objective failure inside a solver; ``trace`` holds the partial run."""

    def __init__(self, msg: str, trace: SolverTrace):
        super().__init__(msg)
        self.trace = trace


def _bounds_arrays(bounds, d: int) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if b.shape[0] != d:
        raise ValueError(f"expected {d} bounds, got {b.shape[0]}")
    return b[:, 0].copy(), b[:, 1].copy()


def _simplices(X0: np.ndarray, lo: np.ndarray, hi: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Vectorized simplex construction; ``X0`` and ``steps`` are (P, d)."""
    P, d = X0.shape
    S = np.repeat(X0[:, None, :], d + 1, axis=1)
    rows = np.arange(d)
    vert = np.clip(X0 + steps, lo, hi)
    # a move that clipping collapses is flipped toward the interior
    flipped = np.clip(X0 - steps, lo, hi)
    vert = np.where(vert != X0, vert, flipped)
    if np.any(vert == X0):
        raise ValueError("bounds too tight to build a non-degenerate simplex")
    S[:, rows + 1, rows] = vert
    return S


def initial_simplex(x0, bounds, step=None) -> np.ndarray:
    """Simplex of ``dim + 1`` vertices around ``x0``.

    Vertex ``i`` moves coordinate ``i - 1`` by 5% of its value (0.00025 when
    it is zero), or by ``step`` when given.  Moves that clipping would undo
    at a bound are flipped toward the interior.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    lo, hi = _bounds_arrays(bounds, d)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 outside bounds")
    if step is None:
        steps = np.where(x0 != 0, 0.05 * x0, 0.00025)
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), (d,)).copy()
    return _simplices(x0[None, :], lo, hi, steps[None, :])[0]


def minimize_batch(
    fbatch: Callable[[np.ndarray], np.ndarray],
    simplices: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    config: SolverConfig,
    xtol=None,
    ftol=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run independent bounded Nelder-Mead searches in lock step.

    ``simplices`` is (P, d+1, d).  ``fbatch(Z, owners)`` maps a (k, d)
    array to k objective values; ``owners[i]`` is the problem row ``Z[i]``
    belongs to.  ``xtol``/``ftol`` may be per-problem arrays and
    default to the config values.  Returns ``(x_best, f_best, iterations,
    converged)`` where ``converged`` is True for tolerance termination.
    """
    S = np.array(simplices, dtype=float)
    P, n1, d = S.shape
    n = n1 - 1
    xtol = np.broadcast_to(config.xtol if xtol is None else np.asarray(xtol, float), (P,))
    ftol = np.broadcast_to(config.ftol if ftol is None else np.asarray(ftol, float), (P,))
    cap = config.iteration_cap(d)
    rho, chi, psi, sigma = config.reflection, config.expansion, config.contraction, config.shrink

    F = np.asarray(fbatch(S.reshape(P * n1, d), np.repeat(np.arange(P), n1)), dtype=float).reshape(P, n1)
    iters = np.zeros(P, dtype=int)
    converged = np.zeros(P, dtype=bool)
    active = np.arange(P)
    clip = lambda X: np.clip(X, lo, hi)  # noqa: E731

    while active.size:
        s, f = S[active], F[active]
        order = np.argsort(f, axis=1, kind="stable")
        s = np.take_along_axis(s, order[:, :, None], axis=1)
        f = np.take_along_axis(f, order, axis=1)
        S[active], F[active] = s, f

        xspread = np.max(np.abs(s[:, 1:, :] - s[:, :1, :]), axis=(1, 2))
        fspread = np.max(np.abs(f[:, 1:] - f[:, :1]), axis=1)
        done_tol = (xspread <= xtol[active]) & (fspread <= ftol[active])
        converged[active[done_tol]] = True
        keep = ~done_tol & (iters[active] < cap)
        active, s, f = active[keep], s[keep], f[keep]
        if not active.size:
            break
        iters[active] += 1

        xbar = s[:, :-1, :].mean(axis=1)
        xw = s[:, -1, :]
        xr = clip((1 + rho) * xbar - rho * xw)
        fr = np.asarray(fbatch(xr, active), dtype=float)

        new_x = xr.copy()
        new_f = fr.copy()
        expand = fr < f[:, 0]
        if np.any(expand):
            xe = clip((1 + rho * chi) * xbar[expand] - rho * chi * xw[expand])
            fe = np.asarray(fbatch(xe, active[expand]), dtype=float)
            better = fe < fr[expand]
            ix = np.flatnonzero(expand)[better]
            new_x[ix], new_f[ix] = xe[better], fe[better]

        accept = expand | (fr < f[:, -2])
        contract = ~accept
        do_shrink = np.zeros(active.size, dtype=bool)
        if np.any(contract):
            outside = contract & (fr < f[:, -1])
            ci = np.flatnonzero(contract)
            out_c = outside[ci]
            coef = np.where(out_c, psi * rho, -psi)[:, None]
            xc = clip((1 + coef) * xbar[ci] - coef * xw[ci])
            fc = np.asarray(fbatch(xc, active[ci]), dtype=float)
            ok = np.where(out_c, fc <= fr[ci], fc < f[ci, -1])
            new_x[ci[ok]], new_f[ci[ok]] = xc[ok], fc[ok]
            accept[ci[ok]] = True
            do_shrink[ci[~ok]] = True

        ai = np.flatnonzero(accept)
        S[active[ai], -1, :] = new_x[ai]
        F[active[ai], -1] = new_f[ai]

        if np.any(do_shrink):
            si = np.flatnonzero(do_shrink)
            ss = s[si]
            shrunk = clip(ss[:, :1, :] + sigma * (ss[:, 1:, :] - ss[:, :1, :]))
            rows = active[si]
            fs = np.asarray(fbatch(shrunk.reshape(-1, d), np.repeat(rows, n)), dtype=float).reshape(si.size, n)
            S[rows, 1:, :] = shrunk
            F[rows, 1:] = fs

    best = np.argmin(F, axis=1)
    xb = S[np.arange(P), best]
    fb = F[np.arange(P), best]
    return xb, fb, iters, converged


def nelder_mead(objective: Callable, x0, bounds, config: SolverConfig | None = None) -> SolverTrace:
    """Minimize a scalar objective from ``x0`` inside a box.

    Every objective call is recorded, in order, in the returned trace.
    Iteration stops when the simplex spread is within ``xtol`` in every
    coordinate and within ``ftol`` in value, or at the iteration cap.
    """
    config = config or SolverConfig()
    x0 = np.asarray(x0, dtype=float)
    lo, hi = _bounds_arrays(bounds, x0.shape[0])
    simplex = initial_simplex(x0, bounds)
    evaluations: list[tuple[np.ndarray, float]] = []

    def fbatch(X, _owners):
        out = np.empty(X.shape[0])
        for k, x in enumerate(X):
            x = x.copy()
            fx = float(objective(x))
            evaluations.append((x, fx))
            out[k] = fx
        return out

    try:
        xb, fb, iters, conv = minimize_batch(fbatch, simplex[None], lo, hi, config)
    except Exception as exc:
        if evaluations:
            i = int(np.argmin([e[1] for e in evaluations]))
            x_best, f_best = evaluations[i]
        else:
            x_best, f_best = x0, float("nan")
        trace = SolverTrace(evaluations, x_best, f_best, 0, ERROR, exc)
        raise SolverError(f"objective failed: {exc}", trace) from exc
    return SolverTrace(
        evaluations, xb[0], float(fb[0]), int(iters[0]), TOLERANCE if conv[0] else MAX_ITERATIONS
    )


def run_ensemble(
    objective: Callable, starts: Sequence, bounds, config: SolverConfig | None = None
) -> list[SolverTrace]:
    """One independent solver per start, run in start order.

    A failing solver does not stop the others: its partial trace is returned
    with ``terminated_by == "error"`` and the exception attached.
    """
    traces = []
    for x0 in starts:
        try:
            traces.append(nelder_mead(objective, x0, bounds, config))
        except SolverError as exc:
            traces.append(exc.trace)
    return traces
