"""Distances between a surrogate and evaluated data points.

``vertical`` mode measures ``|yhat(x') - y|``.  ``graphical`` mode measures
the distance from ``(x', y)`` to the surrogate's graph,
``min_x |yhat(x) - y| + ||x - x'||``, found by a bounded simplex search
seeded at ``x'``.  The vertical value is always admissible (take
``x = x'``), so graphical results never exceed it.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optimize import SolverConfig, _bounds_arrays, _simplices, minimize_batch
from .rbf import Surrogate

__all__ = [
    "VERTICAL",
    "GRAPHICAL",
    "DistanceReport",
    "vertical_distance",
    "graphical_distance",
    "graphical_distances",
    "report",
]

VERTICAL = "vertical"
GRAPHICAL = "graphical"
MODES = (VERTICAL, GRAPHICAL)

INNER_CONFIG = SolverConfig(xtol=1e-6, ftol=1e-6, max_iterations=200)
# search tolerances are relative to each point's vertical distance
REL_TOL = 1e-6
SCREEN_STEPS = 8  # probes per ray, at least
SCREEN_BUDGET = 32  # probes per ray times dimension, at most
REFINE_STEPS = 4  # regula falsi steps per bracketed crossing
LINE_STARTS = 4  # local minima of g along rays line-searched per point
LINE_STEPS = 16  # golden-section steps per line search
_GOLD = (math.sqrt(5) - 1) / 2
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DistanceReport:
    per_point: np.ndarray
    ave: float
    max: float
    sum: float
    mode: str = GRAPHICAL

    @classmethod
    def from_distances(cls, d, mode: str = GRAPHICAL) -> "DistanceReport":
        d = np.asarray(d, dtype=float)
        if d.size == 0:
            raise ValueError("empty distance report")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite and non-negative")
        total = math.fsum(d.tolist())
        return cls(d, total / d.size, float(d.max()), total, mode)

    def __len__(self) -> int:
        return self.per_point.size

    def subset(self, idx) -> "DistanceReport":
        return DistanceReport.from_distances(self.per_point[idx], self.mode)

    def to_csv(self, seqs: Sequence[int] | None = None) -> str:
        seqs = range(len(self)) if seqs is None else seqs
        buf = io.StringIO()
        buf.write("seq,delta_y\n")
        for seq, d in zip(seqs, self.per_point.tolist()):
            buf.write(f"{seq},{d!r}\n")
        buf.write(f"ave,{self.ave!r}\nmax,{self.max!r}\nsum,{self.sum!r}\n")
        return buf.getvalue()


def _check_dim(s: Surrogate, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != s.dim:
        raise ValueError(f"dimension mismatch: surrogate dim {s.dim}, got shape {X.shape}")


def vertical_distance(s: Surrogate, point) -> float:
    x, y = point
    x = np.asarray(x, dtype=float)
    _check_dim(s, x[None, :] if x.ndim == 1 else x)
    return abs(s(x) - float(y))


def _resolve_bounds(s: Surrogate, bounds, d: int):
    if bounds is None:
        bounds = s.bounds
    if bounds is None:
        raise ValueError("graphical distance needs bounds")
    return _bounds_arrays(bounds, d)


def graphical_distances(s: Surrogate, X, Y, bounds=None, config: SolverConfig = INNER_CONFIG) -> np.ndarray:
    """Graphical distance for every row of ``X`` with outputs ``Y``.

    Each point gets its own simplex search seeded at ``x'`` with an initial
    step equal to its vertical distance: no point farther than that from
    ``x'`` can beat the vertical value.  The searches advance together so
    one prediction pass serves the whole batch.  A point's result does not
    depend on the rest of the batch beyond floating-point rounding, which
    can move it within the search tolerance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    _check_dim(s, X)
    P, d = X.shape
    lo, hi = _resolve_bounds(s, bounds, d)
    if np.any(X < lo) or np.any(X > hi):
        raise ValueError("data point outside bounds")

    v = np.abs(s.predict_many(X) - Y)
    # below the rounding noise of yhat a search cannot improve on v
    scale = s.rounding_scale(X) if hasattr(s, "rounding_scale") else np.abs(Y)
    noise = 16 * _EPS * (scale + np.abs(Y))

    out = v.copy()
    todo = np.flatnonzero(v > noise)
    if not todo.size:
        return out
    Xt, Yt, vt = X[todo], Y[todo], v[todo]

    def g(Z, owners):
        gap = np.abs(s.predict_many(Z) - Yt[owners])
        return gap + np.sqrt(np.sum((Z - Xt[owners]) ** 2, axis=1))

    # no point beyond v can win, and none beyond the box exists
    reach = np.minimum(vt[:, None], hi - lo)
    seeds = _screen(s, Xt, Yt, vt, reach, lo, hi, g)
    simplices = _simplices(seeds, lo, hi, reach / screen_steps(d))
    tol = np.maximum(REL_TOL * vt, noise[todo])
    _, fb, _, _ = minimize_batch(g, simplices, lo, hi, config, xtol=tol, ftol=tol)
    out[todo] = np.minimum(fb, vt)
    return out


def screen_steps(d: int) -> int:
    """Probes per ray: finer in low dimensions, where they are cheap."""
    return max(SCREEN_STEPS, SCREEN_BUDGET // d)


def _screen(s, Xt, Yt, vt, reach, lo, hi, g) -> np.ndarray:
    """Best seed for the simplex search among probes inside the ball of radius ``v``.

    Probes run along rays from ``x'``: both directions of every coordinate
    axis, spaced by ``reach`` (``v`` capped at the box width), plus, when
    the surrogate provides gradients, the line along which the linearized
    surrogate closes the vertical gap.  Where ``yhat - y`` changes sign
    along a ray, a few regula falsi steps locate the crossing, whose
    distance term is all that remains of ``g``.
    """
    P, d = Xt.shape
    dirs = []
    for i in range(d):
        e = np.zeros((P, d))
        e[:, i] = reach[:, i]
        dirs += [e, -e]
    if hasattr(s, "gradient_many"):
        grad = s.gradient_many(Xt)
        gn = np.linalg.norm(grad, axis=1)
        sign = np.sign(s.predict_many(Xt) - Yt)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(gn[:, None] > 0, -sign[:, None] * grad / gn[:, None], 0.0)
            span = np.minimum(reach.max(axis=1), np.where(gn > 0, 2 * vt / gn, 0.0))
        dirs.append(unit * span[:, None])
    D = np.stack(dirs, axis=1)  # (P, R, d)
    R = D.shape[1]
    steps = screen_steps(d)
    frac = np.arange(steps + 1) / steps
    pts = np.clip(Xt[:, None, None, :] + frac[None, None, :, None] * D[:, :, None, :], lo, hi)
    resid = (s.predict_many(pts.reshape(-1, d)) - np.repeat(Yt, R * frac.size)).reshape(P, R, frac.size)
    gv = np.abs(resid) + np.linalg.norm(pts - Xt[:, None, None, :], axis=-1)

    flat = gv.reshape(P, -1)
    k = np.argmin(flat, axis=1)
    best = pts.reshape(P, -1, d)[np.arange(P), k]
    best_g = flat[np.arange(P), k]

    # line-search the brackets of the best local minima of g along the rays
    lm = np.ones_like(gv, dtype=bool)
    lm[:, :, 1:] &= gv[:, :, 1:] <= gv[:, :, :-1]
    lm[:, :, :-1] &= gv[:, :, :-1] <= gv[:, :, 1:]
    cand_g = np.where(lm, gv, np.inf).reshape(P, -1)
    K = min(LINE_STARTS, cand_g.shape[1])
    top = np.argpartition(cand_g, K - 1, axis=1)[:, :K]
    pi, flat_idx = np.nonzero(np.isfinite(np.take_along_axis(cand_g, top, axis=1)))
    if pi.size:
        ri, j = np.divmod(top[pi, flat_idx], frac.size)
        a = frac[np.maximum(j - 1, 0)]
        b = frac[np.minimum(j + 1, steps)]
        origin, direc, yt = Xt[pi], D[pi, ri], Yt[pi]

        def along(t):
            z = np.clip(origin + t[:, None] * direc, lo, hi)
            return z, np.abs(s.predict_many(z) - yt) + np.linalg.norm(z - origin, axis=1)

        c, e = b - _GOLD * (b - a), a + _GOLD * (b - a)
        gc, ge = along(c)[1], along(e)[1]
        for _ in range(LINE_STEPS):
            left = gc < ge
            b = np.where(left, e, b)
            a = np.where(left, a, c)
            e_new = np.where(left, c, a + _GOLD * (b - a))
            c_new = np.where(left, b - _GOLD * (b - a), e)
            ge_new = np.where(left, gc, np.nan)
            gc_new = np.where(left, np.nan, ge)
            probe = np.where(left, c_new, e_new)
            gp = along(probe)[1]
            gc = np.where(left, gp, gc_new)
            ge = np.where(left, ge_new, gp)
            c, e = c_new, e_new
        zm, gm = along(np.where(gc < ge, c, e))
        _improve(best, best_g, pi, zm, gm)

    change = resid[:, :, :-1] * resid[:, :, 1:] < 0
    pi, ri = np.nonzero(change.any(axis=2))
    if pi.size:
        j = np.argmax(change[pi, ri], axis=1)  # first crossing on the ray
        za, zb = pts[pi, ri, j], pts[pi, ri, j + 1]
        ra, rb = resid[pi, ri, j], resid[pi, ri, j + 1]
        for _ in range(REFINE_STEPS):
            zm = za + (zb - za) * (ra / (ra - rb))[:, None]
            rm = s.predict_many(zm) - Yt[pi]
            left = rm * ra > 0
            za = np.where(left[:, None], zm, za)
            ra = np.where(left, rm, ra)
            zb = np.where(left[:, None], zb, zm)
            rb = np.where(left, rb, rm)
        zm = np.clip(za + (zb - za) * (ra / (ra - rb))[:, None], lo, hi)
        gm = np.abs(s.predict_many(zm) - Yt[pi]) + np.linalg.norm(zm - Xt[pi], axis=1)
        _improve(best, best_g, pi, zm, gm)
    return best


def _improve(best, best_g, owners, z, gz):
    """Replace each owner's seed by its best candidate in ``z`` when better."""
    order = np.lexsort((gz, owners))
    first = order[np.r_[True, owners[order][1:] != owners[order][:-1]]]
    q = owners[first]
    win = gz[first] < best_g[q]
    best[q[win]] = z[first][win]
    best_g[q[win]] = gz[first][win]


def graphical_distance(s: Surrogate, point, bounds=None) -> float:
    x, y = point
    return float(graphical_distances(s, np.asarray(x, dtype=float)[None, :], [y], bounds)[0])


def report(s: Surrogate, data, mode: str = GRAPHICAL, bounds=None) -> DistanceReport:
    """Per-point distances from ``s`` to ``data`` plus their aggregates.

    ``data`` is either a list of ``(x, y)`` pairs or an ``(X, Y)`` tuple of
    arrays.
    """
    X, Y = as_arrays(data)
    if X.shape[0] == 0:
        raise ValueError("empty data")
    _check_dim(s, X)
    if mode == VERTICAL:
        d = np.abs(s.predict_many(X) - Y)
    elif mode == GRAPHICAL:
        d = graphical_distances(s, X, Y, bounds)
    else:
        raise ValueError(f"unknown distance mode {mode!r}")
    return DistanceReport.from_distances(d, mode)


def as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2 and np.ndim(data[1]) == 1 and np.ndim(data[0]) == 2:
        return np.asarray(data[0], dtype=float), np.asarray(data[1], dtype=float)
    data = list(data)
    if not data:
        return np.empty((0, 0)), np.empty(0)
    X = np.array([np.asarray(x, dtype=float) for x, _ in data])
    Y = np.array([float(y) for _, y in data])
    return X, Y
