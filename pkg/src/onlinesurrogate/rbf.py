"""Thin-plate radial basis function surrogate.

The surrogate is ``yhat(x) = sum_j beta_j * phi(||x - c_j||)`` with
``phi(r) = r**2 log r`` and no polynomial tail.  Centers are the training
inputs, optionally jittered by a tiny seeded Gaussian perturbation so that
repeated inputs do not make the system singular.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dgecon
from scipy.spatial import cKDTree

__all__ = [
    "Hyperparams",
    "Surrogate",
    "FitError",
    "SurrogateFormatError",
    "thin_plate",
    "fit",
    "fit_arrays",
    "predict",
    "farthest_point_subsample",
    "separated_subset",
    "fingerprint",
    "serialize",
    "deserialize",
    "save",
    "load",
    "FORMAT_VERSION",
    "N_MAX",
    "RCOND_MIN",
]

FORMAT_VERSION = "onlinesurrogate.rbf/1"
KERNEL = "thin-plate"
N_MAX = 4000
RCOND_MIN = 1e-14
_CHUNK = 1 << 21  # matrix elements per prediction block


class FitError(ValueError):
    """The interpolation system is singular or too badly conditioned."""

    def __init__(self, msg: str, rcond: float = 0.0):
        super().__init__(msg)
        self.rcond = rcond


class SurrogateFormatError(ValueError):
    pass


def thin_plate(r):
    """``r**2 log(r)``, continued by its limit 0 at ``r = 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("thin_plate: negative radius")
    out = np.zeros_like(r)
    np.log(r, out=out, where=r > 0)
    out *= r * r
    return out if out.ndim else float(out)


def _phi_sq(r2: np.ndarray) -> np.ndarray:
    # phi in terms of r**2: 0.5 r2 log r2, in place
    out = np.zeros_like(r2)
    np.log(r2, out=out, where=r2 > 0)
    out *= r2
    out *= 0.5
    return out


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # per-coordinate accumulation keeps small separations exact
    r2 = np.subtract.outer(A[:, 0], B[:, 0])
    r2 *= r2
    for k in range(1, A.shape[1]):
        t = np.subtract.outer(A[:, k], B[:, k])
        t *= t
        r2 += t
    return r2


@dataclass(frozen=True)
class Hyperparams:
    smooth: float = 0.0
    noise_sigma: float = 1e-8
    noise_seed: int = 0

    def __post_init__(self):
        if self.smooth < 0 or self.noise_sigma < 0:
            raise ValueError("smooth and noise_sigma must be non-negative")


@dataclass(frozen=True, eq=False)
class Surrogate:
    centers: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    hyper: Hyperparams
    fingerprint: tuple[int, str]
    kernel: str = KERNEL
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        self.centers.setflags(write=False)
        self.coefficients.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    def __call__(self, x) -> float:
        return predict(self, x)

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: surrogate dim {self.dim}, got shape {X.shape}")
        out = np.empty(X.shape[0])
        step = max(1, _CHUNK // max(1, self.n_centers))
        for s in range(0, X.shape[0], step):
            out[s : s + step] = _phi_sq(_sqdist(X[s : s + step], self.centers)) @ self.coefficients
        return out

    def rounding_scale(self, X) -> np.ndarray:
        """``sum_j |beta_j phi_j(x)|`` per row: the magnitude rounding acts on."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        absb = np.abs(self.coefficients)
        step = max(1, _CHUNK // max(1, self.n_centers))
        for s in range(0, X.shape[0], step):
            out[s : s + step] = np.abs(_phi_sq(_sqdist(X[s : s + step], self.centers))) @ absb
        return out

    def gradient_many(self, X) -> np.ndarray:
        """Analytic gradient of the surrogate at each row of ``X``."""
        X = np.asarray(X, dtype=float)
        out = np.empty_like(X)
        step = max(1, _CHUNK // max(1, self.n_centers))
        for s in range(0, X.shape[0], step):
            xs = X[s : s + step]
            r2 = _sqdist(xs, self.centers)
            # d/dx of 0.5 r2 log r2 is (log r2 + 1) (x - c); zero at r = 0
            w = np.zeros_like(r2)
            np.log(r2, out=w, where=r2 > 0)
            w += 1.0
            w[r2 == 0] = 0.0
            w *= self.coefficients
            out[s : s + step] = xs * w.sum(axis=1)[:, None] - w @ self.centers
        return out

    def is_stale(self, X, Y) -> bool:
        """True when ``(X, Y)`` is not the data this surrogate was fit on."""
        return fingerprint(X, Y) != self.fingerprint


def predict(s: Surrogate, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.dim,):
        raise ValueError(f"dimension mismatch: surrogate dim {s.dim}, got shape {x.shape}")
    return float(s.predict_many(x[None, :])[0])


def fingerprint(X, Y) -> tuple[int, str]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    h = hashlib.sha256(X.tobytes())
    h.update(Y.tobytes())
    return int(Y.shape[0]), h.hexdigest()


def farthest_point_subsample(X: np.ndarray, n: int, keep: Sequence[int] = ()) -> np.ndarray:
    """Greedy max-min selection of ``n`` row indices of ``X``.

    Rows in ``keep`` are always selected (and seed the greedy pass); with
    nothing to keep, the first row seeds it.  Ties go to the lowest index.
    Returned indices are sorted.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if n >= N:
        return np.arange(N)
    chosen = list(dict.fromkeys(int(k) for k in keep)) or [0]
    if len(chosen) >= n:
        return np.sort(np.array(chosen[:n]))
    mind = np.full(N, np.inf)
    for k in chosen:
        mind = np.minimum(mind, np.sum((X - X[k]) ** 2, axis=1))
    while len(chosen) < n:
        k = int(np.argmax(mind))
        chosen.append(k)
        mind = np.minimum(mind, np.sum((X - X[k]) ** 2, axis=1))
    return np.sort(np.array(chosen))


def separated_subset(X: np.ndarray, radius: float, keep: Sequence[int] = ()) -> np.ndarray:
    """Rows of ``X`` no two of which lie within ``radius`` of each other.

    Rows in ``keep`` claim their neighbourhoods first, then the rest in
    index order.  Returned indices are sorted.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if radius <= 0 or N < 2:
        return np.arange(N)
    tree = cKDTree(X)
    alive = np.ones(N, dtype=bool)
    chosen = []
    for i in list(dict.fromkeys(int(k) for k in keep)) + list(range(N)):
        if not alive[i]:
            continue
        chosen.append(i)
        alive[tree.query_ball_point(X[i], radius)] = False
    return np.sort(np.array(chosen))


def fit_arrays(
    X,
    Y,
    hyper: Hyperparams | None = None,
    n_max: int | None = N_MAX,
    keep: Sequence[int] = (),
    bounds=None,
    min_separation: float = 0.0,
) -> Surrogate:
    """Fit a thin-plate surrogate to inputs ``X`` (N, d) and outputs ``Y`` (N,).

    Solves ``(M - smooth I) beta = Y`` with ``M_ij = phi(||c_i - c_j||)`` by LU
    with partial pivoting.  Raises :class:`FitError` when the estimated
    reciprocal condition number falls below ``RCOND_MIN``.  With more than
    ``n_max`` rows the fit uses a farthest-point subsample that always
    contains the rows listed in ``keep``.  ``min_separation`` first thins
    near-coincident rows, which make the system hopelessly ill-conditioned.
    Given ``bounds``, jitter that would leave the box is reflected back in.
    """
    hyper = hyper or Hyperparams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    N, d = X.shape
    if Y.shape[0] != N:
        raise ValueError(f"{N} inputs but {Y.shape[0]} outputs")
    if N < d + 1:
        raise ValueError(f"need at least dim + 1 = {d + 1} points, got {N}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("training data contains non-finite values")
    fp = fingerprint(X, Y)

    keep = np.asarray(keep, dtype=int)
    if min_separation > 0:
        idx = separated_subset(X, min_separation, keep)
        keep = np.flatnonzero(np.isin(idx, keep))
        X, Y = X[idx], Y[idx]
        N = X.shape[0]
    if n_max is not None and N > n_max:
        idx = farthest_point_subsample(X, n_max, keep)
        X, Y = X[idx], Y[idx]
        N = X.shape[0]

    centers = X.copy()
    if hyper.noise_sigma > 0:
        scale = hyper.noise_sigma * (X.max(axis=0) - X.min(axis=0))
        rng = np.random.default_rng(hyper.noise_seed)
        step = rng.normal(size=X.shape) * scale
        if bounds is not None:
            lo, hi = np.asarray(bounds, dtype=float).T
            out = (X + step < lo) | (X + step > hi)
            step[out] = -step[out]
        centers += step

    M = _phi_sq(_sqdist(centers, centers))
    if N <= 200 and not np.array_equal(M, M.T):
        raise FitError("system matrix is not symmetric")
    if hyper.smooth:
        M[np.diag_indices_from(M)] -= hyper.smooth
    anorm = np.abs(M).sum(axis=0).max()
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # singularity is reported through rcond below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    rcond = 0.0 if anorm == 0 else float(dgecon(lu, anorm, norm="1")[0])
    if not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise FitError(
            f"singular or ill-conditioned system: rcond = {rcond:.3g} < {RCOND_MIN:g} "
            f"(N = {N}, smooth = {hyper.smooth:g}, noise_sigma = {hyper.noise_sigma:g})",
            rcond,
        )
    beta = sla.lu_solve((lu, piv), Y, check_finite=False)
    if not np.all(np.isfinite(beta)):
        raise FitError("non-finite coefficients", rcond)
    if bounds is not None:
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    return Surrogate(centers, beta, hyper, fp, KERNEL, bounds)


def fit(data: Sequence[tuple[Sequence[float], float]], hyper: Hyperparams | None = None, **kw) -> Surrogate:
    """Fit from a list of ``(x, y)`` pairs; see :func:`fit_arrays`."""
    if not len(data):
        raise ValueError("no training data")
    X = np.array([np.asarray(x, dtype=float) for x, _ in data])
    if X.ndim != 2:
        raise ValueError("inconsistent input dimensions")
    Y = np.array([float(y) for _, y in data])
    return fit_arrays(X, Y, hyper, **kw)


def serialize(s: Surrogate) -> str:
    doc = {
        "format": FORMAT_VERSION,
        "kernel": s.kernel,
        "dim": s.dim,
        "hyper": {"smooth": s.hyper.smooth, "noise_sigma": s.hyper.noise_sigma, "noise_seed": s.hyper.noise_seed},
        "fingerprint": {"n": s.fingerprint[0], "sha256": s.fingerprint[1]},
        "bounds": None if s.bounds is None else [list(b) for b in s.bounds],
        "centers": s.centers.tolist(),
        "coefficients": s.coefficients.tolist(),
    }
    return json.dumps(doc)


def deserialize(document: str) -> Surrogate:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SurrogateFormatError(f"malformed surrogate document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SurrogateFormatError("surrogate document must be an object")
    if doc.get("format") != FORMAT_VERSION:
        raise SurrogateFormatError(f"unsupported format {doc.get('format')!r}, expected {FORMAT_VERSION!r}")
    try:
        if doc["kernel"] != KERNEL:
            raise SurrogateFormatError(f"unsupported kernel {doc['kernel']!r}")
        centers = np.array(doc["centers"], dtype=float)
        beta = np.array(doc["coefficients"], dtype=float)
        dim = int(doc["dim"])
        h = doc["hyper"]
        hyper = Hyperparams(float(h["smooth"]), float(h["noise_sigma"]), int(h["noise_seed"]))
        fp = (int(doc["fingerprint"]["n"]), str(doc["fingerprint"]["sha256"]))
        bounds = doc.get("bounds")
        bounds = None if bounds is None else tuple((float(lo), float(hi)) for lo, hi in bounds)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SurrogateFormatError):
            raise
        raise SurrogateFormatError(f"malformed surrogate document: {exc}") from exc
    if centers.ndim != 2 or centers.shape[1] != dim or beta.shape != (centers.shape[0],):
        raise SurrogateFormatError("centers/coefficients shapes are inconsistent")
    return Surrogate(centers, beta, hyper, fp, KERNEL, bounds)


def save(s: Surrogate, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(serialize(s))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> Surrogate:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())


def with_bounds(s: Surrogate, bounds) -> Surrogate:
    return replace(s, bounds=tuple((float(lo), float(hi)) for lo, hi in bounds))
