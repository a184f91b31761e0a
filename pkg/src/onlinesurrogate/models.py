"""Expensive-model interface plus the benchmark and synthetic models.

Every model here is a pure function of its input, so a :class:`Model` can be
shared freely between threads.  Models are addressable by string id through
:func:`get_model`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ModelSpec",
    "Model",
    "PlateauParams",
    "rastrigin",
    "rosenbrock",
    "hartmann6",
    "easom",
    "michalewicz",
    "plateau_pressure",
    "get_model",
    "MODEL_IDS",
]


@dataclass(frozen=True)
class ModelSpec:
    id: str
    dim: int
    bounds: tuple[tuple[float, float], ...]
    description: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if len(self.bounds) != self.dim:
            raise ValueError(f"expected {self.dim} bounds, got {len(self.bounds)}")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class Model:
    """A named scalar function ``f(x)`` restricted to a box."""

    spec: ModelSpec
    func: Callable[[np.ndarray], float] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return self.spec.bounds

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.spec.id}: expected input of length {self.dim}, got shape {x.shape}")
        if not self.spec.contains(x):
            raise ValueError(f"{self.spec.id}: input {x.tolist()} outside bounds")
        return float(self.func(x))

    def with_bounds(self, bounds: Sequence[Sequence[float]]) -> "Model":
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        spec = ModelSpec(self.spec.id, self.spec.dim, bounds, self.spec.description)
        return Model(spec, self.func)


def _vector(x, d: int | None = None, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"dimension mismatch: len({name}) = {x.shape[0]}, expected {d}")
    return x


def rastrigin(x, d: int | None = None) -> float:
    """``10 d + sum(x_i**2 - 10 cos(2 pi x_i))``; zero at the origin."""
    x = _vector(x, d)
    n = x.shape[0]
    return float(10.0 * n + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def rosenbrock(x, d: int | None = None) -> float:
    x = _vector(x, d)
    if x.shape[0] < 2:
        raise ValueError("rosenbrock needs at least 2 dimensions")
    a, b = x[:-1], x[1:]
    return float(np.sum(100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2))


# standard Hartmann-6 constants
_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ],
    dtype=float,
)


def hartmann6(x) -> float:
    x = _vector(x, 6)
    inner = np.sum(_H6_A * (x[None, :] - _H6_P) ** 2, axis=1)
    return float(-np.sum(_H6_ALPHA * np.exp(-inner)))


def easom(x) -> float:
    x = _vector(x, 2)
    r2 = (x[0] - np.pi) ** 2 + (x[1] - np.pi) ** 2
    return float(-np.cos(x[0]) * np.cos(x[1]) * np.exp(-r2))


def michalewicz(x, m: float = 10.0) -> float:
    x = _vector(x)
    if m <= 0:
        raise ValueError("steepness m must be positive")
    i = np.arange(1, x.shape[0] + 1)
    return float(-np.sum(np.sin(x) * np.sin(i * x * x / np.pi) ** (2.0 * m)))


@dataclass(frozen=True)
class PlateauParams:
    """Synthetic phase-transition pressure curve.

    ``P = a n**gamma_low`` below the plateau onset ``n1(y_p)``, constant up to
    ``n2(y_p)``, then rises again as ``P(n1) + a (n - n2)**gamma_high``.
    The onset and end are affine in the fraction ``y_p``.
    """

    gamma_low: float = 2.0
    gamma_high: float = 3.0
    amplitude: float = 1.0
    onset_intercept: float = 0.25
    onset_slope: float = 0.5
    width: float = 0.3
    nb_bounds: tuple[float, float] = (0.04, 1.6)
    yp_bounds: tuple[float, float] = (0.01, 0.6)

    def __post_init__(self):
        if min(self.gamma_low, self.gamma_high, self.amplitude, self.width) <= 0:
            raise ValueError("exponents, amplitude and width must be positive")
        if self.onset_slope <= 0:
            raise ValueError("plateau onset must increase with y_p")

    def onset(self, y_p: float) -> float:
        return self.onset_intercept + self.onset_slope * y_p

    def end(self, y_p: float) -> float:
        return self.onset(y_p) + self.width


def plateau_pressure(n_b: float, y_p: float, params: PlateauParams | None = None) -> float:
    p = params or PlateauParams()
    lo, hi = p.nb_bounds
    if not lo <= n_b <= hi:
        raise ValueError(f"n_b = {n_b} outside [{lo}, {hi}]")
    lo, hi = p.yp_bounds
    if not lo <= y_p <= hi:
        raise ValueError(f"y_p = {y_p} outside [{lo}, {hi}]")
    n1, n2 = p.onset(y_p), p.end(y_p)
    flat = p.amplitude * n1**p.gamma_low
    if n_b < n1:
        return float(p.amplitude * n_b**p.gamma_low)
    if n_b <= n2:
        return float(flat)
    return float(flat + p.amplitude * (n_b - n2) ** p.gamma_high)


def _plateau_model(params: PlateauParams) -> Model:
    spec = ModelSpec(
        "plateau",
        2,
        (params.nb_bounds, params.yp_bounds),
        "synthetic pressure plateau in (n_b, y_p)",
    )
    return Model(spec, lambda x: plateau_pressure(x[0], x[1], params))


def _box(lo: float, hi: float, d: int) -> tuple[tuple[float, float], ...]:
    return ((lo, hi),) * d


_REGISTRY: dict[str, Callable[[], Model]] = {
    "rastrigin2": lambda: Model(
        ModelSpec("rastrigin2", 2, _box(0, 10, 2), "2-D Rastrigin"), lambda x: rastrigin(x, 2)
    ),
    "rosenbrock2": lambda: Model(
        ModelSpec("rosenbrock2", 2, _box(0, 10, 2), "2-D Rosenbrock"), lambda x: rosenbrock(x, 2)
    ),
    "rosenbrock8": lambda: Model(
        ModelSpec("rosenbrock8", 8, _box(0, 10, 8), "8-D Rosenbrock"), lambda x: rosenbrock(x, 8)
    ),
    "easom": lambda: Model(ModelSpec("easom", 2, _box(0, 10, 2), "2-D Easom"), easom),
    "michalewicz2": lambda: Model(
        ModelSpec("michalewicz2", 2, _box(0, 10, 2), "2-D Michalewicz, m = 10"), michalewicz
    ),
    "hartmann6": lambda: Model(ModelSpec("hartmann6", 6, _box(-1, 1, 6), "6-D Hartmann"), hartmann6),
    "plateau": lambda: _plateau_model(PlateauParams()),
}

MODEL_IDS = tuple(_REGISTRY)


def get_model(model_id: str, bounds: Sequence[Sequence[float]] | None = None) -> Model:
    """Look up a registered model, optionally overriding its box."""
    try:
        model = _REGISTRY[model_id]()
    except KeyError:
        raise KeyError(f"unknown model id {model_id!r}; known: {', '.join(MODEL_IDS)}") from None
    if bounds is not None:
        model = model.with_bounds(bounds)
    return model
