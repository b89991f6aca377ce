"""Smooth test functions f with known differential df."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError
from .grid import DomainGrid

LOWER = "lower-bounded"
UPPER = "upper-bounded"
BOUNDED = "bounded"


@dataclass(frozen=True, eq=False)
class SmoothTestFunction:
    evaluate: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    bounded: str
    family: str = "custom"
    center: Optional[np.ndarray] = None
    curvature: float = 0.0
    offset: float = 0.0
    radius: float = np.inf

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))

    @property
    def lower_bounded(self) -> bool:
        return self.bounded in (LOWER, BOUNDED)

    @property
    def upper_bounded(self) -> bool:
        return self.bounded in (UPPER, BOUNDED)

    def describe(self) -> dict:
        return {"family": self.family,
                "center": None if self.center is None else self.center.tolist(),
                "curvature": self.curvature, "offset": self.offset,
                "radius": None if not np.isfinite(self.radius) else self.radius,
                "bounded": self.bounded}


def constant(value: float = 0.0) -> SmoothTestFunction:
    return SmoothTestFunction(lambda x: np.full(x.shape[:-1], float(value)),
                              lambda x: np.zeros_like(x), BOUNDED, "constant",
                              offset=float(value))


def _displacement(grid: Optional[DomainGrid], center: np.ndarray):
    if grid is not None and grid.periodic:
        return lambda x: grid.displacement(center, x)
    return lambda x: x - center


def paraboloid(center, coeff: float, offset: float = 0.0,
               grid: Optional[DomainGrid] = None) -> SmoothTestFunction:
    """f(x) = offset + coeff/2 |x - center|^2 (unbounded on one side)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if grid is not None and grid.periodic:
        raise ConfigurationError("paraboloids are not smooth on a torus")
    disp = _displacement(grid, center)

    def f(x):
        r = disp(x)
        return offset + 0.5 * coeff * np.sum(r * r, axis=-1)

    def df(x):
        return coeff * disp(x)

    tag = BOUNDED if coeff == 0 else (LOWER if coeff > 0 else UPPER)
    return SmoothTestFunction(f, df, tag, "paraboloid", center, coeff, offset)


def quadratic_bump(center, curvature: float, radius: float, offset: float = 0.0,
                   grid: Optional[DomainGrid] = None) -> SmoothTestFunction:
    """f(x) = offset - curvature * s(|x - center|^2), saturating beyond ``radius``.

    s(q) = rho^2/3 (1 - (1 - q/rho^2)^3) for q < rho^2 and rho^2/3 beyond, so
    s(q) ~ q near the centre and f is C^2 and constant outside the ball.
    Positive curvature gives a cap (maximum at the centre), negative a well.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if radius <= 0:
        raise ConfigurationError("bump radius must be positive")
    if grid is not None and grid.periodic and np.any(2 * radius >= grid.period):
        raise ConfigurationError("bump radius must be below half the torus period")
    rho2 = radius * radius
    disp = _displacement(grid, center)

    def f(x):
        r = disp(x)
        u = np.minimum(np.sum(r * r, axis=-1) / rho2, 1.0)
        return offset - curvature * rho2 / 3.0 * (1.0 - (1.0 - u) ** 3)

    def df(x):
        r = disp(x)
        u = np.minimum(np.sum(r * r, axis=-1) / rho2, 1.0)
        return (-2.0 * curvature * (1.0 - u) ** 2)[..., None] * r

    return SmoothTestFunction(f, df, BOUNDED, "quadratic-bump", center, curvature,
                              offset, radius)


def central_difference_error(f: SmoothTestFunction, grid: DomainGrid) -> float:
    """Max over interior nodes of |df - central difference of f|."""
    pts = grid.points
    h = grid.spacing
    err = 0.0
    for a in range(grid.dim):
        e = np.zeros(grid.dim)
        e[a] = h[a]
        fd = (f(pts + e) - f(pts - e)) / (2 * h[a])
        diff = np.abs(f.grad(pts)[:, a] - fd)
        if not grid.periodic:
            inner = np.all((pts > grid.lower + 0.5 * h) & (pts < grid.upper - 0.5 * h), axis=1)
            diff = diff[inner]
        err = max(err, float(np.max(diff, initial=0.0)))
    return err
