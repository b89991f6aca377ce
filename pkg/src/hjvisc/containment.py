"""Containment (Lyapunov-type) functions and their certified constant."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionError, CertificationError
from .grid import DomainGrid
from .hamiltonian import HamiltonianSpec

MARGIN = 1e-6

BoundEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ContainmentSpec:
    upsilon: Callable[[np.ndarray], np.ndarray]
    d_upsilon: Callable[[np.ndarray], np.ndarray]
    c_upsilon: float
    certified: bool
    center: Optional[np.ndarray] = None
    scale: float = 1.0
    kind: str = "log"

    def __call__(self, x) -> np.ndarray:
        return self.upsilon(np.asarray(x, dtype=float))

    def describe(self) -> dict:
        return {"kind": self.kind, "C_upsilon": self.c_upsilon, "certified": self.certified,
                "center": None if self.center is None else self.center.tolist(),
                "scale": self.scale}


def zero_containment() -> ContainmentSpec:
    """Upsilon = 0, C = 0: the right choice on a compact (periodic) domain."""
    return ContainmentSpec(lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros_like(x),
                           0.0, True, None, 1.0, "zero")


def log_containment(center, scale: float = 1.0):
    """Upsilon(x) = 1/2 log(1 + |x - c|^2 / s^2) and its differential."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    s2 = float(scale) ** 2

    def ups(x):
        r = x - c
        return 0.5 * np.log1p(np.sum(r * r, axis=-1) / s2)

    def dups(x):
        r = x - c
        return r / (s2 + np.sum(r * r, axis=-1))[..., None]

    return ups, dups


def _local_sup(bound: BoundEvaluator, dups, grid: DomainGrid, seeds: np.ndarray) -> float:
    """Zoom in around seed nodes to catch maxima falling between nodes."""
    best = -np.inf
    n = 21 if grid.dim <= 2 else 7
    for x0 in seeds:
        centre = x0.copy()
        width = grid.spacing.copy()
        for _ in range(3):
            offs = np.stack(np.meshgrid(*[np.linspace(-1, 1, n)] * grid.dim, indexing="ij"),
                            axis=-1).reshape(-1, grid.dim)
            pts = grid.clamp(centre + offs * width)
            vals = bound(pts, dups(pts))
            k = int(np.argmax(vals))
            best = max(best, float(vals[k]))
            centre = pts[k]
            width = width * (2.0 / (n - 1))
    return best


def containment_sup(bound: BoundEvaluator, dups, grid: DomainGrid, refine: bool = True) -> float:
    """sup over the grid (optionally polished between nodes) of bound(x, dUpsilon(x))."""
    pts = grid.points
    vals = bound(pts, dups(pts))
    if not np.all(np.isfinite(vals)):
        raise CertificationError("H(x, dUpsilon(x)) is not finite on the grid")
    sup = float(np.max(vals))
    if refine:
        order = np.argsort(vals)[::-1][:4]
        sup = max(sup, _local_sup(bound, dups, grid, pts[order]))
    if not np.isfinite(sup):
        raise CertificationError("H(x, dUpsilon(x)) is not finite near the grid maximum")
    return sup


def standard_containment(grid: DomainGrid, H: HamiltonianSpec, margin: float = MARGIN,
                         bound: Optional[BoundEvaluator] = None,
                         refine: bool = True) -> ContainmentSpec:
    """Upsilon = 1/2 log(1+|x-x_c|^2) on boxes, Upsilon = 0 on tori.

    ``x_c`` is the node closest to the geometric centre, so the grid infimum
    of Upsilon is exactly zero. ``bound`` replaces H when the constant must
    dominate a family of Hamiltonians (Isaacs games).
    """
    if grid.periodic:
        return zero_containment()
    xc = grid.index_to_point(grid.point_to_index(grid.center))
    ups, dups = log_containment(xc)
    sup = containment_sup(bound or H.evaluate, dups, grid, refine)
    return ContainmentSpec(ups, dups, sup + margin, True, xc, 1.0, "log")


def custom_containment(grid: DomainGrid, H: HamiltonianSpec, center, scale: float = 1.0,
                       c_upsilon: Optional[float] = None, margin: float = MARGIN,
                       bound: Optional[BoundEvaluator] = None) -> ContainmentSpec:
    """Log containment with user centre/scale; certified iff the given C dominates."""
    ups, dups = log_containment(center, scale)
    sup = containment_sup(bound or H.evaluate, dups, grid)
    if c_upsilon is None:
        c, certified = sup + margin, True
    else:
        c, certified = float(c_upsilon), bool(sup <= c_upsilon)
    return ContainmentSpec(ups, dups, c, certified,
                           np.atleast_1d(np.asarray(center, dtype=float)), scale, "log")


def check_containment(spec: ContainmentSpec, grid: DomainGrid, H: Optional[HamiltonianSpec] = None,
                      n_rays: int = 16, bound: Optional[BoundEvaluator] = None) -> dict:
    """Grid checks of the containment invariants; raises AssumptionError on failure."""
    pts = grid.points
    vals = spec(pts)
    inf = float(np.min(vals))
    if abs(inf) > 1e-9 or np.any(vals < -1e-12):
        raise AssumptionError(f"containment infimum on the grid is {inf:.3e}, not 0")
    # monotone growth along rays from the argmin (bounded sublevel sets)
    if not grid.periodic:
        x0 = pts[int(np.argmin(vals))]
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(n_rays, grid.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        reach = np.max(grid.upper - grid.lower)
        radii = np.linspace(0.0, reach, 200)
        for u in dirs:
            ray = x0 + radii[:, None] * u
            inside = grid.contains(ray)
            prof = spec(ray[inside])
            if np.any(np.diff(prof) < -1e-12):
                raise AssumptionError("containment function decreases along a ray")
    out = {"inf": inf}
    if H is not None or bound is not None:
        ev = bound or H.evaluate
        sup = float(np.max(ev(pts, spec.d_upsilon(pts))))
        out["sup_H_dUpsilon"] = sup
        if spec.certified and sup - spec.c_upsilon > 0:
            raise AssumptionError(
                f"certified containment violated: sup H(x,dU) = {sup:.6g} > C = {spec.c_upsilon:.6g}")
    return out
