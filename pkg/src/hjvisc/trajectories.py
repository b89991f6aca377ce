"""Piecewise-linear admissible curves and the payoff functionals along them."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .containment import ContainmentSpec
from .errors import CapabilityError, ConfigurationError, IntegrationError, SpliceError
from .grid import DomainGrid
from .hamiltonian import HamiltonianSpec
from .legendre import ANALYTIC_TOL, GRID_TOL, lagrangian
from .testfunc import SmoothTestFunction

ScalarField = Callable[[np.ndarray], np.ndarray]

SPLICE_TOL = 1e-9
ZERO_COST_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Curve:
    """Knot times, knot points and per-segment velocities.

    ``grid`` decides the geometry: on a torus knots are stored wrapped and the
    velocity of a segment may cross the identification; on a box the curve is
    kept inside by construction (see :meth:`from_velocities`).
    """

    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    grid: Optional[DomainGrid] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.atleast_2d(np.asarray(self.points, dtype=float))
        v = np.asarray(self.velocities, dtype=float).reshape(-1, x.shape[1])
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise ConfigurationError("a curve needs knot times 0 = t_0 < ... < t_m")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("knot times must be strictly increasing")
        if x.shape[0] != t.size or v.shape[0] != t.size - 1:
            raise ConfigurationError("inconsistent numbers of knots and segments")
        for a in (t, x, v):
            a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "velocities", v)

    # construction -----------------------------------------------------------------

    @classmethod
    def from_points(cls, times, points, grid: Optional[DomainGrid] = None) -> "Curve":
        t = np.asarray(times, dtype=float)
        x = np.asarray(points, dtype=float).reshape(t.size, -1)
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("knot times must be strictly increasing")
        if grid is not None:
            x = grid.project(x)
            d = grid.displacement(x[:-1], x[1:])
        else:
            d = np.diff(x, axis=0)
        return cls(t, x, d / np.diff(t)[:, None], grid)

    @classmethod
    def from_velocities(cls, x0, durations, velocities,
                        grid: Optional[DomainGrid] = None) -> "Curve":
        """Integrate segment velocities from ``x0``.

        On a box, a segment that would leave the domain is split where it hits
        the boundary and continues with the outward components set to zero.
        """
        x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        dims = x.size
        V = np.asarray(velocities, dtype=float).reshape(-1, dims)
        dts = np.broadcast_to(np.asarray(durations, dtype=float), (V.shape[0],))
        if np.any(dts <= 0):
            raise ConfigurationError("segment durations must be positive")
        if grid is not None:
            x = grid.project(x)
        times, pts, vels = [0.0], [x.copy()], []
        t = 0.0
        for v, dt in zip(V, dts):
            v = v.copy()
            left = float(dt)
            while left > 0:
                if grid is None or grid.periodic:
                    step = left
                else:
                    v = np.where(((x >= grid.upper) & (v > 0)) | ((x <= grid.lower) & (v < 0)),
                                 0.0, v)
                    with np.errstate(divide="ignore", invalid="ignore"):
                        room = np.where(v > 0, (grid.upper - x) / v,
                                        np.where(v < 0, (grid.lower - x) / v, np.inf))
                    step = min(left, float(np.min(room)))
                    if step <= 1e-14 * max(1.0, left):
                        step = left  # degenerate hit; clamp absorbs it
                end = x + step * v
                if grid is not None:
                    end = grid.project(end)
                t += step
                times.append(t)
                pts.append(end)
                vels.append(v.copy() if grid is None or grid.periodic
                            else (end - x) / step)
                x = end
                left -= step
                if left <= 1e-14 * dt:
                    break
        return cls(np.array(times), np.array(pts), np.array(vels), grid)

    @classmethod
    def constant(cls, x, horizon: float, grid: Optional[DomainGrid] = None) -> "Curve":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.array([0.0, float(horizon)]), np.stack([x, x]),
                   np.zeros((1, x.size)), grid)

    # geometry -------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_segments(self) -> int:
        return self.velocities.shape[0]

    def _project(self, x):
        return x if self.grid is None else self.grid.project(x)

    def segment_of(self, t) -> np.ndarray:
        """Index of the segment containing t (right-continuous, last one closed)."""
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(i, 0, self.n_segments - 1)

    def position(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon * (1 + 1e-14)):
            raise ConfigurationError("time outside the curve horizon")
        i = self.segment_of(t)
        x = self.points[i] + (t - self.times[i])[..., None] * self.velocities[i]
        return self._project(x)

    def __call__(self, t) -> np.ndarray:
        return self.position(t)

    def max_reconstruction_error(self) -> float:
        dt = np.diff(self.times)[:, None]
        rebuilt = self._project(self.points[:-1] + dt * self.velocities)
        if self.grid is not None:
            return float(np.max(self.grid.distance(rebuilt, self.points[1:]), initial=0.0))
        return float(np.max(np.linalg.norm(rebuilt - self.points[1:], axis=1), initial=0.0))

    # closure operations ---------------------------------------------------------

    def truncate(self, T: float) -> "Curve":
        """The curve restricted to [0, T]."""
        if not 0 < T <= self.horizon:
            raise ConfigurationError(f"truncation time {T} outside (0, {self.horizon}]")
        k = int(np.searchsorted(self.times, T, side="left"))
        if self.times[k] == T:
            return Curve(self.times[:k + 1], self.points[:k + 1], self.velocities[:k],
                         self.grid)
        times = np.append(self.times[:k], T)
        pts = np.vstack([self.points[:k], self.position(T)])
        return Curve(times, pts, self.velocities[:k], self.grid)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{a + 1}" for a in range(self.dim)])
            for t, x in zip(self.times, self.points):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in x])

    @classmethod
    def from_csv(cls, path, grid: Optional[DomainGrid] = None) -> "Curve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_points(data[:, 0], data[:, 1:], grid)


def shift(curve: Curve, tau: float) -> Curve:
    """t -> curve(t + tau) on the remaining horizon."""
    if not 0 <= tau < curve.horizon:
        raise ConfigurationError(f"shift {tau} outside [0, {curve.horizon})")
    if tau == 0:
        return curve
    i = int(curve.segment_of(tau))
    if curve.times[i] == tau:
        times, pts, vel = curve.times[i:] - tau, curve.points[i:], curve.velocities[i:]
    else:
        times = np.concatenate([[0.0], curve.times[i + 1:] - tau])
        pts = np.vstack([curve.position(tau), curve.points[i + 1:]])
        vel = curve.velocities[i:]
    return Curve(times, pts, vel, curve.grid)


def concat(first: Curve, second: Curve, tau: float) -> Curve:
    """Follow ``first`` on [0, tau], then ``second`` re-based at tau."""
    if not 0 <= tau <= first.horizon:
        raise ConfigurationError(f"splice time {tau} outside [0, {first.horizon}]")
    grid = first.grid if first.grid is not None else second.grid
    meet = first.position(tau)
    if grid is not None:
        gap = float(grid.distance(meet, second.points[0]))
    else:
        gap = float(np.linalg.norm(meet - second.points[0]))
    if gap > SPLICE_TOL:
        raise SpliceError(gap)
    head = first.truncate(tau) if tau > 0 else None
    dt = np.diff(second.times)
    # rebuild the tail knots from the splice point so velocities stay consistent
    tail = [meet]
    for v, h in zip(second.velocities, dt):
        nxt = tail[-1] + h * v
        tail.append(grid.project(nxt) if grid is not None else nxt)
    tail = np.array(tail)
    if head is None:
        return Curve(second.times, tail, second.velocities, grid)
    return Curve(np.concatenate([head.times, second.times[1:] + tau]),
                 np.vstack([head.points, tail[1:]]),
                 np.vstack([head.velocities, second.velocities]), grid)


# payoffs ------------------------------------------------------------------------

def _clipped_segments(curve: Curve, T: Optional[float]):
    T = curve.horizon if T is None else float(T)
    if T < 0 or T > curve.horizon * (1 + 1e-14):
        raise ConfigurationError(f"time {T} outside [0, {curve.horizon}]")
    a = curve.times[:-1]
    b = np.minimum(curve.times[1:], T)
    keep = b > a
    return a[keep], b[keep], curve.points[:-1][keep], curve.velocities[keep]


def segment_costs(H: HamiltonianSpec, curve: Curve, T: Optional[float] = None,
                  method: str = "auto"):
    """(start, end, L at the segment midpoint) for each segment cut at T."""
    a, b, x, v = _clipped_segments(curve, T)
    if a.size == 0:
        return a, b, np.zeros(0)
    mid = curve._project(x + 0.5 * (b - a)[:, None] * v)
    return a, b, lagrangian(H, mid, v, method=method)


def action_cost(H: HamiltonianSpec, curve: Curve, T: Optional[float] = None,
                method: str = "auto") -> float:
    """Midpoint-rule action; +inf as soon as one segment has infinite cost."""
    a, b, L = segment_costs(H, curve, T, method)
    if np.any(np.isinf(L)):
        return np.inf
    return float(np.sum((b - a) * L))


@dataclass(frozen=True)
class Payoff:
    value: float
    approximate: bool = False


def _kernel_nodes(a, b, lam, dt_max):
    """Sub-interval midpoints and exact exponential masses over [a, b]."""
    mids, masses = [], []
    for lo, hi in zip(a, b):
        n = max(1, int(np.ceil((hi - lo) / dt_max)))
        e = np.linspace(lo, hi, n + 1)
        mids.append(0.5 * (e[:-1] + e[1:]))
        masses.append(np.exp(-e[:-1] / lam) - np.exp(-e[1:] / lam))
    return np.concatenate(mids), np.concatenate(masses)


def j_lambda_payoff(H: HamiltonianSpec, curve: Curve, lam: float, h: ScalarField,
                    T_cut: Optional[float] = None, dt_max: Optional[float] = None,
                    method: str = "auto") -> Payoff:
    """Discounted payoff with exact exponential weights and a frozen-endpoint tail.

    Integrating by parts, the double integral of the running cost collapses to
    the single integral of e^{-t/lambda} L, which is exact for segment-constant
    costs. The reward h is integrated by a product midpoint rule with sub-steps
    of at most ``dt_max`` (default lambda/32). After ``T_cut`` the curve rests
    at its endpoint; if resting there costs L(x,0) > 0 that cost is charged
    and the result is marked approximate.
    """
    if lam <= 0:
        raise ConfigurationError("lambda must be positive")
    T = curve.horizon if T_cut is None else float(T_cut)
    a, b, L = segment_costs(H, curve, T, method)
    if np.any(np.isinf(L)):
        return Payoff(-np.inf)
    dt_max = lam / 32.0 if dt_max is None else dt_max
    mids, masses = _kernel_nodes(a, b, lam, dt_max)
    reward = float(np.sum(masses * h(curve.position(mids))))
    cost = float(np.sum(L * (np.exp(-a / lam) - np.exp(-b / lam)) * lam))
    x_end = curve.position(T)
    rest = float(lagrangian(H, x_end, np.zeros_like(x_end), method=method))
    w = np.exp(-T / lam)
    tail = w * float(h(x_end[None, :])[0])
    approximate = rest > ZERO_COST_TOL
    if approximate:
        tail -= w * lam * rest
    return Payoff(reward - cost + tail, approximate)


def j_lambda(H: HamiltonianSpec, curve: Curve, lam: float, h: ScalarField,
             T_cut: Optional[float] = None, dt_max: Optional[float] = None,
             method: str = "auto") -> float:
    return j_lambda_payoff(H, curve, lam, h, T_cut, dt_max, method).value


def j_lambda_window(H: HamiltonianSpec, curve: Curve, lam: float, h: ScalarField, T: float,
                    dt_max: Optional[float] = None, method: str = "auto") -> float:
    """The [0, T] part of j_lambda without any tail closure.

    j_lambda(curve) = window(T) + e^{-T/lambda} j_lambda(shift(curve, T)).
    """
    a, b, L = segment_costs(H, curve, T, method)
    if np.any(np.isinf(L)):
        return -np.inf
    dt_max = lam / 32.0 if dt_max is None else dt_max
    mids, masses = _kernel_nodes(a, b, lam, dt_max)
    reward = float(np.sum(masses * h(curve.position(mids))))
    cost = float(np.sum(L * (np.exp(-a / lam) - np.exp(-b / lam)) * lam))
    return reward - cost


def w_lambda(H: HamiltonianSpec, curve: Curve, t: float, lam: float, u0: ScalarField,
             method: str = "auto") -> float:
    """-int_0^t e^{-lam s} L ds + e^{-lam t} u0(curve(t)), exact per segment."""
    if lam < 0:
        raise ConfigurationError("lambda must be nonnegative")
    x_t = curve.position(t)
    end = np.exp(-lam * t) * float(u0(x_t[None, :])[0])
    if t == 0:
        return end
    a, b, L = segment_costs(H, curve, t, method)
    if np.any(np.isinf(L)):
        return -np.inf
    weights = (b - a) if lam == 0 else (np.exp(-lam * a) - np.exp(-lam * b)) / lam
    return end - float(np.sum(weights * L))


def containment_check(H: HamiltonianSpec, ups: ContainmentSpec, curve: Curve,
                      T: Optional[float] = None, method: str = "auto") -> float:
    """Upsilon(end) - Upsilon(start) - action - T*C; nonpositive when containment holds."""
    T = curve.horizon if T is None else float(T)
    cost = action_cost(H, curve, T, method)
    if np.isinf(cost):
        return -np.inf
    start, end = curve.points[0][None, :], curve.position(T)[None, :]
    return float(ups(end)[0] - ups(start)[0]) - cost - T * ups.c_upsilon


def young_residual(H: HamiltonianSpec, f: SmoothTestFunction, curve: Curve,
                   T: Optional[float] = None, method: str = "auto") -> float:
    """int <df, curve'> - int [L + H(., df)]; zero along an optimally paired path.

    The first integral is exact (f(end) - f(start) summed over segments), the
    others use the segment midpoints.
    """
    a, b, x, v = _clipped_segments(curve, T)
    if a.size == 0:
        return 0.0
    dt = b - a
    ends = curve._project(x + dt[:, None] * v)
    mid = curve._project(x + 0.5 * dt[:, None] * v)
    L = lagrangian(H, mid, v, method=method)
    if np.any(np.isinf(L)):
        return -np.inf
    work = float(np.sum(f(ends) - f(x)))
    return work - float(np.sum(dt * (L + H(mid, f.grad(mid)))))


def fenchel_young_along(H: HamiltonianSpec, f: SmoothTestFunction, curve: Curve,
                        T: Optional[float] = None, method: str = "auto") -> float:
    """Same as :func:`young_residual`; named for the inequality it must satisfy (<= tol)."""
    return young_residual(H, f, curve, T, method)


def diff_inclusion_path(H: HamiltonianSpec, f: SmoothTestFunction, x0, T: float, step: float,
                        grid: Optional[DomainGrid] = None, c_step: float = 10.0,
                        tol_conj: Optional[float] = None, method: str = "auto") -> Curve:
    """RK4 path of x' = dH/dp(x, df(x)), checked through its Young residual.

    The returned curve carries ``meta["young_residual"]`` and
    ``meta["threshold"] = c_step * step^2 + tol_conj``.
    """
    if H.grad_p is None:
        raise CapabilityError("this Hamiltonian has no p-gradient; "
                              "a subdifferential selection would be needed")
    if not 0 < step <= T:
        raise ConfigurationError("need 0 < step <= T")
    if tol_conj is None:
        tol_conj = ANALYTIC_TOL if (H.has_conjugate and method != "grid") else GRID_TOL

    def F(x):
        return H.grad_p(x, f.grad(x))

    n = int(np.ceil(T / step - 1e-9))
    steps = np.full(n, step)
    steps[-1] = T - step * (n - 1)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if grid is not None:
        x = grid.project(x)
    pts = [x]
    for h in steps:
        k1 = F(x)
        k2 = F(x + 0.5 * h * k1)
        k3 = F(x + 0.5 * h * k2)
        k4 = F(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if grid is not None:
            x = grid.project(x)
        pts.append(x)
    times = np.concatenate([[0.0], np.cumsum(steps)])
    curve = Curve.from_points(times, np.array(pts), grid)
    res = young_residual(H, f, curve, method=method)
    threshold = c_step * step ** 2 + tol_conj
    if not abs(res) <= threshold:
        raise IntegrationError(abs(res), threshold)
    curve.meta.update(young_residual=res, threshold=threshold)
    return curve


def random_curve(rng: np.random.Generator, grid: DomainGrid, n_segments: int = 5,
                 max_duration: float = 0.5, speed: float = 1.0, x0=None) -> Curve:
    """Random piecewise-linear curve inside the grid domain."""
    if x0 is None:
        x0 = grid.lower + rng.random(grid.dim) * (grid.upper - grid.lower)
    durations = rng.uniform(0.05, max_duration, size=n_segments)
    vel = rng.normal(scale=speed, size=(n_segments, grid.dim))
    return Curve.from_velocities(x0, durations, vel, grid)
