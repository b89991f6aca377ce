"""Test pairs built from a containment function, optimizers and certificates.

A dagger pair mixes a lower-bounded f with the containment function,
f_d = (1-eps) f + eps U, and comes with g_d = (1-eps) H(x, df) + eps C.
A double-dagger pair uses f_dd = (1+eps) f - eps U and
g_dd = (1+eps) H(x, df) - eps C. Certificates evaluate the sub- and
supersolution inequalities at the exact grid optimizers of the regularised
field minus the test function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .containment import ContainmentSpec
from .errors import ConfigurationError, DomainError
from .grid import DomainGrid
from .hamiltonian import HamiltonianSpec
from .testfunc import SmoothTestFunction, quadratic_bump
from .value import FieldLike, TimeValueField, ValueField, regularize, sample

DAGGER = "dagger"
DDAGGER = "ddagger"
DEFAULT_KAPPA = 5.0


@dataclass(frozen=True, eq=False)
class DaggerPair:
    base: SmoothTestFunction
    eps: float
    kind: str
    ups: ContainmentSpec
    H: HamiltonianSpec
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def sign(self) -> float:
        return 1.0 if self.kind == DAGGER else -1.0

    def f(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (1 - self.sign * self.eps) * self.base(x) + self.sign * self.eps * self.ups(x)

    def df(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((1 - self.sign * self.eps) * self.base.grad(x)
                + self.sign * self.eps * self.ups.d_upsilon(x))

    def g(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((1 - self.sign * self.eps) * self.H(x, self.base.grad(x))
                + self.sign * self.eps * self.ups.c_upsilon)

    def f_nodes(self, grid: DomainGrid) -> np.ndarray:
        return self._memo(("f", id(grid)), lambda: self.f(grid.points))

    def g_nodes(self, grid: DomainGrid) -> np.ndarray:
        return self._memo(("g", id(grid)), lambda: self.g(grid.points))

    def _memo(self, key, make):
        if key not in self._cache:
            arr = np.asarray(make(), dtype=float)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    def describe(self) -> dict:
        out = {"kind": self.kind, "eps": self.eps}
        out.update(self.base.describe())
        return out


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0 < eps < 1:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    return eps


def build_dagger(f: SmoothTestFunction, eps: float, ups: ContainmentSpec,
                 H: HamiltonianSpec) -> DaggerPair:
    eps = _check_eps(eps)
    if not f.lower_bounded:
        raise DomainError("the dagger operator needs a lower-bounded test function")
    return DaggerPair(f, eps, DAGGER, ups, H)


def build_ddagger(f: SmoothTestFunction, eps: float, ups: ContainmentSpec,
                  H: HamiltonianSpec) -> DaggerPair:
    eps = _check_eps(eps)
    if not f.upper_bounded:
        raise DomainError("the double-dagger operator needs an upper-bounded test function")
    return DaggerPair(f, eps, DDAGGER, ups, H)


def envelope_residual(pair: DaggerPair, grid: DomainGrid) -> np.ndarray:
    """H(x, d f_pair) - g_pair at every node.

    For convex H this is <= 0 for dagger pairs and >= 0 for double-dagger pairs.
    """
    x = grid.points
    return pair.H(x, pair.df(x)) - pair.g_nodes(grid)


# families ------------------------------------------------------------------------

def _centres(grid: DomainGrid, n: int) -> np.ndarray:
    if grid.dim == 1:
        if grid.periodic:
            c = grid.lower[0] + grid.period[0] * (np.arange(n) + 0.5) / n
        else:
            c = np.linspace(grid.lower[0], grid.upper[0], n + 2)[1:-1]
        return grid.points[grid.point_to_index(c[:, None])]
    lo, hi = grid.lower, grid.upper
    mid = 0.5 * (lo + hi)
    quarter = 0.25 * (hi - lo)
    pts = [mid]
    for signs in np.array(np.meshgrid(*[[-1.0, 1.0]] * grid.dim)).reshape(grid.dim, -1).T:
        pts.append(mid + signs * quarter)
    pts = np.array(pts)[:n]
    return grid.points[grid.point_to_index(pts)]


def default_radius(grid: DomainGrid) -> float:
    extent = grid.period if grid.periodic else grid.upper - grid.lower
    return 0.3 * float(np.min(extent))


def default_bases(grid: DomainGrid, n_centres: int = 5, curvatures=(0.5, 2.0),
                  epsilons=(0.05, 0.2), radius: Optional[float] = None):
    """(centre, curvature, eps, radius) for n_centres x curvatures x epsilons bumps."""
    if radius is None:
        radius = default_radius(grid)
    out = []
    for c in _centres(grid, n_centres):
        for b in curvatures:
            for e in epsilons:
                out.append((c, float(b), float(e), radius))
    return out


def default_family(grid: DomainGrid, H: HamiltonianSpec, ups: ContainmentSpec,
                   n_centres: int = 5, curvatures=(0.5, 2.0), epsilons=(0.05, 0.2),
                   radius: Optional[float] = None) -> list[DaggerPair]:
    """Dagger pairs on wells and double-dagger pairs on caps, one of each per base."""
    pairs = []
    for c, b, e, rho in default_bases(grid, n_centres, curvatures, epsilons, radius):
        well = quadratic_bump(c, -b, rho, grid=grid)
        cap = quadratic_bump(c, b, rho, grid=grid)
        pairs.append(build_dagger(well, e, ups, H))
        pairs.append(build_ddagger(cap, e, ups, H))
    return pairs


# optimizers ----------------------------------------------------------------------

@dataclass(frozen=True)
class AlmostOptimizer:
    node: int
    point: np.ndarray
    gap: float          # distance of the objective at ``node`` from the optimum
    bound: float        # M with (+-)f_pair(node) <= M
    optimum: float


def almost_optimizer(phi: FieldLike, pair: DaggerPair, grid: DomainGrid,
                     n: Optional[float] = None) -> AlmostOptimizer:
    """A node within 1/n of sup(phi - f) (dagger) or inf(phi - f) (double dagger).

    ``n=None`` returns the exact optimizer. Otherwise the lowest-index node that
    qualifies is returned, together with the sublevel bound
    M = 2 |phi|_inf + (+-)f(x~) + 1/n where x~ minimises (+-)f.
    """
    pv = sample(phi, grid)
    fv = pair.f_nodes(grid)
    s = pair.sign
    obj = s * (pv - fv)            # maximise in both cases
    opt = float(np.max(obj))
    slack = 0.0 if n is None or not np.isfinite(n) else 1.0 / float(n)
    if slack == 0.0:
        k = int(np.argmax(obj))
    else:
        k = int(np.flatnonzero(obj >= opt - slack)[0])
    bound = 2.0 * float(np.max(np.abs(pv))) + float(np.min(s * fv)) + slack
    return AlmostOptimizer(k, grid.points[k], float(opt - obj[k]), bound, s * opt)


# certificates --------------------------------------------------------------------

@dataclass
class PairResult:
    index: int
    kind: str
    eps: float
    center: list
    curvature: float
    node: int
    x0: list
    residual: float
    tol: float
    passed: bool
    t0: Optional[float] = None
    branch: Optional[str] = None
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"index": self.index, "kind": self.kind, "eps": self.eps,
               "center": self.center, "curvature": self.curvature, "x0": self.x0,
               "residual": self.residual, "tol": self.tol,
               "verdict": "pass" if self.passed else "fail"}
        if self.t0 is not None:
            out["t0"] = self.t0
            out["branch"] = self.branch
        if self.trace:
            out["trace"] = self.trace
        return out


@dataclass
class CertificateReport:
    results: list
    tol: float
    radius: int = 1
    note: str = ("finite test family: a falsification suite over the listed pairs, "
                 "not a proof over all smooth test functions")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def sub_results(self) -> list:
        return [r for r in self.results if r.kind == DAGGER]

    @property
    def super_results(self) -> list:
        return [r for r in self.results if r.kind == DDAGGER]

    def verdicts(self) -> list:
        return [r.passed for r in self.results]

    def to_dict(self) -> dict:
        return {"aggregate": "pass" if self.passed else "fail", "tol": self.tol,
                "radius": self.radius, "n_pairs": len(self.results), "note": self.note,
                "pairs": [r.to_dict() for r in self.results]}


def default_tol(grid: DomainGrid, tau: float, kappa: float = DEFAULT_KAPPA) -> float:
    """kappa (dx + tau) with dx the largest spacing."""
    return float(kappa * (float(np.max(grid.spacing)) + tau))


def _trace(obj: np.ndarray, ns=(1, 10, 100)) -> list:
    opt = float(np.max(obj))
    out = []
    for n in ns:
        k = int(np.flatnonzero(obj >= opt - 1.0 / n)[0])
        out.append({"n": n, "node": k, "gap": float(opt - obj[k])})
    return out


def certify_stationary(R: ValueField, H: HamiltonianSpec, ups: ContainmentSpec, lam: float,
                       h: FieldLike, family: Sequence[DaggerPair], tol: Optional[float] = None,
                       radius: int = 1, with_trace: bool = False) -> CertificateReport:
    """Sub/supersolution checks of u - lam H_d u = h and u - lam H_dd u = h on the grid."""
    if not family:
        raise ConfigurationError("the test family is empty")
    grid = R.grid
    if tol is None:
        tol = default_tol(grid, R.tau if R.tau is not None else 0.0)
    hv = sample(h, grid)
    upper = regularize(R, "usc", radius).values
    lower = regularize(R, "lsc", radius).values
    results = []
    for i, pair in enumerate(family):
        u = upper if pair.kind == DAGGER else lower
        obj = pair.sign * (u - pair.f_nodes(grid))
        k = int(np.argmax(obj))
        res = float(u[k] - lam * pair.g_nodes(grid)[k] - hv[k])
        ok = res <= tol if pair.kind == DAGGER else res >= -tol
        results.append(PairResult(i, pair.kind, pair.eps, _center(pair), pair.base.curvature,
                                  k, grid.points[k].tolist(), res, tol, bool(ok),
                                  trace=_trace(obj) if with_trace else []))
    return CertificateReport(results, tol, radius)


def _center(pair: DaggerPair) -> list:
    c = pair.base.center
    return [] if c is None else c.tolist()


def time_tests(alphas=(0.0, 1.0, -1.0), betas=(0.0,)) -> list[tuple[float, float]]:
    """Time test functions g(t) = alpha t + beta t^2 given as (alpha, beta)."""
    return [(float(a), float(b)) for a in alphas for b in betas]


def certify_evolutionary(v: TimeValueField, H: HamiltonianSpec, ups: ContainmentSpec,
                         lam: float, u0: FieldLike, family: Sequence[DaggerPair],
                         tests: Optional[Sequence[tuple]] = None, tol: Optional[float] = None,
                         radius: int = 1) -> CertificateReport:
    """Checks of d_t u + lam u - H_d u = 0 (sub) and the double-dagger counterpart (super).

    At t0 = 0 the initial condition enters: a subsolution passes when
    min(residual, u(x0,0) - u0(x0)) <= tol, a supersolution when
    max(residual, u(x0,0) - u0(x0)) >= -tol.
    """
    if not family:
        raise ConfigurationError("the test family is empty")
    grid = v.grid
    tests = time_tests() if tests is None else list(tests)
    if tol is None:
        tol = default_tol(grid, v.tau)
    u0v = sample(u0, grid)
    upper = regularize(v, "usc", radius).values
    lower = regularize(v, "lsc", radius).values
    t = v.times
    results = []
    idx = 0
    for pair in family:
        fv = pair.f_nodes(grid)
        gv = pair.g_nodes(grid)
        u = upper if pair.kind == DAGGER else lower
        for alpha, beta in tests:
            gt = alpha * t + beta * t * t
            obj = pair.sign * (u - fv[None, :] - gt[:, None])
            kt, kx = np.unravel_index(int(np.argmax(obj)), obj.shape)
            res = float(alpha + 2 * beta * t[kt] + lam * u[kt, kx] - gv[kx])
            branch = "interior"
            if kt == 0:
                init_gap = float(u[0, kx] - u0v[kx])
                if pair.kind == DAGGER:
                    chosen = min(res, init_gap)
                else:
                    chosen = max(res, init_gap)
                branch = "initial" if chosen == init_gap and chosen != res else "equation"
                res = chosen
            ok = res <= tol if pair.kind == DAGGER else res >= -tol
            results.append(PairResult(idx, pair.kind, pair.eps, _center(pair),
                                      pair.base.curvature, int(kx), grid.points[kx].tolist(),
                                      res, tol, bool(ok), float(t[kt]), branch))
            idx += 1
    return CertificateReport(results, tol, radius)
