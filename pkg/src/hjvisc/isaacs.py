"""Sup-inf / inf-sup Hamiltonians of two-player games over finite strategy sets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .containment import ContainmentSpec
from .errors import CapabilityError, ConfigurationError
from .grid import DomainGrid
from .hamiltonian import ISAACS, HamiltonianSpec, quadratic, transport_quadratic
from .testfunc import SmoothTestFunction
from .trajectories import Curve, diff_inclusion_path, young_residual

TOL_ISAACS = 1e-9
WEAK_DUALITY_TOL = 1e-12

CostFn = Callable[[np.ndarray, int, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class IsaacsSpec:
    """Finite strategy sets, inner Hamiltonians H_ij (convex in p) and costs I_ij(x).

    ``inner[i][j]`` is the Hamiltonian for strategies (theta1[i], theta2[j]);
    ``cost(x, i, j)`` returns I(x, theta1[i], theta2[j]).
    """

    theta1: np.ndarray
    theta2: np.ndarray
    inner: tuple
    cost: CostFn
    dim: int
    separable: bool = False
    params: Optional[dict] = None

    def __post_init__(self):
        t1 = np.atleast_1d(np.asarray(self.theta1, dtype=float))
        t2 = np.atleast_1d(np.asarray(self.theta2, dtype=float))
        if t1.shape[0] == 0 or t2.shape[0] == 0:
            raise ConfigurationError("strategy sets must be nonempty")
        inner = tuple(tuple(row) for row in self.inner)
        if len(inner) != t1.shape[0] or any(len(r) != t2.shape[0] for r in inner):
            raise ConfigurationError("inner Hamiltonians must form an n1 x n2 table")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)
        object.__setattr__(self, "inner", inner)

    @property
    def n1(self) -> int:
        return self.theta1.shape[0]

    @property
    def n2(self) -> int:
        return self.theta2.shape[0]

    @property
    def p_max(self) -> np.ndarray:
        return np.max([H.p_max for row in self.inner for H in row], axis=0)

    def table(self, x, p) -> np.ndarray:
        """H_ij(x, p) - I_ij(x) stacked as (n1, n2, ...)."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.stack([np.stack([self.inner[i][j](x, p) - self.cost(x, i, j)
                                   for j in range(self.n2)]) for i in range(self.n1)])

    def containment_bound(self, x, p) -> np.ndarray:
        """max_ij H_ij(x, p), the quantity a uniform containment constant must dominate."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        vals = [H(x, p) for row in self.inner for H in row]
        return np.max(np.stack(vals), axis=0)


def h_upper(spec: IsaacsSpec, x, p, with_pair: bool = False):
    """max_i min_j H_ij(x,p) - I_ij(x); optionally the optimising (i, j)."""
    tab = spec.table(x, p)
    inner_min = np.min(tab, axis=1)
    val = np.max(inner_min, axis=0)
    if not with_pair:
        return val
    i = np.argmax(inner_min, axis=0)
    j = np.argmin(np.take_along_axis(tab, i[None, None, ...], axis=0)[0], axis=0)
    return val, (i, j)


def h_lower(spec: IsaacsSpec, x, p, with_pair: bool = False):
    """min_j max_i H_ij(x,p) - I_ij(x); optionally the optimising (i, j)."""
    tab = spec.table(x, p)
    outer_max = np.max(tab, axis=0)
    val = np.min(outer_max, axis=0)
    if not with_pair:
        return val
    j = np.argmin(outer_max, axis=0)
    i = np.argmax(np.take_along_axis(tab, j[None, None, ...], axis=1)[:, 0], axis=0)
    return val, (i, j)


@dataclass(frozen=True)
class GapReport:
    gap: np.ndarray           # per point: max over p samples of h_lower - h_upper
    max_gap: float
    min_gap: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.max_gap <= self.tol

    @property
    def weak_duality(self) -> bool:
        return self.min_gap >= -WEAK_DUALITY_TOL

    def to_dict(self) -> dict:
        return {"max_gap": self.max_gap, "min_gap": self.min_gap, "tol": self.tol,
                "isaacs_condition": self.holds, "weak_duality": self.weak_duality,
                "n_points": int(self.gap.size)}


def isaacs_gap(spec: IsaacsSpec, points, p_samples, tol: float = TOL_ISAACS) -> GapReport:
    """Gap h_lower - h_upper over points x p_samples (both (M, d) arrays)."""
    x = np.asarray(points, dtype=float).reshape(-1, spec.dim)
    p = np.asarray(p_samples, dtype=float).reshape(-1, spec.dim)
    if p.shape[0] == 0:
        raise ConfigurationError("need at least one covector sample")
    xb, pb = x[:, None, :], p[None, :, :]
    diff = h_lower(spec, xb, pb) - h_upper(spec, xb, pb)
    return GapReport(np.max(diff, axis=1), float(np.max(diff)), float(np.min(diff)), tol)


@dataclass(frozen=True)
class IsaacsValidity:
    nonnegative_cost: bool
    zero_at_origin: bool
    uniform_containment: Optional[bool]
    worst_containment: Optional[float] = None

    @property
    def valid(self) -> bool:
        return (self.nonnegative_cost and self.zero_at_origin
                and self.uniform_containment is not False)

    def to_dict(self) -> dict:
        return {"nonnegative_cost": self.nonnegative_cost, "zero_at_origin": self.zero_at_origin,
                "uniform_containment": self.uniform_containment,
                "worst_containment_excess": self.worst_containment, "valid": self.valid}


def check_isaacs(spec: IsaacsSpec, grid: DomainGrid,
                 ups: Optional[ContainmentSpec] = None) -> IsaacsValidity:
    """I >= 0, H_ij(x,0) = 0 and (given ups) max_ij H_ij(x, dU) <= C on the grid."""
    x = grid.points
    nonneg = all(np.all(spec.cost(x, i, j) >= 0) for i in range(spec.n1) for j in range(spec.n2))
    zero = all(np.max(np.abs(H(x, np.zeros_like(x)))) <= 1e-12
               for row in spec.inner for H in row)
    uniform, worst = None, None
    if ups is not None:
        worst = float(np.max(spec.containment_bound(x, ups.d_upsilon(x))) - ups.c_upsilon)
        uniform = bool(worst <= 0)
    return IsaacsValidity(bool(nonneg), bool(zero), uniform, worst)


def isaacs_envelope_check(spec: IsaacsSpec, f: SmoothTestFunction, eps: float,
                          ups: ContainmentSpec, grid: DomainGrid) -> np.ndarray:
    """h_upper(x, d f_eps) - [(1-eps) h_upper(x, df) + eps C] with f_eps = (1-eps) f + eps U."""
    if not 0 < eps < 1:
        raise ConfigurationError("eps must lie in (0, 1)")
    x = grid.points
    d_mix = (1 - eps) * f.grad(x) + eps * ups.d_upsilon(x)
    return h_upper(spec, x, d_mix) - ((1 - eps) * h_upper(spec, x, f.grad(x))
                                      + eps * ups.c_upsilon)


def _shared_gradient(spec: IsaacsSpec, samples: int = 64, seed: int = 0) -> bool:
    ref = spec.inner[0][0]
    if any(H.grad_p is None for row in spec.inner for H in row):
        return False
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(samples, spec.dim))
    p = rng.normal(size=(samples, spec.dim)) * ref.p_max
    g0 = ref.grad_p(x, p)
    return all(np.max(np.abs(H.grad_p(x, p) - g0)) <= 1e-12
               for row in spec.inner for H in row)


def isaacs_diff_inclusion(spec: IsaacsSpec, f: SmoothTestFunction, x0, T: float, step: float,
                          grid: Optional[DomainGrid] = None) -> Curve:
    """One RK4 path for the common inner Hamiltonian, Young-checked against every pair.

    ``meta["pair_residuals"]`` holds the (n1, n2) residual table and
    ``meta["worst_residual"]`` its largest absolute entry.
    """
    if not _shared_gradient(spec):
        raise CapabilityError("inner Hamiltonians do not share one p-gradient; "
                              "a single curve cannot serve every strategy pair")
    curve = diff_inclusion_path(spec.inner[0][0], f, x0, T, step, grid)
    table = np.array([[young_residual(H, f, curve) for H in row] for row in spec.inner])
    curve.meta.update(pair_residuals=table.tolist(), worst_residual=float(np.max(np.abs(table))))
    return curve


def as_hamiltonian(spec: IsaacsSpec) -> HamiltonianSpec:
    """The sup-inf composite as a HamiltonianSpec (variant isaacs-composite).

    With singleton strategy sets the inner conjugate, gradient and dual map pass
    through (shifted by the cost), so the convex pipeline is reproduced exactly.
    """
    def H(x, p):
        return h_upper(spec, x, p)

    conj = grad = dual = None
    convex = spec.n1 == 1 and spec.n2 == 1
    if convex:
        inner = spec.inner[0][0]
        if inner.conjugate is not None:
            def conj(x, v):
                return inner.conjugate(x, v) + spec.cost(x, 0, 0)
        grad, dual = inner.grad_p, inner.dual_map
    return HamiltonianSpec(H, spec.dim, spec.p_max, convex, conj, grad, ISAACS,
                           dict(spec.params or {}), dual)


# factories -----------------------------------------------------------------------

def matrix_cost(table) -> CostFn:
    """State-independent costs I_ij from a matrix."""
    tab = np.asarray(table, dtype=float)

    def cost(x, i, j):
        return tab[i, j] + 0.0 * np.asarray(x)[..., 0]
    return cost


def separable_cost(c1, c2) -> CostFn:
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    return matrix_cost(c1[:, None] + c2[None, :])


def drift_game(theta1, theta2, c1=None, c2=None, scale: float = 1.0, p_max=4.0,
               drift: bool = True) -> IsaacsSpec:
    """H_ij = scale/2 |p|^2 + <theta1_i + theta2_j, p>, I_ij = c1_i + c2_j (separable)."""
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    if t1.ndim == 1:
        t1 = t1[:, None]
    if t2.ndim == 1:
        t2 = t2[:, None]
    dim = t1.shape[1]
    c1 = np.zeros(len(t1)) if c1 is None else c1
    c2 = np.zeros(len(t2)) if c2 is None else c2
    if drift:
        inner = [[transport_quadratic(dim, a + b, None, scale, p_max) for b in t2] for a in t1]
    else:
        H0 = quadratic(dim, scale, p_max)
        inner = [[H0] * len(t2) for _ in t1]
    params = {"kind": "drift-game", "scale": scale, "drift": drift,
              "c1": np.asarray(c1).tolist(), "c2": np.asarray(c2).tolist()}
    return IsaacsSpec(t1, t2, inner, separable_cost(c1, c2), dim, True, params)


def cost_game(theta1, theta2, table, dim: int = 1, scale: float = 1.0,
              p_max=4.0) -> IsaacsSpec:
    """Strategy-independent inner H = scale/2 |p|^2 with a coupled cost matrix."""
    H0 = quadratic(dim, scale, p_max)
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    inner = [[H0] * len(t2) for _ in t1]
    tab = np.asarray(table, dtype=float)
    sep = bool(np.allclose(tab - tab[:, :1] - tab[:1, :] + tab[0, 0], 0.0))
    return IsaacsSpec(t1, t2, inner, matrix_cost(tab), dim, sep,
                      {"kind": "cost-game", "scale": scale, "table": tab.tolist()})


def product_cost_table(theta1: Sequence[float], theta2: Sequence[float]) -> np.ndarray:
    return np.outer(np.asarray(theta1, dtype=float), np.asarray(theta2, dtype=float))


def spec_from_config(block: dict, dim: int) -> IsaacsSpec:
    """Build an IsaacsSpec from a scenario ``hamiltonian`` block with variant "isaacs"."""
    theta1 = block["theta1"]
    theta2 = block["theta2"]
    inner = block.get("inner", {})
    cost = block.get("cost", {"kind": "separable"})
    scale = float(inner.get("scale", 1.0))
    p_max = block.get("p_max", 4.0)
    kind = cost.get("kind", "separable")
    if kind == "separable":
        c1 = cost.get("c1", [0.0] * len(theta1))
        c2 = cost.get("c2", [0.0] * len(theta2))
        spec = drift_game(theta1, theta2, c1, c2, scale, p_max, bool(inner.get("drift", True)))
    elif kind in ("matrix", "product"):
        if inner.get("drift", False):
            raise ConfigurationError("coupled costs are supported with drift-free inner H only")
        t1 = np.asarray(theta1, dtype=float).reshape(len(theta1), -1)[:, 0]
        t2 = np.asarray(theta2, dtype=float).reshape(len(theta2), -1)[:, 0]
        table = product_cost_table(t1, t2) if kind == "product" else cost["table"]
        spec = cost_game(t1, t2, table, dim, scale, p_max)
    else:
        raise ConfigurationError(f"unknown cost kind {kind!r}")
    if spec.dim != dim:
        raise ConfigurationError("strategy vectors do not match the domain dimension")
    return spec
