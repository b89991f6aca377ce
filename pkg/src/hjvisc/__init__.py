"""Value functions of first-order Hamilton-Jacobi problems on grids, with viscosity certificates."""

__version__ = "0.1.0"

from .containment import ContainmentSpec, standard_containment
from .grid import DomainGrid, build_grid
from .hamiltonian import HamiltonianSpec
from .legendre import conjugate, fenchel_young_gap
from .testfunc import SmoothTestFunction
from .value import ValueField, TimeValueField, solve_evolutionary, solve_stationary

__all__ = [
    "ContainmentSpec", "DomainGrid", "HamiltonianSpec", "SmoothTestFunction",
    "TimeValueField", "ValueField", "build_grid", "conjugate", "fenchel_young_gap",
    "solve_evolutionary", "solve_stationary", "standard_containment",
]
