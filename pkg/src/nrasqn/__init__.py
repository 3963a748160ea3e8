"""Nonlinear restricted additive Schwarz preconditioned quasi-Newton solvers."""

from nrasqn.decomposition import (
    CoarseSpace,
    Subspace,
    build_coarse,
    extend_overlap,
    partition,
    prolong_restricted,
    restrict,
)
from nrasqn.driver import ConvergenceRecord, OuterConfig, solve
from nrasqn.local_solvers import (
    LineSearchConfig,
    LineSearchError,
    NewtonConfig,
    coarse_objective,
    line_search,
    newton_solve,
)
from nrasqn.mesh_fe import Mesh, build_mesh, dirichlet_values, energy, gradient, hessian
from nrasqn.nras import NrasConfig, Preconditioner, apply_one_level, apply_two_level
from nrasqn.problem import (
    MinimalSurface,
    Objective,
    QuadraticObjective,
    RestrictedObjective,
    restrict_objective,
)
from nrasqn.qn import SecantHistory, aa1_apply_inverse, lbfgs_apply_inverse

__version__ = "0.1.0"

__all__ = [
    "CoarseSpace",
    "ConvergenceRecord",
    "LineSearchConfig",
    "LineSearchError",
    "Mesh",
    "MinimalSurface",
    "NewtonConfig",
    "NrasConfig",
    "Objective",
    "OuterConfig",
    "Preconditioner",
    "QuadraticObjective",
    "RestrictedObjective",
    "SecantHistory",
    "Subspace",
    "aa1_apply_inverse",
    "apply_one_level",
    "apply_two_level",
    "build_coarse",
    "build_mesh",
    "coarse_objective",
    "dirichlet_values",
    "energy",
    "extend_overlap",
    "gradient",
    "hessian",
    "lbfgs_apply_inverse",
    "line_search",
    "newton_solve",
    "partition",
    "prolong_restricted",
    "restrict",
    "restrict_objective",
    "solve",
]
