"""Objective functions seen by the solvers.

Every objective exposes ``eval`` (the scalar), ``grad`` (its gradient) and,
when available, ``hess`` (a sparse symmetric matrix). Dirichlet constraints of
the minimal-surface problem are eliminated logically: the iterate keeps its full
nodal length, constrained entries of the gradient are zero and the matching
Hessian rows and columns are identity rows.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nrasqn import mesh_fe
from nrasqn.mesh_fe import Mesh


class Objective:
    """Base class for twice differentiable objectives on R^n."""

    dimension: int

    def eval(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x: np.ndarray) -> sp.spmatrix:
        raise NotImplementedError(f"{type(self).__name__} provides no Hessian")

    @property
    def has_hessian(self) -> bool:
        return type(self).hess is not Objective.hess

    @property
    def free_dofs(self) -> np.ndarray:
        """Indices of unconstrained degrees of freedom."""
        return np.arange(self.dimension)

    def coarsen(self, mesh) -> "Objective":
        raise NotImplementedError(f"{type(self).__name__} cannot be rediscretized")

    # Restricted objectives use these when a subclass can assemble locally.
    def grad_rows(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.grad(x)[rows]

    def hess_block(self, x: np.ndarray, rows: np.ndarray) -> sp.csr_matrix:
        h = sp.csr_matrix(self.hess(x))
        return h[rows][:, rows]


class QuadraticObjective(Objective):
    """``0.5 x^T A x - b^T x`` for a symmetric matrix ``A``."""

    def __init__(self, A, b=None):
        self.A = sp.csr_matrix(A)
        n = self.A.shape[0]
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        self.dimension = n

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.A @ x) - self.b @ x)

    def grad(self, x):
        return self.A @ np.asarray(x, dtype=float) - self.b

    def hess(self, x):
        return self.A

    def minimizer(self) -> np.ndarray:
        return spla.spsolve(self.A.tocsc(), self.b)


class MinimalSurface(Objective):
    """Q1 finite-element minimal-surface energy with sinusoidal Dirichlet data."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.dimension = mesh.n_nodes
        self.boundary = mesh_fe.boundary_vector(mesh)

    @classmethod
    def on_grid(cls, nx: int, ny: int | None = None) -> "MinimalSurface":
        return cls(mesh_fe.build_mesh(nx, nx if ny is None else ny))

    @property
    def free_dofs(self):
        return self.mesh.interior_nodes

    @property
    def fixed_dofs(self):
        return self.mesh.boundary_nodes

    def initial_guess(self) -> np.ndarray:
        """Zero in the interior, Dirichlet traces on the boundary."""
        return self.boundary.copy()

    def coarsen(self, mesh: Mesh) -> "MinimalSurface":
        """The same functional discretized on another mesh."""
        return type(self)(mesh)

    def eval(self, x):
        return mesh_fe.energy(self.mesh, x)

    def grad(self, x):
        return mesh_fe.gradient(self.mesh, x)

    def hess(self, x):
        return mesh_fe.hessian(self.mesh, x)

    def grad_rows(self, x, rows):
        return mesh_fe.gradient_rows(self.mesh, x, rows)

    def hess_block(self, x, rows):
        return mesh_fe.hessian_block(self.mesh, x, rows)


class RestrictedObjective(Objective):
    """The parent objective as a function of the ``overlap_dofs`` of a subspace only.

    Entries outside the subspace stay frozen at their anchor values; every
    evaluation goes through the parent on the composite vector so local and
    global quantities agree exactly.
    """

    def __init__(self, parent: Objective, subspace, anchor: np.ndarray):
        anchor = np.asarray(anchor, dtype=float)
        if anchor.shape != (parent.dimension,):
            raise ValueError(
                f"anchor must have length {parent.dimension}, got shape {anchor.shape}"
            )
        idx = np.asarray(subspace.overlap_dofs)
        if idx.size and (idx.min() < 0 or idx.max() >= parent.dimension):
            raise ValueError("subspace indices out of range for the parent objective")
        self.parent = parent
        self.subspace = subspace
        self.indices = idx
        self.frozen_complement = anchor.copy()
        self.dimension = idx.size

    def compose(self, z: np.ndarray) -> np.ndarray:
        x = self.frozen_complement.copy()
        x[self.indices] = z
        return x

    def eval(self, z):
        return self.parent.eval(self.compose(z))

    def grad(self, z):
        return self.parent.grad_rows(self.compose(z), self.indices)

    def hess(self, z):
        return self.parent.hess_block(self.compose(z), self.indices)

    @property
    def has_hessian(self):
        return self.parent.has_hessian


def restrict_objective(parent: Objective, subspace, anchor: np.ndarray) -> RestrictedObjective:
    """Objective of the local problem on ``subspace`` with complement frozen at ``anchor``."""
    return RestrictedObjective(parent, subspace, anchor)
