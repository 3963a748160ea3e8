"""Subdomain decomposition and transfer operators for the Schwarz preconditioner."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from nrasqn import mesh_fe
from nrasqn.mesh_fe import Mesh


@dataclass(frozen=True, eq=False)
class Subspace:
    """Owned (non-overlapping) and overlapping dof sets of one subdomain.

    ``size`` is the length of the global vectors the subspace acts on.
    """

    owned_dofs: np.ndarray
    overlap_dofs: np.ndarray
    size: int

    def __post_init__(self):
        owned = np.unique(np.asarray(self.owned_dofs, dtype=np.int64))
        overlap = np.unique(np.asarray(self.overlap_dofs, dtype=np.int64))
        if not np.isin(owned, overlap).all():
            raise ValueError("owned dofs must be contained in the overlap dofs")
        if overlap.size and (overlap[0] < 0 or overlap[-1] >= self.size):
            raise ValueError("dof index out of range")
        object.__setattr__(self, "owned_dofs", owned)
        object.__setattr__(self, "overlap_dofs", overlap)

    @classmethod
    def from_indices(cls, owned, size: int, overlap=None) -> "Subspace":
        return cls(owned, owned if overlap is None else overlap, size)

    @cached_property
    def owned_local(self) -> np.ndarray:
        """Positions of the owned dofs inside ``overlap_dofs``."""
        return np.searchsorted(self.overlap_dofs, self.owned_dofs)


def restrict(sub: Subspace, x: np.ndarray) -> np.ndarray:
    """Gather the overlap entries of a global vector."""
    x = np.asarray(x)
    if x.shape != (sub.size,):
        raise ValueError(f"expected a vector of length {sub.size}, got shape {x.shape}")
    return x[sub.overlap_dofs]


def prolong_restricted(sub: Subspace, xi: np.ndarray) -> np.ndarray:
    """Scatter the owned entries of a local vector into a zero global vector."""
    xi = np.asarray(xi)
    if xi.shape != (sub.overlap_dofs.size,):
        raise ValueError(
            f"expected a local vector of length {sub.overlap_dofs.size}, got shape {xi.shape}"
        )
    out = np.zeros(sub.size, dtype=xi.dtype)
    out[sub.owned_dofs] = xi[sub.owned_local]
    return out


def _bisect(nodes: np.ndarray, ij: np.ndarray, n: int) -> list[np.ndarray]:
    if n == 1:
        return [nodes]
    span = ij.max(axis=0) - ij.min(axis=0)
    axis = 0 if span[0] >= span[1] else 1
    order = np.lexsort((ij[:, 1 - axis], ij[:, axis]))
    n_left = n // 2
    cut = int(round(len(nodes) * n_left / n))
    cut = min(max(cut, n_left), len(nodes) - (n - n_left))
    lo, hi = order[:cut], order[cut:]
    return _bisect(nodes[lo], ij[lo], n_left) + _bisect(nodes[hi], ij[hi], n - n_left)


def partition(mesh: Mesh, n: int) -> list[Subspace]:
    """Split the interior nodes into ``n`` blocks by recursive coordinate bisection.

    The longer extent of the current block is halved (in proportion to the
    number of parts on each side) until ``n`` blocks remain. Overlap sets equal
    the owned sets; use :func:`extend_overlap` to grow them.
    """
    free = mesh.interior_nodes
    if int(n) != n or n < 1:
        raise ValueError(f"number of subdomains must be a positive integer, got {n}")
    if n > free.size:
        raise ValueError(f"cannot split {free.size} unconstrained dofs into {n} subdomains")
    ij = np.column_stack([free % (mesh.nx + 1), free // (mesh.nx + 1)])
    blocks = _bisect(free, ij, int(n))
    return [Subspace.from_indices(b, mesh.n_nodes) for b in blocks]


def extend_overlap(mesh: Mesh, subspaces: list[Subspace], delta: int) -> list[Subspace]:
    """Grow every overlap set by ``delta`` layers of element neighbours.

    Dirichlet nodes never enter a subspace.
    """
    if delta < 0:
        raise ValueError("overlap must be non-negative")
    adj = mesh.node_adjacency
    free = mesh.boundary_tags == "interior"
    out = []
    for sub in subspaces:
        mask = np.zeros(mesh.n_nodes, dtype=bool)
        mask[sub.overlap_dofs] = True
        for _ in range(delta):
            mask = (adj @ mask.astype(np.int32)) > 0
        mask &= free
        mask[sub.overlap_dofs] = True
        out.append(Subspace(sub.owned_dofs, np.flatnonzero(mask), sub.size))
    return out


def _interp_1d(n_fine: int, n_coarse: int) -> sp.csr_matrix:
    """Piecewise linear interpolation from ``n_coarse`` to ``n_fine`` uniform intervals."""
    ratio = n_fine // n_coarse
    i = np.arange(n_fine + 1)
    left = np.minimum(i // ratio, n_coarse - 1)
    t = i / ratio - left
    rows = np.concatenate([i, i])
    cols = np.concatenate([left, left + 1])
    vals = np.concatenate([1.0 - t, t])
    keep = vals != 0.0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_fine + 1, n_coarse + 1))


def _inject_1d(n_fine: int, n_coarse: int) -> sp.csr_matrix:
    ratio = n_fine // n_coarse
    k = np.arange(n_coarse + 1)
    return sp.csr_matrix((np.ones(k.size), (k, k * ratio)), shape=(n_coarse + 1, n_fine + 1))


@dataclass(frozen=True, eq=False)
class CoarseSpace:
    """Nested coarse grid with Q1 interpolation ``interp`` and injection ``project``."""

    fine_mesh: Mesh
    coarse_mesh: Mesh
    interp: sp.csr_matrix
    project: sp.csr_matrix
    restriction: sp.csr_matrix = field(repr=False)

    @cached_property
    def coarse_free(self) -> np.ndarray:
        return self.coarse_mesh.boundary_tags == "interior"

    def prolong(self, xc: np.ndarray) -> np.ndarray:
        return self.interp @ xc

    def restrict_dual(self, g: np.ndarray) -> np.ndarray:
        return self.restriction @ g

    def project_primal(self, x: np.ndarray) -> np.ndarray:
        return self.project @ x


def build_coarse(fine: Mesh, ncx: int, ncy: int) -> CoarseSpace:
    """Coarse space on an ``ncx`` x ``ncy`` grid nested in ``fine``."""
    if ncx < 1 or ncy < 1 or fine.nx % ncx or fine.ny % ncy:
        raise ValueError(
            f"coarse grid {ncx}x{ncy} is not nested in the fine grid {fine.nx}x{fine.ny}"
        )
    coarse = mesh_fe.build_mesh(ncx, ncy)
    # lexicographic numbering: row index is the slow one
    interp = sp.kron(_interp_1d(fine.ny, ncy), _interp_1d(fine.nx, ncx), format="csr")
    project = sp.kron(_inject_1d(fine.ny, ncy), _inject_1d(fine.nx, ncx), format="csr")
    return CoarseSpace(fine, coarse, interp, project, interp.T.tocsr())
