"""Structured Q1 meshes on the unit square and the minimal-surface functional.

Nodes are numbered lexicographically, ``node = j * (nx + 1) + i`` for column
``i`` and row ``j``. Elements list their nodes counterclockwise starting at the
lower-left corner.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

_GAUSS = 1.0 / np.sqrt(3.0)
# reference corners, counterclockwise
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_QPOINTS = np.array([[-_GAUSS, -_GAUSS], [_GAUSS, -_GAUSS], [_GAUSS, _GAUSS], [-_GAUSS, _GAUSS]])

BOUNDARY_SIDES = ("left", "right", "bottom", "top")


def _reference_gradients() -> np.ndarray:
    """Shape function derivatives on the reference square, shape (qp, node, 2)."""
    xi, eta = _QPOINTS[:, 0, None], _QPOINTS[:, 1, None]
    ca, cb = _CORNERS[None, :, 0], _CORNERS[None, :, 1]
    dxi = 0.25 * ca * (1.0 + cb * eta)
    deta = 0.25 * cb * (1.0 + ca * xi)
    return np.stack([dxi, deta], axis=-1)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured quadrilateral grid of ``nx`` by ``ny`` elements on (0,1)^2."""

    nx: int
    ny: int
    node_coords: np.ndarray
    elem_conn: np.ndarray
    boundary_tags: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_elements(self) -> int:
        return len(self.elem_conn)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_tags != "interior")

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_tags == "interior")

    @cached_property
    def _geometry(self) -> tuple[np.ndarray, np.ndarray]:
        dref = _reference_gradients()
        xe = self.node_coords[self.elem_conn]  # (E, 4, 2)
        e10, e23 = xe[:, 1] - xe[:, 0], xe[:, 2] - xe[:, 3]
        e30, e21 = xe[:, 3] - xe[:, 0], xe[:, 2] - xe[:, 1]
        xi, eta = _QPOINTS[:, 0], _QPOINTS[:, 1]
        # jac[e, q, i, j] = d x_i / d xi_j, written so the bilinear part vanishes
        # exactly on parallelograms
        jac = np.empty((len(xe), 4, 2, 2))
        jac[..., 0] = 0.25 * (e10 + e23)[:, None] + 0.25 * eta[None, :, None] * (e23 - e10)[:, None]
        jac[..., 1] = 0.25 * (e30 + e21)[:, None] + 0.25 * xi[None, :, None] * (e21 - e30)[:, None]
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0.0):
            raise ValueError("mesh has an inverted or degenerate element")
        inv_t = np.empty_like(jac)
        inv_t[..., 0, 0] = jac[..., 1, 1] / det
        inv_t[..., 0, 1] = -jac[..., 1, 0] / det
        inv_t[..., 1, 0] = -jac[..., 0, 1] / det
        inv_t[..., 1, 1] = jac[..., 0, 0] / det
        dphys = np.einsum("eqij,qaj->eqai", inv_t, dref)
        return dphys, det  # Gauss weights are all 1

    @property
    def shape_gradients(self) -> np.ndarray:
        """Physical shape-function gradients, shape (E, qp, node, 2)."""
        return self._geometry[0]

    @property
    def jacobian_dets(self) -> np.ndarray:
        return self._geometry[1]

    @cached_property
    def node_elements(self) -> sp.csr_matrix:
        """Node-to-element incidence, shape (n_nodes, n_elements)."""
        rows = self.elem_conn.ravel()
        cols = np.repeat(np.arange(self.n_elements), 4)
        data = np.ones(rows.size, dtype=np.int8)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_elements))

    @cached_property
    def node_adjacency(self) -> sp.csr_matrix:
        """Boolean node graph: nodes sharing an element, including self loops."""
        inc = self.node_elements.astype(np.int32)
        adj = (inc @ inc.T).tocsr()
        adj.data[:] = 1
        return adj

    def elements_touching(self, nodes: np.ndarray) -> np.ndarray:
        """Sorted indices of elements having at least one vertex in ``nodes``."""
        return np.unique(self.node_elements[nodes].indices)


def build_mesh(nx: int, ny: int) -> Mesh:
    """Uniform ``nx`` x ``ny`` quadrilateral mesh of the unit square."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"element counts must be positive integers, got ({nx}, {ny})")
    nx, ny = int(nx), int(ny)
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    ii, jj = ii.ravel(), jj.ravel()
    coords = np.column_stack([ii / nx, jj / ny])

    ei, ej = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (ej * (nx + 1) + ei).ravel()
    conn = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    tags = np.full(coords.shape[0], "interior", dtype=object)
    tags[jj == ny] = "top"
    tags[jj == 0] = "bottom"
    # left/right win at corners
    tags[ii == nx] = "right"
    tags[ii == 0] = "left"
    return Mesh(nx, ny, coords, conn, tags.astype(str))


def _boundary_trace(coords: np.ndarray, tags: np.ndarray) -> np.ndarray:
    x1, x2 = coords[:, 0], coords[:, 1]
    vals = np.zeros(len(coords))
    vals[tags == "left"] = -0.5 * np.sin(2 * np.pi * x2[tags == "left"])
    vals[tags == "right"] = 0.5 * np.sin(2 * np.pi * x2[tags == "right"])
    vals[tags == "bottom"] = -0.5 * np.sin(2 * np.pi * x1[tags == "bottom"])
    vals[tags == "top"] = 0.5 * np.sin(2 * np.pi * x1[tags == "top"])
    return vals


def boundary_vector(mesh: Mesh) -> np.ndarray:
    """Dirichlet data of the minimal-surface problem as a nodal vector (zero inside)."""
    return _boundary_trace(mesh.node_coords, mesh.boundary_tags)


def dirichlet_values(mesh: Mesh) -> dict[int, float]:
    """Prescribed sinusoidal boundary traces at every boundary node."""
    vals = boundary_vector(mesh)
    return {int(n): float(vals[n]) for n in mesh.boundary_nodes}


def _check(mesh: Mesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"expected a nodal vector of length {mesh.n_nodes}, got shape {u.shape}")
    return u


def _qp_fields(mesh: Mesh, u: np.ndarray, elems=None):
    dphi = mesh.shape_gradients
    det = mesh.jacobian_dets
    conn = mesh.elem_conn
    if elems is not None:
        dphi, det, conn = dphi[elems], det[elems], conn[elems]
    ue = u[conn]  # (E, 4)
    g0 = (dphi[..., 0] * ue[:, None, :]).sum(axis=2)
    g1 = (dphi[..., 1] * ue[:, None, :]).sum(axis=2)
    f = np.sqrt(1.0 + g0 * g0 + g1 * g1)
    return dphi, det, conn, g0, g1, f


def energy(mesh: Mesh, u) -> float:
    """Surface area of the graph of the Q1 function ``u`` (2x2 Gauss)."""
    u = _check(mesh, u)
    _, det, _, _, _, f = _qp_fields(mesh, u)
    return float(np.sum(det * f))


def _assemble_gradient(mesh: Mesh, u: np.ndarray, elems=None) -> np.ndarray:
    dphi, det, conn, g0, g1, f = _qp_fields(mesh, u, elems)
    w = det / f
    # fixed summation order so subsets of elements reproduce the global entries bitwise
    local = np.zeros(conn.shape)
    for q in range(4):
        local += w[:, q, None] * (dphi[:, q, :, 0] * g0[:, q, None] + dphi[:, q, :, 1] * g1[:, q, None])
    return np.bincount(conn.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def _element_hessians(mesh: Mesh, u: np.ndarray, elems=None):
    dphi, det, conn, g0, g1, f = _qp_fields(mesh, u, elems)
    a = det / f
    b = det / f**3
    # C = a I - b g g^T at every quadrature point
    c00 = a - b * g0 * g0
    c01 = -b * g0 * g1
    c11 = a - b * g1 * g1
    d0, d1 = dphi[..., 0], dphi[..., 1]
    t0 = c00[..., None] * d0 + c01[..., None] * d1
    t1 = c01[..., None] * d0 + c11[..., None] * d1
    ke = np.einsum("eqa,eqb->eab", t0, d0) + np.einsum("eqa,eqb->eab", t1, d1)
    return conn, ke


def _free_mask(mesh: Mesh) -> np.ndarray:
    return mesh.boundary_tags == "interior"


def gradient(mesh: Mesh, u) -> np.ndarray:
    """Nodal gradient of :func:`energy`, zero at Dirichlet nodes."""
    u = _check(mesh, u)
    g = _assemble_gradient(mesh, u)
    g[mesh.boundary_nodes] = 0.0
    return g


def hessian(mesh: Mesh, u) -> sp.csr_matrix:
    """Sparse Hessian of :func:`energy` with identity rows/columns at Dirichlet nodes."""
    u = _check(mesh, u)
    conn, ke = _element_hessians(mesh, u)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = mesh.n_nodes
    h = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    mask = sp.diags(_free_mask(mesh).astype(float))
    fixed = sp.diags((~_free_mask(mesh)).astype(float))
    return (mask @ h @ mask + fixed).tocsr()


def gradient_rows(mesh: Mesh, u, rows: np.ndarray) -> np.ndarray:
    """Entries ``rows`` of :func:`gradient`, assembling only the elements that touch them."""
    u = _check(mesh, u)
    elems = mesh.elements_touching(rows)
    g = _assemble_gradient(mesh, u, elems)
    g[mesh.boundary_nodes] = 0.0
    return g[rows]


def hessian_block(mesh: Mesh, u, rows: np.ndarray) -> sp.csr_matrix:
    """Principal submatrix ``H[rows][:, rows]`` of :func:`hessian`."""
    u = _check(mesh, u)
    elems = mesh.elements_touching(rows)
    conn, ke = _element_hessians(mesh, u, elems)
    local = np.full(mesh.n_nodes, -1)
    local[rows] = np.arange(len(rows))
    fixed = local[mesh.boundary_nodes]
    local[mesh.boundary_nodes] = -1
    lc = local[conn]
    r = np.repeat(lc, 4, axis=1).ravel()
    c = np.tile(lc, (1, 4)).ravel()
    keep = (r >= 0) & (c >= 0)
    m = len(rows)
    h = sp.csr_matrix((ke.ravel()[keep], (r[keep], c[keep])), shape=(m, m))
    fixed = fixed[fixed >= 0]
    if fixed.size:
        h = h + sp.csr_matrix((np.ones(fixed.size), (fixed, fixed)), shape=(m, m))
    return h
