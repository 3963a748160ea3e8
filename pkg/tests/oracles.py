"""Independent reference computations used by the tests."""

import numpy as np
import scipy.sparse as sp


def central_difference(f, x, eps=1e-6):
    """Gradient of a scalar function by central differences, one coordinate at a time."""
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def _fem_1d(n):
    h = 1.0 / n
    k = sp.diags([-np.ones(n), np.r_[1.0, 2 * np.ones(n - 1), 1.0], -np.ones(n)], [-1, 0, 1]) / h
    m = sp.diags([np.ones(n), np.r_[2.0, 4 * np.ones(n - 1), 2.0], np.ones(n)], [-1, 0, 1]) * h / 6
    return k.tocsr(), m.tocsr()


def q1_laplace_stiffness(nx, ny):
    """Q1 stiffness of the Laplacian on a uniform grid as a tensor product of 1D matrices."""
    kx, mx = _fem_1d(nx)
    ky, my = _fem_1d(ny)
    return (sp.kron(my, kx) + sp.kron(ky, mx)).tocsr()


def lbfgs_compact_B(S, Y, gamma):
    """Dense L-BFGS Hessian approximation in compact form with B0 = I / gamma."""
    n = S.shape[0]
    b0 = np.eye(n) / gamma
    sy = S.T @ Y
    L = np.tril(sy, -1)
    D = np.diag(np.diag(sy))
    W = np.hstack([b0 @ S, Y])
    M = np.block([[S.T @ b0 @ S, L], [L.T, -D]])
    return b0 - W @ np.linalg.solve(M, W.T)


def aa1_dense_B(S, Y, lam=0.0):
    """Dense type-I Anderson Jacobian approximation I + (Y - S)(S^T S + lam I)^{-1} S^T."""
    k = S.shape[1]
    return np.eye(S.shape[0]) + (Y - S) @ np.linalg.solve(S.T @ S + lam * np.eye(k), S.T)
