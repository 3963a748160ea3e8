"""Limited-memory secant engines: L-BFGS and type-I Anderson acceleration.

Both act on whatever residual they are handed and return the search direction
``-B^{-1} r`` for their implicit Hessian approximation ``B`` built from the
stored pairs ``(s, y)``.
"""

from __future__ import annotations

from collections import deque

import numpy as np

CURVATURE_EPS = 1e-10
TIKHONOV = 1e-12


class SecantHistory:
    """Bounded FIFO store of the ``m`` most recent secant pairs.

    ``kind="lbfgs"`` admits a pair only when ``<s, y> > curvature_eps |s| |y|``
    and rescales ``gamma = <s, y> / <y, y>`` (initial Hessian ``B0 = I / gamma``).
    ``kind="aa1"`` stores every pair.
    """

    def __init__(self, m: int, kind: str = "lbfgs", curvature_eps: float = CURVATURE_EPS):
        if m < 1:
            raise ValueError("memory must be at least 1")
        if kind not in ("lbfgs", "aa1"):
            raise ValueError(f"unknown secant method {kind!r}")
        self.m = m
        self.kind = kind
        self.curvature_eps = curvature_eps
        self.pairs: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=m)
        self.gamma = 1.0
        self.fallbacks = 0
        self.last_fallback = False

    def __len__(self):
        return len(self.pairs)

    @property
    def S(self) -> np.ndarray:
        return np.column_stack([s for s, _ in self.pairs]) if self.pairs else None

    @property
    def Y(self) -> np.ndarray:
        return np.column_stack([y for _, y in self.pairs]) if self.pairs else None

    def clear(self):
        self.pairs.clear()
        self.gamma = 1.0

    def push(self, s, y) -> bool:
        s = np.array(s, dtype=float)
        y = np.array(y, dtype=float)
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError(f"secant pair shapes differ: {s.shape} vs {y.shape}")
        if self.kind == "lbfgs":
            sy = float(s @ y)
            if not sy > self.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
                return False
            self.gamma = sy / float(y @ y)
        elif not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
            return False
        self.pairs.append((s, y))
        return True

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        if self.kind == "lbfgs":
            return lbfgs_apply_inverse(self, r)
        return aa1_apply_inverse(self, r)


def push_pair(hist: SecantHistory, s, y) -> bool:
    """Append ``(s, y)`` if the admission rule accepts it; returns whether it did."""
    return hist.push(s, y)


def lbfgs_apply_inverse(hist: SecantHistory, r) -> np.ndarray:
    """``-H r`` with ``H`` the L-BFGS inverse Hessian (two-loop recursion)."""
    q = np.array(r, dtype=float)
    pairs = list(hist.pairs)
    rho = [1.0 / float(s @ y) for s, y in pairs]
    a = np.empty(len(pairs))
    for i in range(len(pairs) - 1, -1, -1):
        s, y = pairs[i]
        a[i] = rho[i] * float(s @ q)
        q -= a[i] * y
    q *= hist.gamma
    for i, (s, y) in enumerate(pairs):
        b = rho[i] * float(y @ q)
        q += (a[i] - b) * s
    return -q


def aa1_apply_inverse(hist: SecantHistory, r) -> np.ndarray:
    """``-B^{-1} r`` for ``B = I + (Y - S)(S^T S + lam I)^{-1} S^T``.

    Woodbury reduces the inverse to ``I - (Y - S)(S^T Y + lam I)^{-1} S^T``,
    with ``lam = 1e-12 trace(S^T S) / m``. An unsolvable small system falls
    back to ``-r`` and sets ``hist.last_fallback``.
    """
    r = np.asarray(r, dtype=float)
    hist.last_fallback = False
    if not hist.pairs:
        return -r
    S, Y = hist.S, hist.Y
    k = S.shape[1]
    lam = TIKHONOV * float(np.sum(S * S)) / k
    small = S.T @ Y + lam * np.eye(k)
    try:
        coef = np.linalg.solve(small, S.T @ r)
    except np.linalg.LinAlgError:
        coef = None
    if coef is None or not np.all(np.isfinite(coef)):
        hist.fallbacks += 1
        hist.last_fallback = True
        return -r
    return -(r - (Y - S) @ coef)
