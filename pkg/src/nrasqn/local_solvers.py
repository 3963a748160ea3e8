"""Backtracking line search, damped Newton and the FAS-corrected coarse objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nrasqn.problem import Objective

log = logging.getLogger(__name__)


@dataclass
class LineSearchConfig:
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    initial_step: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_backtracks < 0 or self.initial_step <= 0.0:
            raise ValueError("max_backtracks must be >= 0 and initial_step > 0")


class LineSearchError(RuntimeError):
    """No trial step satisfied the sufficient-decrease test.

    ``trials`` holds the ``(alpha, value)`` pairs that were evaluated, largest
    step first; ``value0`` is the objective at the base point.
    """

    def __init__(self, trials: list[tuple[float, float]], value0: float, slope: float):
        self.trials = trials
        self.value0 = value0
        self.slope = slope
        super().__init__(
            f"line search failed after {len(trials)} trials (directional derivative {slope:.3e})"
        )

    @property
    def alpha(self) -> float:
        """Smallest step that was tried."""
        return self.trials[-1][0] if self.trials else 0.0

    def fallback_step(self) -> tuple[float, float]:
        """Last trial if it does not increase the objective, otherwise a zero step."""
        if self.trials and self.trials[-1][1] <= self.value0:
            return self.trials[-1]
        return 0.0, self.value0


def line_search(
    obj: Objective,
    x: np.ndarray,
    p: np.ndarray,
    cfg: LineSearchConfig | None = None,
    value0: float | None = None,
    grad0: np.ndarray | None = None,
) -> tuple[float, float]:
    """Backtracking Armijo search; returns ``(alpha, obj.eval(x + alpha p))``.

    For a non-descent direction the slope term is clipped at zero, so a step
    is never accepted when it increases the objective. Raises
    :class:`LineSearchError` when all ``max_backtracks + 1`` trials fail.
    """
    cfg = cfg or LineSearchConfig()
    f0 = obj.eval(x) if value0 is None else value0
    g0 = obj.grad(x) if grad0 is None else grad0
    slope = float(np.dot(g0, p))
    decrease = cfg.c1 * min(slope, 0.0)
    alpha = cfg.initial_step
    trials = []
    for _ in range(cfg.max_backtracks + 1):
        f = obj.eval(x + alpha * p)
        trials.append((alpha, f))
        if np.isfinite(f) and f <= f0 + alpha * decrease:
            return alpha, f
        alpha *= cfg.shrink
    raise LineSearchError(trials, f0, slope)


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-1
    max_iter: int = 20
    linear_solver: str = "direct"
    cg_tol: float = 1e-10
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    residual0: float = 0.0
    residual: float = 0.0
    converged: bool = False
    reason: str = ""
    residuals: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    fallback_steps: int = 0
    line_search_failures: int = 0


def _newton_direction(h, g: np.ndarray, cfg: NewtonConfig) -> np.ndarray | None:
    try:
        if cfg.linear_solver == "direct":
            p = spla.spsolve(sp.csc_matrix(h), -g)
        else:
            d = h.diagonal()
            if np.any(d <= 0):
                return None
            m = sp.diags(1.0 / d)
            p, info = spla.cg(h, -g, rtol=cfg.cg_tol, atol=0.0, M=m, maxiter=10 * len(g))
            if info != 0:
                return None
    except (RuntimeError, np.linalg.LinAlgError):
        return None
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if not np.all(np.isfinite(p)):
        return None
    return p


def newton_solve(
    obj: Objective, x0: np.ndarray, cfg: NewtonConfig | None = None
) -> tuple[np.ndarray, NewtonReport]:
    """Damped Newton iteration with Armijo backtracking.

    Stops once ``|F| < abs_tol`` or ``|F| < rel_tol |F(x0)|`` (checked before
    every step, so a converged start takes zero iterations) or after
    ``max_iter`` steps. A failed or non-descent linear solve is replaced by
    the steepest-descent direction for that step.
    """
    cfg = cfg or NewtonConfig()
    x = np.array(x0, dtype=float)
    g = obj.grad(x)
    f = obj.eval(x)
    r0 = float(np.linalg.norm(g))
    rep = NewtonReport(residual0=r0, residual=r0, residuals=[r0])
    r = r0
    while True:
        if r < cfg.abs_tol:
            rep.converged, rep.reason = True, "abs_tol"
            break
        if r < cfg.rel_tol * r0:
            rep.converged, rep.reason = True, "rel_tol"
            break
        if rep.iterations >= cfg.max_iter:
            rep.reason = "max_iter"
            break
        p = _newton_direction(obj.hess(x), g, cfg)
        if p is None or np.dot(g, p) >= 0.0:
            p = -g
            rep.fallback_steps += 1
        try:
            alpha, f_new = line_search(obj, x, p, cfg.line_search, value0=f, grad0=g)
        except LineSearchError as err:
            rep.line_search_failures += 1
            alpha, f_new = err.fallback_step()
            if alpha == 0.0:
                rep.reason = "line_search"
                break
        x = x + alpha * p
        f = f_new
        g = obj.grad(x)
        r = float(np.linalg.norm(g))
        rep.iterations += 1
        rep.alphas.append(alpha)
        rep.residuals.append(r)
    rep.residual = r
    return x, rep


class CoarseObjective(Objective):
    """``psi_0(x0) + <dg0, x0>`` with the defect ``dg0`` frozen at construction.

    The defect is zeroed at constrained coarse nodes, which keeps the coarse
    Dirichlet values fixed during the coarse Newton solve.
    """

    def __init__(self, base: Objective, defect: np.ndarray, free: np.ndarray):
        self.base = base
        self.dimension = base.dimension
        self.defect = np.where(free, defect, 0.0)

    @property
    def free_dofs(self):
        return self.base.free_dofs

    def eval(self, x):
        return self.base.eval(x) + float(self.defect @ x)

    def grad(self, x):
        return self.base.grad(x) + self.defect

    def hess(self, x):
        return self.base.hess(x)


def coarse_objective(coarse, base_obj: Objective, x_fine: np.ndarray) -> CoarseObjective:
    """First-order consistent coarse model of ``base_obj`` around ``x_fine``."""
    x_fine = np.asarray(x_fine, dtype=float)
    if x_fine.shape != (coarse.interp.shape[0],) or base_obj.dimension != coarse.interp.shape[0]:
        raise ValueError("fine vector and objective must match the coarse space's fine grid")
    psi0 = base_obj.coarsen(coarse.coarse_mesh)
    x0 = coarse.project_primal(x_fine)
    defect = coarse.restrict_dual(base_obj.grad(x_fine)) - psi0.grad(x0)
    return CoarseObjective(psi0, defect, coarse.coarse_free)
