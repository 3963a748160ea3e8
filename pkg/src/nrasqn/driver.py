"""Outer solution loops.

``solve`` runs one of

* plain L-BFGS / AA-I on the gradient ``F``,
* L-BFGS / AA-I on the left-preconditioned residual ``x - G(x)``,
* L-BFGS / AA-I on ``F`` after an NRAS half step (right preconditioning),
* damped Newton, or the bare two-level NRAS fixed-point iteration,

and logs the true residual ``|F(x)|`` after every outer iteration.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nrasqn.local_solvers import LineSearchConfig, LineSearchError, line_search
from nrasqn.nras import NrasConfig, Preconditioner, SolverFailure
from nrasqn.problem import Objective
from nrasqn.qn import SecantHistory

log = logging.getLogger(__name__)

METHODS = ("lbfgs", "aa1", "newton", "tlnras")
PRECONDS = ("none", "left", "right")
HISTORY_COLUMNS = ("iter", "r_norm", "alpha", "inner_iters", "coarse_iters", "time_s")


@dataclass
class OuterConfig:
    method: str = "lbfgs"
    precond: str = "none"
    memory: int = 7
    rtol: float = 1e-6
    atol: float = 1e-7
    max_outer: int = 1000
    nras: NrasConfig | None = None
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    merit: str = "energy"
    timing: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.precond not in PRECONDS:
            raise ValueError(f"precond must be one of {PRECONDS}, got {self.precond!r}")
        if self.merit not in ("energy", "residual"):
            raise ValueError("merit must be 'energy' or 'residual'")
        if self.memory < 1 or self.max_outer < 0 or self.rtol <= 0 or self.atol <= 0:
            raise ValueError("memory >= 1, max_outer >= 0 and positive tolerances are required")
        needs_nras = self.method == "tlnras" or (
            self.method in ("lbfgs", "aa1") and self.precond != "none"
        )
        if needs_nras and self.nras is None:
            raise ValueError(f"{self.method}/{self.precond} requires an NRAS configuration")


@dataclass
class ConvergenceRecord:
    """Per-iteration history; row 0 holds the initial residual."""

    rows: list[tuple] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    converged: bool = False
    status: str = ""
    g_calls: int = 0
    nras_stats: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.rows) - 1

    @property
    def residuals(self) -> np.ndarray:
        return np.array([row[1] for row in self.rows])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([row[2] for row in self.rows])

    def as_dicts(self) -> list[dict]:
        return [dict(zip(HISTORY_COLUMNS, row)) for row in self.rows]


class _ResidualMerit(Objective):
    """``0.5 |F(x)|^2`` as a line-search merit function."""

    def __init__(self, obj: Objective):
        self.obj = obj
        self.dimension = obj.dimension

    def eval(self, x):
        g = self.obj.grad(x)
        return 0.5 * float(g @ g)

    def grad(self, x):
        return self.obj.hess(x) @ self.obj.grad(x)


class _Loop:
    """Shared bookkeeping of one outer solve."""

    def __init__(self, obj: Objective, x0, cfg: OuterConfig):
        self.obj = obj
        self.cfg = cfg
        self.merit = obj if cfg.merit == "energy" else _ResidualMerit(obj)
        self.record = ConvergenceRecord()
        self.t0 = time.perf_counter()
        self.x = np.array(x0, dtype=float)
        if self.x.shape != (obj.dimension,):
            raise ValueError(f"x0 must have length {obj.dimension}")
        self.g = obj.grad(self.x)
        self.r0 = float(np.linalg.norm(self.g))
        self.best = (self.r0, self.x.copy())
        self._inner = 0
        self._coarse = 0
        self.record.rows.append((0, self.r0, 0.0, 0, 0, 0.0))
        self.record.energies.append(obj.eval(self.x))

    def converged(self) -> bool:
        r = self.record.rows[-1][1]
        return r < self.cfg.atol or r < self.cfg.rtol * self.r0

    def done(self) -> bool:
        if self.converged():
            self.record.converged = True
            self.record.status = "converged"
            return True
        if self.record.iterations >= self.cfg.max_outer:
            self.record.status = "max_outer"
            return True
        return False

    def count(self, stats):
        self._inner += stats.inner_iterations
        self._coarse += stats.coarse_iterations
        self.record.nras_stats.append(stats)

    def log_step(self, x_new, g_new, alpha: float):
        self.x, self.g = x_new, g_new
        r = float(np.linalg.norm(g_new))
        if r < self.best[0]:
            self.best = (r, x_new.copy())
        elapsed = time.perf_counter() - self.t0 if self.cfg.timing else 0.0
        k = self.record.iterations + 1
        self.record.rows.append((k, r, float(alpha), self._inner, self._coarse, elapsed))
        self.record.energies.append(self.obj.eval(x_new))
        self._inner = self._coarse = 0

    def search(self, x, p, value0=None, grad0=None):
        """Armijo step on the merit function; ``None`` if it failed."""
        if self.merit is not self.obj:
            value0 = grad0 = None
        try:
            return line_search(self.merit, x, p, self.cfg.line_search, value0, grad0)[0]
        except LineSearchError as err:
            return err

    def result(self):
        if not self.record.converged:
            return self.best[1], self.record
        return self.x, self.record


def _qn_direction(hist: SecantHistory, residual, grad):
    """QN direction, or scaled steepest descent on the residual if it is not descent."""
    p = hist.apply_inverse(residual)
    if float(grad @ p) < 0.0:
        return p, False
    log.info("non-descent quasi-Newton direction; clearing %d secant pairs", len(hist))
    p = -hist.gamma * residual
    hist.clear()
    return p, True


def _step(loop: _Loop, hist: SecantHistory, x, f, g, residual):
    """Direction and accepted step length from ``x`` (energy ``f``, gradient ``g``)."""
    p, reset = _qn_direction(hist, residual, g)
    out = loop.search(x, p, f, g)
    if isinstance(out, LineSearchError) and not reset:
        log.info("line search failed on the quasi-Newton direction; restarting history")
        p = -hist.gamma * residual
        hist.clear()
        out = loop.search(x, p, f, g)
    if isinstance(out, LineSearchError):
        alpha, _ = out.fallback_step()
        log.warning("outer line search failed; accepting alpha=%g", alpha)
        return p, alpha
    return p, out


def _run_plain(loop: _Loop):
    cfg, obj = loop.cfg, loop.obj
    hist = SecantHistory(cfg.memory, cfg.method)
    f = obj.eval(loop.x)
    while not loop.done():
        x, g = loop.x, loop.g
        p, alpha = _step(loop, hist, x, f, g, g)
        if alpha == 0.0:
            loop.record.status = "stalled"
            break
        x_new = x + alpha * p
        g_new = obj.grad(x_new)
        hist.push(x_new - x, g_new - g)
        f = obj.eval(x_new)
        loop.log_step(x_new, g_new, alpha)


def _run_newton(loop: _Loop):
    obj = loop.obj
    f = obj.eval(loop.x)
    while not loop.done():
        x, g = loop.x, loop.g
        try:
            p = spla.spsolve(sp.csc_matrix(obj.hess(x)), -g)
        except RuntimeError:
            p = None
        if p is None or not np.all(np.isfinite(p)) or float(g @ p) >= 0.0:
            p = -g
        out = loop.search(x, p, f, g)
        alpha = out.fallback_step()[0] if isinstance(out, LineSearchError) else out
        if alpha == 0.0:
            loop.record.status = "stalled"
            break
        x_new = x + alpha * p
        f = obj.eval(x_new)
        loop.log_step(x_new, obj.grad(x_new), alpha)


def _run_tlnras(loop: _Loop, G: Preconditioner):
    while not loop.done():
        x_new, stats = G(loop.x)
        loop.count(stats)
        loop.log_step(x_new, loop.obj.grad(x_new), stats.alpha)


def _run_left(loop: _Loop, G: Preconditioner):
    cfg, obj = loop.cfg, loop.obj
    hist = SecantHistory(cfg.memory, cfg.method)
    f = obj.eval(loop.x)
    fl = None
    while not loop.done():
        x, g = loop.x, loop.g
        if fl is None:
            xp, stats = G(x)
            loop.count(stats)
            fl = x - xp
        p, alpha = _step(loop, hist, x, f, g, fl)
        if alpha == 0.0:
            loop.record.status = "stalled"
            break
        x_new = x + alpha * p
        # G(x_new) serves both y_L and the next iteration's preconditioned residual
        xp_new, stats = G(x_new)
        loop.count(stats)
        fl_new = x_new - xp_new
        hist.push(x_new - x, fl_new - fl)
        fl = fl_new
        f = obj.eval(x_new)
        loop.log_step(x_new, obj.grad(x_new), alpha)


def _run_right(loop: _Loop, G: Preconditioner):
    cfg, obj = loop.cfg, loop.obj
    hist = SecantHistory(cfg.memory, cfg.method)
    while not loop.done():
        xp, stats = G(loop.x)
        loop.count(stats)
        gp = obj.grad(xp)
        fp = obj.eval(xp)
        if np.any(gp):
            p, alpha = _step(loop, hist, xp, fp, gp, gp)
        else:
            p, alpha = np.zeros_like(xp), 0.0
        x_new = xp + alpha * p
        g_new = obj.grad(x_new)
        if alpha > 0.0:
            hist.push(x_new - xp, g_new - gp)
        loop.log_step(x_new, g_new, alpha)


def solve(obj: Objective, x0, cfg: OuterConfig) -> tuple[np.ndarray, ConvergenceRecord]:
    """Minimize ``obj`` from ``x0`` (Dirichlet values already imposed).

    Terminates when ``|F(x)| < atol`` or ``|F(x)| < rtol |F(x0)|`` or after
    ``max_outer`` iterations, in which case the iterate with the smallest
    residual is returned and ``record.converged`` is False.
    """
    loop = _Loop(obj, x0, cfg)
    G = Preconditioner(obj, cfg.nras) if cfg.nras is not None else None
    try:
        if cfg.method == "newton":
            _run_newton(loop)
        elif cfg.method == "tlnras":
            _run_tlnras(loop, G)
        elif cfg.precond == "left":
            _run_left(loop, G)
        elif cfg.precond == "right":
            _run_right(loop, G)
        else:
            _run_plain(loop)
    except SolverFailure as err:
        log.error("NRAS preconditioner failed: %s", err)
        loop.record.status = "nras_failure"
    if G is not None:
        loop.record.g_calls = G.calls
    return loop.result()
