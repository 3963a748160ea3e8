"""One- and two-level nonlinear restricted additive Schwarz (NRAS) steps.

Both variants map an iterate ``x`` to ``G(x)``: local minimization problems
are solved on overlapping subdomains from ``x`` and their corrections are kept
only on the owned part, summed, and damped by a line search on the global
objective. The two-level variant first applies a coarse correction built from
a first-order consistent coarse model.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from nrasqn.decomposition import CoarseSpace, Subspace, prolong_restricted, restrict
from nrasqn.local_solvers import (
    LineSearchConfig,
    LineSearchError,
    NewtonConfig,
    NewtonReport,
    coarse_objective,
    line_search,
    newton_solve,
)
from nrasqn.problem import Objective, restrict_objective

log = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    """Raised when no subdomain solve produced a usable correction."""

    def __init__(self, message: str, stats: "NrasStats"):
        super().__init__(message)
        self.stats = stats


def _subdomain_newton() -> NewtonConfig:
    return NewtonConfig(abs_tol=1e-10, rel_tol=1e-1, max_iter=20)


def _coarse_newton() -> NewtonConfig:
    return NewtonConfig(abs_tol=1e-12, rel_tol=1e-10, max_iter=5)


@dataclass
class NrasConfig:
    subspaces: list[Subspace]
    coarse: CoarseSpace | None = None
    subdomain_newton: NewtonConfig = field(default_factory=_subdomain_newton)
    coarse_newton: NewtonConfig = field(default_factory=_coarse_newton)
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    coarse_line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    threads: int = 1

    def __post_init__(self):
        if not self.subspaces:
            raise ValueError("at least one subspace is required")
        size = self.subspaces[0].size
        owned = np.concatenate([s.owned_dofs for s in self.subspaces])
        if any(s.size != size for s in self.subspaces) or len(np.unique(owned)) != owned.size:
            raise ValueError("subspaces must share one global size and own disjoint dofs")


@dataclass
class NrasStats:
    subdomain_reports: list[NewtonReport] = field(default_factory=list)
    coarse_report: NewtonReport | None = None
    alpha: float = 0.0
    alpha_hat: float = 0.0
    line_search_failed: bool = False
    coarse_failed: bool = False

    @property
    def inner_iterations(self) -> int:
        return sum(r.iterations for r in self.subdomain_reports)

    @property
    def coarse_iterations(self) -> int:
        return 0 if self.coarse_report is None else self.coarse_report.iterations


def _damped_step(obj: Objective, x: np.ndarray, d: np.ndarray, cfg: LineSearchConfig):
    """Step length along ``d`` and whether the Armijo search succeeded."""
    if not np.any(d):
        return 0.0, True
    try:
        alpha, _ = line_search(obj, x, d, cfg)
        return alpha, True
    except LineSearchError as err:
        alpha, _ = err.fallback_step()
        log.warning("NRAS line search failed (slope %.3e); using alpha=%g", err.slope, alpha)
        return alpha, False


def _local_solve(obj, sub, x, cfg):
    local = restrict_objective(obj, sub, x)
    z0 = restrict(sub, x)
    z, rep = newton_solve(local, z0, cfg)
    return prolong_restricted(sub, z - z0), rep


def _sweep(obj: Objective, x: np.ndarray, cfg: NrasConfig, stats: NrasStats) -> np.ndarray:
    """Summed restricted correction of all subdomain solves started at ``x``."""
    if cfg.threads > 1 and len(cfg.subspaces) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(
                pool.map(lambda s: _local_solve(obj, s, x, cfg.subdomain_newton), cfg.subspaces)
            )
    else:
        results = [_local_solve(obj, s, x, cfg.subdomain_newton) for s in cfg.subspaces]
    d = np.zeros_like(x)
    for corr, rep in results:
        d += corr
        stats.subdomain_reports.append(rep)
    if all(r.reason == "line_search" and r.iterations == 0 for r in stats.subdomain_reports):
        raise SolverFailure("every subdomain solve failed", stats)
    return d


def apply_one_level(obj: Objective, x: np.ndarray, cfg: NrasConfig) -> tuple[np.ndarray, NrasStats]:
    """One NRAS step ``x + alpha * sum_i P_i^0 (x_i^* - R_i x)``."""
    x = np.asarray(x, dtype=float)
    stats = NrasStats()
    d = _sweep(obj, x, cfg, stats)
    stats.alpha, ok = _damped_step(obj, x, d, cfg.line_search)
    stats.line_search_failed = not ok
    return x + stats.alpha * d, stats


def coarse_correction(obj: Objective, x: np.ndarray, coarse: CoarseSpace, cfg: NrasConfig, stats: NrasStats):
    """Coarse-level correction ``T0(x) = P0 (x0^* - Pi0 x)``."""
    x0 = coarse.project_primal(x)
    try:
        model = coarse_objective(coarse, obj, x)
        x0_star, rep = newton_solve(model, x0, cfg.coarse_newton)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        log.warning("coarse solve failed (%s); skipping coarse correction", err)
        stats.coarse_failed = True
        return np.zeros_like(x)
    stats.coarse_report = rep
    if not np.all(np.isfinite(x0_star)):
        log.warning("coarse solve diverged; skipping coarse correction")
        stats.coarse_failed = True
        return np.zeros_like(x)
    return coarse.prolong(x0_star - x0)


def apply_two_level(obj: Objective, x: np.ndarray, cfg: NrasConfig) -> tuple[np.ndarray, NrasStats]:
    """Multiplicative two-level step: coarse correction, then the subdomain sweep."""
    if cfg.coarse is None:
        raise ValueError("two-level NRAS needs a coarse space")
    x = np.asarray(x, dtype=float)
    stats = NrasStats()
    t0 = coarse_correction(obj, x, cfg.coarse, cfg, stats)
    stats.alpha_hat, ok_hat = _damped_step(obj, x, t0, cfg.coarse_line_search)
    y = x + stats.alpha_hat * t0
    d = _sweep(obj, y, cfg, stats)
    stats.alpha, ok = _damped_step(obj, y, d, cfg.line_search)
    stats.line_search_failed = not (ok and ok_hat)
    return y + stats.alpha * d, stats


class Preconditioner:
    """Nonlinear preconditioner ``G`` bound to an objective; counts its applications."""

    def __init__(self, obj: Objective, cfg: NrasConfig):
        self.obj = obj
        self.cfg = cfg
        self.calls = 0

    @property
    def two_level(self) -> bool:
        return self.cfg.coarse is not None

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, NrasStats]:
        self.calls += 1
        if self.two_level:
            return apply_two_level(self.obj, x, self.cfg)
        return apply_one_level(self.obj, x, self.cfg)
