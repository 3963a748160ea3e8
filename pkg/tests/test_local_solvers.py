import numpy as np
import pytest
import scipy.sparse as sp

from nrasqn import (
    LineSearchConfig,
    LineSearchError,
    MinimalSurface,
    NewtonConfig,
    QuadraticObjective,
    build_coarse,
    coarse_objective,
    line_search,
    newton_solve,
)
from nrasqn.problem import Objective


class Scalar(Objective):
    dimension = 1

    def __init__(self, f, df):
        self.f, self.df = f, df

    def eval(self, x):
        return float(self.f(x[0]))

    def grad(self, x):
        return np.array([self.df(x[0])])


def test_exact_minimizer_accepted_first():
    obj = Scalar(lambda t: 0.5 * t * t, lambda t: t)
    alpha, f = line_search(obj, np.array([1.0]), np.array([-1.0]))
    assert alpha == 1.0 and f == 0.0


def test_quartic_armijo():
    obj = Scalar(lambda t: t**4, lambda t: 4 * t**3)
    # Armijo test: (1 - a)^4 <= 1 - 1e-4 * 4 a; a = 1 gives 0 <= 0.9996
    alpha, _ = line_search(obj, np.array([1.0]), np.array([-1.0]), LineSearchConfig(c1=1e-4, shrink=0.5))
    assert alpha == 1.0


def test_backtracking_sequence():
    obj = Scalar(lambda t: t**4, lambda t: 4 * t**3)
    cfg = LineSearchConfig(c1=1e-4, shrink=0.5)
    alpha, f = line_search(obj, np.array([1.0]), np.array([-4.0]), cfg)
    # trials 1, 0.5, 0.25: (1-4a)^4 <= 1 - 16e-4 a fails at a=1 (81) and a=0.5 (1), holds at 0.25
    assert alpha == 0.25 and f == 0.0


def test_ascent_direction_fails():
    obj = Scalar(lambda t: 0.5 * t * t, lambda t: t)
    cfg = LineSearchConfig(max_backtracks=12)
    with pytest.raises(LineSearchError) as info:
        line_search(obj, np.array([1.0]), np.array([1.0]), cfg)
    err = info.value
    assert len(err.trials) == 13
    assert err.alpha == pytest.approx(0.5**12)
    assert err.fallback_step() == (0.0, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        LineSearchConfig(c1=1.5)
    with pytest.raises(ValueError):
        LineSearchConfig(shrink=1.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0.0)


def _spd(rng, n):
    q = rng.normal(size=(n, n))
    return q @ q.T + n * np.eye(n)


@pytest.mark.parametrize("solver", ["direct", "cg"])
def test_newton_exact_on_quadratic(rng, solver):
    A = _spd(rng, 8)
    obj = QuadraticObjective(A, rng.normal(size=8))
    x, rep = newton_solve(obj, np.zeros(8), NewtonConfig(abs_tol=1e-9, rel_tol=1e-12, linear_solver=solver))
    assert rep.iterations == 1 and rep.alphas == [1.0] and rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(A, obj.b), rtol=1e-9)


def test_newton_zero_iterations_at_solution(rng):
    A = _spd(rng, 5)
    obj = QuadraticObjective(A, rng.normal(size=5))
    x, rep = newton_solve(obj, obj.minimizer(), NewtonConfig(abs_tol=1e-10))
    assert rep.iterations == 0 and rep.converged


def test_newton_indefinite_falls_back_to_gradient():
    obj = QuadraticObjective(sp.diags([1.0, -1.0]), [0.0, 0.0])
    # Newton direction from (1, 1) is (-1, -1): slope 1*(-1) + (-1)(-1) = 0, not descent
    x, rep = newton_solve(obj, np.array([1.0, 1.0]), NewtonConfig(max_iter=1))
    assert rep.fallback_steps == 1
    assert obj.eval(x) < obj.eval(np.array([1.0, 1.0]))


def test_newton_minimal_surface_quadratic_tail(surf16):
    x, rep = newton_solve(surf16, surf16.initial_guess(), NewtonConfig(abs_tol=1e-11, rel_tol=1e-14, max_iter=30))
    assert rep.converged
    r = np.array(rep.residuals)
    r = r[r > 1e-12]  # below this the residual is roundoff
    ratios = r[1:] / r[:-1] ** 2
    assert np.all(ratios[-2:] < 10.0), ratios


def test_newton_monotone_energy(surf16):
    obj = surf16
    x = obj.initial_guess()
    values = [obj.eval(x)]
    for _ in range(5):
        x, _ = newton_solve(obj, x, NewtonConfig(max_iter=1, rel_tol=1e-14))
        values.append(obj.eval(x))
    assert np.all(np.diff(values) <= 0)


def test_coarse_first_order_consistency(rng):
    fine = MinimalSurface.on_grid(20)
    cs = build_coarse(fine.mesh, 4, 4)
    x = fine.initial_guess()
    x[fine.free_dofs] = rng.normal(size=fine.free_dofs.size) * 0.3
    model = coarse_objective(cs, fine, x)
    x0 = cs.project_primal(x)
    lhs = model.grad(x0)
    rhs = cs.restrict_dual(fine.grad(x))
    free = cs.coarse_free
    assert np.max(np.abs(lhs[free] - rhs[free])) <= 1e-14 * max(np.max(np.abs(rhs)), 1.0)
    np.testing.assert_array_equal(lhs[~free], 0.0)


def test_coarse_equal_fine_has_no_defect(rng):
    fine = MinimalSurface.on_grid(6)
    cs = build_coarse(fine.mesh, 6, 6)
    x = fine.initial_guess() + 0.1 * rng.normal(size=fine.dimension) * (fine.mesh.boundary_tags == "interior")
    model = coarse_objective(cs, fine, x)
    np.testing.assert_allclose(model.defect, 0.0, atol=1e-15)
    assert model.eval(x) == pytest.approx(fine.eval(x), abs=1e-14)


def test_coarse_dimension_check():
    fine = MinimalSurface.on_grid(8)
    cs = build_coarse(fine.mesh, 4, 4)
    with pytest.raises(ValueError):
        coarse_objective(cs, fine, np.zeros(5))
