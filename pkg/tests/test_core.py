import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from conetrace.core import (
    BandedOperator,
    Grid1D,
    TensorGrid2D,
    conjugate_gradient,
    damped_newton,
    jacobian_fd_check,
    smallest_eigenpair,
    solve_tridiagonal,
)
from conetrace.errors import InvalidInput, NoConvergence, SingularOperator

from .oracles import blowup_1d, discrete_dirichlet_eigenvalue


def laplacian_1d(n, h=1.0):
    return BandedOperator.tridiagonal(-np.ones(n - 1) / h**2, 2 * np.ones(n) / h**2, -np.ones(n - 1) / h**2, symmetric=True)


# grids


def test_grid_centres_are_cell_midpoints():
    g = Grid1D(10, 0.0, 1.0)
    assert g.h == pytest.approx(0.1)
    np.testing.assert_allclose(g.centers, 0.05 + 0.1 * np.arange(10), atol=1e-15)


def test_grid_rejects_empty_interval():
    with pytest.raises(InvalidInput):
        Grid1D(8, 1.0, 1.0)


def test_tensor_grid_rows_hit_the_ends():
    g = TensorGrid2D.build(12.0, 600, math.pi / 2, 96)
    assert g.t[0] == 0.0 and g.t[-1] == pytest.approx(12.0)
    assert g.row_of(6.0) == 300


# tridiagonal solver


def test_tridiagonal_identity():
    op = BandedOperator.tridiagonal(np.zeros(2), np.ones(3), np.zeros(2))
    np.testing.assert_allclose(solve_tridiagonal(op, [1, 2, 3]), [1, 2, 3])


def test_tridiagonal_hand_solved_laplacian():
    np.testing.assert_allclose(solve_tridiagonal(laplacian_1d(3), np.ones(3)), [1.5, 2.0, 1.5], rtol=1e-14)


def test_tridiagonal_scaling():
    op = BandedOperator.tridiagonal(np.zeros(1), 2 * np.ones(2), np.zeros(1))
    np.testing.assert_allclose(solve_tridiagonal(op, [4, 6]), [2, 3])


def test_tridiagonal_zero_pivot():
    op = BandedOperator.tridiagonal(np.zeros(2), np.array([1.0, 0.0, 1.0]), np.zeros(2))
    with pytest.raises(SingularOperator):
        solve_tridiagonal(op, np.ones(3))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**32 - 1))
def test_tridiagonal_matches_banded_reference(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    op = BandedOperator.tridiagonal(lo, diag, up)
    x = solve_tridiagonal(op, rhs)
    ab = np.zeros((3, n))
    ab[0, 1:], ab[1], ab[2, :-1] = up, diag, lo
    np.testing.assert_allclose(x, solve_banded((1, 1), ab, rhs), rtol=1e-10, atol=1e-12)
    resid = np.max(np.abs(op.matvec(x) - rhs))
    assert resid <= 1e-10 * (np.max(np.abs(rhs)) + np.max(np.abs(x)) * op.norm_sup())


def test_symmetry_flag_is_checked():
    assert laplacian_1d(5).is_symmetric()
    op = BandedOperator.tridiagonal(np.ones(4), np.ones(5), 2 * np.ones(4))
    assert not op.is_symmetric()


def test_conjugate_gradient_on_poisson():
    A = laplacian_1d(50).to_sparse()
    b = np.ones(50)
    x = conjugate_gradient(A, b, tol=1e-12)
    x = x[0] if isinstance(x, tuple) else x
    np.testing.assert_allclose(A @ x, b, atol=1e-9)


def test_poisson_refinement_order():
    # -u'' = pi^2 sin(pi x) on (0,1), node-centred, u = sin(pi x)
    errs = []
    for n in (32, 64, 128):
        h = 1.0 / n
        x = np.arange(1, n) * h
        u = solve_tridiagonal(laplacian_1d(n - 1, h), math.pi**2 * np.sin(math.pi * x))
        errs.append(np.max(np.abs(u - np.sin(math.pi * x))))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


# eigenpairs


def test_eigenpair_matches_discrete_sine():
    n = 200
    h = math.pi / n
    lam, v = smallest_eigenpair(laplacian_1d(n - 1, h), tol=1e-10)
    assert lam == pytest.approx(discrete_dirichlet_eigenvalue(n, math.pi), rel=1e-10)
    assert v.max() == pytest.approx(1.0) and np.all(v > 0)


def test_eigenpair_of_diagonal():
    lam, v = smallest_eigenpair(BandedOperator.diagonal(np.array([3.0, 5.0, 9.0])), tol=1e-12)
    assert lam == pytest.approx(3.0)
    np.testing.assert_allclose(v, [1, 0, 0], atol=1e-8)


@pytest.mark.parametrize("length,exact", [(math.pi, 1.0), (math.pi / 2, 4.0)])
def test_eigenpair_continuum_limit(length, exact):
    n = 4096
    lam, _ = smallest_eigenpair(laplacian_1d(n - 1, length / n), tol=1e-8)
    assert lam == pytest.approx(exact, abs=1e-5)


@settings(max_examples=15, deadline=None)
@given(scale=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
def test_eigenpair_scaling_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 2.0, 40)
    op = laplacian_1d(40)
    lam, v = smallest_eigenpair(op, w, tol=1e-10)
    scaled = BandedOperator.from_sparse(op.to_sparse() * scale, symmetric=True)
    lam2, v2 = smallest_eigenpair(scaled, w, tol=1e-10 * scale)
    assert lam2 == pytest.approx(scale * lam, rel=1e-8)
    assert np.argmax(v) == np.argmax(v2)


# Newton


def test_newton_scalar_square_root():
    x, rep = damped_newton(lambda x: x**2 - 4, lambda x: sp.diags(2 * x), np.array([3.0]), tol=1e-12)
    assert x[0] == pytest.approx(2.0, abs=1e-12) and rep.converged


def test_newton_linear_one_step():
    x, rep = damped_newton(lambda x: x, lambda x: sp.identity(x.size), np.array([5.0, -7.0]), tol=1e-14)
    assert rep.iterations == 1 and np.all(x == 0)


def test_newton_reports_failure():
    # x^2 + 1 has no real root
    with pytest.raises(NoConvergence) as exc:
        damped_newton(lambda x: x**2 + 1, lambda x: sp.diags(2 * x), np.array([0.3]), tol=1e-12, max_iter=5)
    assert exc.value.report is not None


def _blowup_system(n):
    h = 1.0 / n
    x = 1.0 + np.arange(1, n) * h
    ua, ub = blowup_1d(1.0), blowup_1d(2.0)

    def residual(u):
        full = np.concatenate([[ua], u, [ub]])
        return (-(full[:-2] - 2 * full[1:-1] + full[2:])) / h**2 + u**2

    def jacobian(u):
        m = n - 1
        return BandedOperator.tridiagonal(-np.ones(m - 1) / h**2, 2 / h**2 + 2 * u, -np.ones(m - 1) / h**2)

    return x, residual, jacobian


def test_newton_blowup_anchor():
    x, residual, jacobian = _blowup_system(512)
    u, rep = damped_newton(residual, jacobian, np.full(x.size, 3.0), tol=1e-9)
    assert rep.converged and rep.final_residual_sup <= 1e-9
    assert np.max(np.abs(u - blowup_1d(x))) <= 1e-4


def test_jacobian_consistency_blowup_system():
    x, residual, jacobian = _blowup_system(64)
    rng = np.random.default_rng(1)
    for _ in range(3):
        u = blowup_1d(x) * rng.uniform(0.5, 1.5, x.size)
        assert jacobian_fd_check(residual, jacobian, u, rng=rng) <= 1e-5
