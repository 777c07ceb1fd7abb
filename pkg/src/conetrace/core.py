"""Discretization and solver substrate.

Uniform grids, banded operators, a Thomas tridiagonal solver, Jacobi-scaled
conjugate gradients, inverse iteration for the smallest eigenpair and a
damped Newton method. Everything here is a pure function of its inputs.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInput, LineSearchStall, NoConvergence, SingularOperator

PIVOT_FLOOR = 1e-300
MIN_SOLVER_CELLS = 8


@dataclass(frozen=True)
class Grid1D:
    """Cell-centred uniform grid on ``[a, b]``."""

    n_cells: int
    a: float
    b: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise InvalidInput(f"n_cells must be a positive integer, got {self.n_cells}")
        if not self.b > self.a:
            raise InvalidInput(f"empty interval [{self.a}, {self.b}]")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return self.a + np.arange(self.n_cells + 1) * self.h


@dataclass(frozen=True)
class TensorGrid2D:
    """Grid over the log-cylinder ``[0, T] x [0, theta_max]``.

    The angular axis is cell-centred. Samples in ``t`` sit on the faces of
    ``t_axis`` so that the outer sphere ``t = 0`` and the truncation ``t = T``
    are grid rows. Arrays are indexed ``[i_t, j_theta]``.
    """

    t_axis: Grid1D
    theta_axis: Grid1D

    @classmethod
    def build(cls, T, nt, theta_max, ntheta):
        if not T > 0:
            raise InvalidInput(f"T must be positive, got {T}")
        return cls(Grid1D(nt, 0.0, float(T)), Grid1D(ntheta, 0.0, float(theta_max)))

    @property
    def T(self):
        return self.t_axis.b

    @property
    def t(self):
        return self.t_axis.faces

    @property
    def theta(self):
        return self.theta_axis.centers

    @property
    def shape(self):
        return (self.t_axis.n_cells + 1, self.theta_axis.n_cells)

    def row_of(self, t_value):
        """Index of the row nearest to ``t_value``."""
        i = int(round(t_value / self.t_axis.h))
        return min(max(i, 0), self.t_axis.n_cells)


@dataclass
class BandedOperator:
    """Square matrix stored by diagonals.

    ``data[m, i]`` holds ``A[i, i + offsets[m]]``; entries whose column falls
    outside the matrix are ignored. Only structurally non-zero bands are
    stored, so 2D five-point operators stay cheap.
    """

    offsets: tuple
    data: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.offsets = tuple(int(k) for k in self.offsets)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.offsets):
            raise InvalidInput("data must have one row per offset")
        if self.symmetric and not self.is_symmetric():
            raise InvalidInput("operator flagged symmetric but bands differ")

    @classmethod
    def tridiagonal(cls, lower, diag, upper, symmetric=False):
        """From the sub-, main and super-diagonal (lengths n-1, n, n-1)."""
        diag = np.asarray(diag, dtype=float)
        n = diag.size
        lo = np.zeros(n)
        up = np.zeros(n)
        lo[1:] = lower
        up[:-1] = upper
        return cls((-1, 0, 1), np.vstack([lo, diag, up]), symmetric=symmetric)

    @classmethod
    def diagonal(cls, diag):
        diag = np.asarray(diag, dtype=float)
        return cls((0,), diag[None, :], symmetric=True)

    @classmethod
    def from_sparse(cls, mat, symmetric=False):
        dia = sp.dia_matrix(mat)
        n = dia.shape[0]
        offsets, rows = [], []
        for k, band in zip(dia.offsets, dia.data):
            # scipy stores A[i, i+k] at band[i+k]
            row = np.zeros(n)
            i = np.arange(n)
            j = i + k
            ok = (j >= 0) & (j < n)
            row[i[ok]] = band[j[ok]]
            offsets.append(int(k))
            rows.append(row)
        order = np.argsort(offsets)
        return cls(tuple(np.array(offsets)[order]), np.array(rows)[order], symmetric=symmetric)

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def bandwidth(self) -> int:
        return max((abs(k) for k in self.offsets), default=0)

    def band(self, k):
        """Entries ``A[i, i+k]`` for the valid rows ``i``."""
        n = self.rows
        lo, hi = max(0, -k), min(n, n - k)
        if k in self.offsets:
            return self.data[self.offsets.index(k), lo:hi]
        return np.zeros(max(hi - lo, 0))

    def is_symmetric(self, rtol=1e-14):
        scale = max(np.max(np.abs(self.data), initial=0.0), 1e-300)
        for k in self.offsets:
            if k <= 0:
                continue
            # A[i, i+k] == A[i+k, i]
            if not np.allclose(self.band(k), self.band(-k), rtol=0, atol=rtol * scale):
                return False
        return True

    def to_sparse(self):
        n = self.rows
        mats = []
        for k, row in zip(self.offsets, self.data):
            lo, hi = max(0, -k), min(n, n - k)
            mats.append(sp.diags(row[lo:hi], k, shape=(n, n)))
        if not mats:
            return sp.csr_matrix((n, n))
        return sp.csr_matrix(sum(mats))

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        n = self.rows
        y = np.zeros(n)
        for k, row in zip(self.offsets, self.data):
            lo, hi = max(0, -k), min(n, n - k)
            y[lo:hi] += row[lo:hi] * x[lo + k : hi + k]
        return y

    def norm_sup(self):
        """Induced infinity norm (max absolute row sum)."""
        n = self.rows
        s = np.zeros(n)
        for k, row in zip(self.offsets, self.data):
            lo, hi = max(0, -k), min(n, n - k)
            s[lo:hi] += np.abs(row[lo:hi])
        return float(s.max(initial=0.0))

    def shifted(self, sigma, weight=None):
        """Return ``A - sigma * diag(weight)``."""
        w = np.ones(self.rows) if weight is None else np.asarray(weight, dtype=float)
        offsets = list(self.offsets)
        data = self.data.copy()
        if 0 not in offsets:
            offsets.append(0)
            data = np.vstack([data, np.zeros(self.rows)])
        data[offsets.index(0)] -= sigma * w
        return BandedOperator(tuple(offsets), data, symmetric=self.symmetric)


@dataclass
class NewtonReport:
    iterations: int = 0
    final_residual_sup: float = float("inf")
    damping_events: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "final_residual_sup": self.final_residual_sup,
            "damping_events": self.damping_events,
            "converged": self.converged,
        }


def solve_tridiagonal(op: BandedOperator, rhs) -> np.ndarray:
    """Thomas algorithm for a bandwidth-one operator.

    No pivoting: the operator must be diagonally dominant or symmetric
    positive definite.
    """
    if op.bandwidth > 1:
        raise InvalidInput(f"expected bandwidth 1, got {op.bandwidth}")
    rhs = np.asarray(rhs, dtype=float)
    n = op.rows
    if rhs.shape != (n,):
        raise InvalidInput(f"rhs has shape {rhs.shape}, operator has {n} rows")
    diag = op.band(0).copy() if 0 in op.offsets else np.zeros(n)
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[1:] = op.band(-1)
    upper[:-1] = op.band(1)

    cp = np.empty(n)
    dp = np.empty(n)
    piv = diag[0]
    if abs(piv) < PIVOT_FLOOR:
        raise SingularOperator("zero pivot at row 0")
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if abs(piv) < PIVOT_FLOOR:
            raise SingularOperator(f"zero pivot at row {i}")
        cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / piv
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def conjugate_gradient(A, b, tol=1e-12, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for an SPD matrix.

    ``A`` may be a :class:`BandedOperator` or a scipy sparse matrix.
    Stops when ``||r||_2 <= tol * ||b||_2``.
    """
    if isinstance(A, BandedOperator):
        A = A.to_sparse()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = max_iter or 10 * n
    d = A.diagonal()
    if np.any(d <= 0):
        raise SingularOperator("non-positive diagonal in CG")
    dinv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SingularOperator("operator is not positive definite")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x
    raise NoConvergence(f"CG did not reach {tol:g} in {max_iter} iterations")


def _linear_solver(op):
    """Return a callable solving ``op x = b`` (factorized once)."""
    if isinstance(op, BandedOperator) and op.bandwidth <= 1:
        return lambda b: solve_tridiagonal(op, b)
    mat = op.to_sparse() if isinstance(op, BandedOperator) else op
    try:
        lu = spla.splu(sp.csc_matrix(mat))
    except RuntimeError as exc:
        raise SingularOperator(str(exc)) from exc
    return lu.solve


def smallest_eigenpair(op, weight=None, tol=None, max_iter=500):
    """Smallest eigenpair of ``op v = lam * diag(weight) v``.

    Inverse iteration from shift 0, followed by Rayleigh-quotient
    refinement. The eigenvector is scaled so that its largest component
    equals +1.

    Parameters
    ----------
    op : BandedOperator or sparse matrix
        Symmetric operator.
    weight : array_like, optional
        Strictly positive diagonal mass; identity when omitted.
    tol : float, optional
        Bound on ``||op v - lam W v||_2 / ||v||_2``. Defaults to
        ``1e-12 * ||op||_inf``.
    max_iter : int
        Iteration cap before :class:`NoConvergence`.
    """
    if isinstance(op, BandedOperator):
        n = op.rows
        if op.symmetric is False and not op.is_symmetric():
            raise InvalidInput("smallest_eigenpair needs a symmetric operator")
        matvec = op.matvec
        op_norm = op.norm_sup()
    else:
        mat = sp.csr_matrix(op)
        n = mat.shape[0]
        matvec = lambda x: mat @ x  # noqa: E731
        op_norm = float(abs(mat).sum(axis=1).max())
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise InvalidInput("weight must be a strictly positive vector of matching size")
    if tol is None:
        tol = 1e-12 * max(op_norm, 1.0)

    def residual(v, lam):
        return np.linalg.norm(matvec(v) - lam * w * v) / np.linalg.norm(v)

    def rayleigh(v):
        return float(v @ matvec(v)) / float(v @ (w * v))

    solve = _linear_solver(op)
    # fixed deterministic start: positive, smooth, not orthogonal to the ground state
    v = np.ones(n)
    lam = rayleigh(v)
    res = np.inf
    for it in range(max_iter):
        y = solve(w * v)
        v = y / np.max(np.abs(y))
        lam_new = rayleigh(v)
        res = residual(v, lam_new)
        if res <= tol:
            lam = lam_new
            break
        # switch to Rayleigh refinement once the eigenvalue has settled
        if abs(lam_new - lam) <= 1e-6 * abs(lam_new) and isinstance(op, BandedOperator) and op.bandwidth <= 1:
            lam = lam_new
            v, lam, res = _rayleigh_refine(op, w, v, lam, residual, rayleigh, tol)
            if res <= tol:
                break
        lam = lam_new
    else:
        raise NoConvergence(f"inverse iteration residual {res:.3e} > {tol:.3e} after {max_iter} steps")
    if res > tol:
        raise NoConvergence(f"inverse iteration residual {res:.3e} > {tol:.3e}")
    v = v / v[np.argmax(np.abs(v))]
    return lam, v


def _rayleigh_refine(op, w, v, lam, residual, rayleigh, tol, steps=3):
    best = (v, lam, residual(v, lam))
    for _ in range(steps):
        try:
            y = solve_tridiagonal(op.shifted(lam, w), w * v)
        except SingularOperator:
            break
        if not np.all(np.isfinite(y)):
            break
        v = y / np.max(np.abs(y))
        lam = rayleigh(v)
        res = residual(v, lam)
        if res < best[2]:
            best = (v, lam, res)
        if res <= tol:
            break
    return best


def _sup(x):
    return float(np.max(np.abs(x), initial=0.0))


def damped_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable,
    x0,
    tol: float,
    max_iter: int = 50,
    polish: int = 0,
    max_halvings: int = 30,
):
    """Newton iteration with residual-norm backtracking.

    Each step is halved while the sup-norm of the residual fails to
    decrease, at most ``max_halvings`` times. ``polish`` extra full steps
    are taken after convergence; they are kept only while the residual
    stays within ``tol``.

    Returns
    -------
    x : ndarray
    report : NewtonReport
    """
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    x = np.array(x0, dtype=float)
    report = NewtonReport()
    r = residual(x)
    rnorm = _sup(r)
    report.history.append(rnorm)
    while rnorm > tol:
        if report.iterations >= max_iter:
            report.final_residual_sup = rnorm
            raise NoConvergence(f"Newton residual {rnorm:.3e} > {tol:.3e} after {max_iter} iterations", report)
        J = jacobian(x)
        dx = _linear_solver(J)(-r)
        if not np.all(np.isfinite(dx)):
            report.final_residual_sup = rnorm
            raise NoConvergence("non-finite Newton step", report)
        step = 1.0
        for halving in range(max_halvings + 1):
            x_try = x + step * dx
            r_try = residual(x_try)
            n_try = _sup(r_try)
            if np.isfinite(n_try) and n_try < rnorm:
                break
            step *= 0.5
        else:
            report.final_residual_sup = rnorm
            raise LineSearchStall(f"no residual decrease after {max_halvings} halvings", report)
        if halving:
            report.damping_events += 1
        x, r, rnorm = x_try, r_try, n_try
        report.iterations += 1
        report.history.append(rnorm)
    for _ in range(polish):
        J = jacobian(x)
        dx = _linear_solver(J)(-r)
        x_try = x + dx
        r_try = residual(x_try)
        n_try = _sup(r_try)
        if not n_try <= tol:
            break
        x, r, rnorm = x_try, r_try, n_try
        report.iterations += 1
        report.history.append(rnorm)
    report.final_residual_sup = rnorm
    report.converged = True
    return x, report


def require_cells(n, minimum=MIN_SOLVER_CELLS, what="n_cells"):
    if int(n) != n or n < minimum:
        raise InvalidInput(f"{what} must be an integer >= {minimum}, got {n}")
    return int(n)


def as_operator(mat, symmetric=False) -> BandedOperator:
    return BandedOperator.from_sparse(mat, symmetric=symmetric)


def jacobian_fd_check(residual, jacobian, x, rng: Optional[np.random.Generator] = None, n_cols=None, eps=None):
    """Max relative column error between the assembled Jacobian and central differences."""
    x = np.asarray(x, dtype=float)
    J = jacobian(x)
    J = J.to_sparse() if isinstance(J, BandedOperator) else sp.csr_matrix(J)
    J = J.tocsc()
    n = x.size
    cols = range(n) if n_cols is None else (rng or np.random.default_rng(0)).choice(n, size=min(n_cols, n), replace=False)
    worst = 0.0
    for j in cols:
        e = eps or 1e-6 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += e
        xm[j] -= e
        fd = (residual(xp) - residual(xm)) / (2 * e)
        col = J[:, j].toarray().ravel()
        scale = max(_sup(col), 1e-12)
        worst = max(worst, _sup(fd - col) / scale)
    return worst
