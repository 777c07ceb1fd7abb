"""Strong-singularity angular profile.

Solves ``-Lap' w - lambda_{N,q} w + w^q = 0`` on the opening with ``w = 0``
on its boundary. A positive solution exists exactly in the subcritical
regime and is then unique; ``r^{-2/(q-1)} w(sigma)`` is the self-similar
solution singular at the vertex.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import BandedOperator, Grid1D, damped_newton, require_cells
from .errors import LineSearchStall, NoConvergence, SupercriticalNoSolution
from .spectrum import AxisymmetricOpening, classify, lambda_Nq, smallest_eigenpair, sturm_liouville

RESIDUAL_TOL = 1e-8


@dataclass
class SingularProfile:
    opening: AxisymmetricOpening
    q: float
    grid: Grid1D
    samples: np.ndarray
    residual_sup: float
    lambda_Nq: float
    iterations: int = 0

    @property
    def amplitude_max(self) -> float:
        return float(self.samples.max())

    @property
    def theta(self):
        return self.grid.centers

    @property
    def ceiling(self) -> float:
        """The constant solution ``lambda_{N,q}^{1/(q-1)}``."""
        return self.lambda_Nq ** (1.0 / (self.q - 1.0))

    def __call__(self, theta):
        """Interpolate the profile at arbitrary angles (even about the axis, zero at the edge)."""
        from scipy.interpolate import CubicSpline

        c = self.grid.centers
        x = np.concatenate([-c[::-1], c, [self.grid.b]])
        y = np.concatenate([self.samples[::-1], self.samples, [0.0]])
        return CubicSpline(x, y)(np.asarray(theta, dtype=float))


class _Problem:
    """Discrete profile equation ``A w / m - lam w + |w|^{q-1} w = 0``.

    ``A`` and ``m`` are the stiffness operator and lumped mass of the
    Sturm-Liouville discretization, so the residual is pointwise.
    """

    def __init__(self, opening, q, grid):
        self.opening = opening
        self.q = q
        self.grid = grid
        self.A, self.mass = sturm_liouville(opening, grid)
        self.lam = lambda_Nq(opening.dim, q)

    def residual(self, w):
        return self.A.matvec(w) / self.mass - self.lam * w + np.abs(w) ** (self.q - 1) * w

    def jacobian(self, w):
        d = -self.lam + self.q * np.abs(w) ** (self.q - 1)
        data = self.A.data / self.mass[None, :]
        data = data + np.outer(np.array(self.A.offsets) == 0, d)
        return BandedOperator(self.A.offsets, data)

    def pointwise(self, w):
        """Residual relative to ``lambda_{N,q} * max|w|``."""
        scale = self.lam * max(np.max(np.abs(w)), 1e-300)
        return self.residual(w) / scale

    def newton(self, w0, max_iter=80):
        tol = 0.5 * RESIDUAL_TOL * self.lam * max(np.max(np.abs(w0)), 1e-300)
        return damped_newton(self.residual, self.jacobian, w0, tol=tol, max_iter=max_iter, polish=2)

    def eigen(self):
        return smallest_eigenpair(self.A, self.mass)

    def galerkin_init(self, lam_S, phi):
        m = self.mass
        s = ((self.lam - lam_S) * np.sum(m * phi * phi) / np.sum(m * phi ** (self.q + 1))) ** (1.0 / (self.q - 1))
        return s * phi


def _accept(prob, w):
    """Converged iterate must be positive and satisfy the relative residual bound."""
    if np.max(w) <= 0:
        return False
    res = np.max(np.abs(prob.pointwise(w)))
    return res <= RESIDUAL_TOL


def solve_profile(opening: AxisymmetricOpening, q: float, n_cells: int = 1024) -> SingularProfile:
    """Unique positive solution of the nonlinear spherical problem.

    Newton starts from the one-mode Galerkin amplitude on the discrete
    ground state. If that fails, a six-step continuation in ``q`` from the
    midpoint between the bifurcation exponent and ``q`` is used.

    Raises
    ------
    SupercriticalNoSolution
        When ``lambda_S >= lambda_{N,q}``.
    """
    n_cells = require_cells(n_cells, 64, "n_cells")
    cls = classify(opening, q)
    if not cls.subcritical:
        raise SupercriticalNoSolution(
            f"lambda_S = {cls.lambda_S:.6g} >= lambda_Nq = {cls.lambda_Nq:.6g}: no positive profile exists"
        )
    grid = opening.theta_grid(n_cells)
    prob = _Problem(opening, q, grid)
    lam_h, phi = prob.eigen()
    if lam_h >= prob.lam:
        raise SupercriticalNoSolution("discrete ground state is not below lambda_Nq; refine the grid")

    w = None
    try:
        w, rep = prob.newton(prob.galerkin_init(lam_h, phi))
        if not _accept(prob, w):
            w = None
    except (NoConvergence, LineSearchStall):
        w = None
    if w is None:
        w, rep = _continuation(opening, q, grid, lam_h, phi)

    res = float(np.max(np.abs(prob.pointwise(w))))
    if np.any(w <= 0):
        raise NoConvergence("converged profile changes sign")
    return SingularProfile(opening, q, grid, w, res, prob.lam, rep.iterations)


def _continuation(opening, q, grid, lam_h, phi, steps=6):
    # q at which lambda_Nq equals the discrete lambda_S
    from scipy.optimize import brentq

    q_bif = brentq(lambda s: lambda_Nq(opening.dim, s) - lam_h, 1.0 + 1e-9, 1e6)
    qs = np.linspace(0.5 * (q_bif + q), q, steps + 1)
    prob = _Problem(opening, qs[0], grid)
    w, rep = prob.newton(prob.galerkin_init(lam_h, phi))
    for qk in qs[1:]:
        nxt = _Problem(opening, qk, grid)
        ratio = np.max(nxt.galerkin_init(lam_h, phi)) / np.max(prob.galerkin_init(lam_h, phi))
        w, rep = nxt.newton(w * ratio)
        prob = nxt
    if not _accept(prob, w):
        raise NoConvergence("continuation in q did not reach a positive profile")
    return w, rep


def _monotone_sweeps(prob, w0, tol=1e-6, max_sweeps=5000):
    """Order-preserving fixed-point iteration ``(A + M m) w' = m (lam w - w^q + M w)``.

    With ``M >= (q-1) lambda_{N,q}`` the right side is increasing on
    ``[0, ceiling]``, so iterates stay positive and trapped between the
    sub- and supersolution branches.
    """
    M = max((prob.q - 1.0) * prob.lam, 0.0) + 1.0
    ceiling = prob.lam ** (1.0 / (prob.q - 1.0))
    mat = prob.A.to_sparse() + sp.diags(M * prob.mass)
    lu = spla.splu(sp.csc_matrix(mat))
    w = np.clip(w0, 0.0, ceiling)
    for _ in range(max_sweeps):
        rhs = prob.mass * (prob.lam * w - w ** prob.q + M * w)
        w_new = lu.solve(rhs)
        change = np.max(np.abs(w_new - w)) / max(np.max(np.abs(w_new)), 1e-300)
        w = w_new
        if change < tol:
            break
    return w


def profile_uniqueness_check(profile: SingularProfile, n_alternate_inits: int = 3) -> bool:
    """Re-solve from alternate positive starts and compare.

    Starts, in order: the constant ``lambda_{N,q}^{1/(q-1)}``,
    ``0.1 * phi_S`` and ``10 * phi_S`` clipped to that constant. Each start
    is carried into the Newton basin by monotone sweeps, because the
    trivial solution attracts raw Newton from small starts.
    """
    if n_alternate_inits <= 0:
        return True
    prob = _Problem(profile.opening, profile.q, profile.grid)
    _, phi = prob.eigen()
    ceiling = profile.ceiling
    inits = [np.full(profile.grid.n_cells, ceiling), 0.1 * phi, np.minimum(10.0 * phi, ceiling)]
    k = 0
    while len(inits) < n_alternate_inits:
        k += 1
        inits.append(np.minimum((1.0 + k) * phi * profile.amplitude_max, ceiling))
    scale = max(profile.amplitude_max, 1e-300)
    for w0 in inits[:n_alternate_inits]:
        try:
            w = _monotone_sweeps(prob, w0)
            w, _ = prob.newton(w)
        except NoConvergence:
            return False
        # 1e-6 sup distance, relative to the profile amplitude
        if np.max(np.abs(w - profile.samples)) > 1e-6 * max(scale, 1.0):
            return False
    return True
