"""Linear spectral data of axisymmetric cone openings.

An opening is a polar cap ``{theta < theta0}`` of the unit sphere in
dimension ``N >= 3`` or a planar arc of total angle ``theta0`` when
``N = 2``. In both cases the ground state depends only on the angle to
the cone axis, so the Laplace-Beltrami problem reduces to a Sturm-Liouville
problem on ``(0, theta_max)`` with weight ``sin(theta)**(N-2)``, zero flux
on the axis and a Dirichlet condition at ``theta_max``. For ``N = 2`` the
arc is folded about its bisector, so ``theta_max = theta0 / 2``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BandedOperator, Grid1D, require_cells, smallest_eigenpair
from .errors import AmbiguousNearCritical, InvalidInput, NumericalFailure

SUBCRITICAL = "Subcritical"
CRITICAL_OR_SUPERCRITICAL = "CriticalOrSupercritical"


@dataclass(frozen=True)
class AxisymmetricOpening:
    dim: int
    half_angle: float

    def __post_init__(self):
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 2:
            raise InvalidInput(f"dimension must be an integer >= 2, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        upper = 2 * math.pi if self.dim == 2 else math.pi
        th = float(self.half_angle)
        if not (0.0 < th < upper):
            raise InvalidInput(f"angle must lie in (0, {upper:.6g}) for N={self.dim}, got {th}")
        object.__setattr__(self, "half_angle", th)

    @property
    def theta_max(self) -> float:
        """Angular extent measured from the axis."""
        return self.half_angle / 2 if self.dim == 2 else self.half_angle

    def weight(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.dim == 2:
            return np.ones_like(theta)
        return np.sin(theta) ** (self.dim - 2)

    def theta_grid(self, n_cells) -> Grid1D:
        return Grid1D(n_cells, 0.0, self.theta_max)


@dataclass
class EigenPair:
    lambda_S: float
    phi: np.ndarray
    grid: Grid1D
    estimated_error: float

    @property
    def resolution(self) -> int:
        return self.grid.n_cells


@dataclass(frozen=True)
class ExponentTriple:
    alpha: float
    alpha_tilde: float
    q_S: float
    lambda_S: float
    dim: int


@dataclass(frozen=True)
class CriticalityClass:
    kind: str
    margin: float
    lambda_S: float
    lambda_Nq: float

    @property
    def subcritical(self) -> bool:
        return self.kind == SUBCRITICAL


def sturm_liouville(opening: AxisymmetricOpening, grid: Grid1D):
    """Conservative discretization of ``-w^{-1} (w u')'``.

    Returns the symmetric stiffness operator ``A`` and lumped mass ``m``
    such that ``A u / m`` approximates the Laplace-Beltrami operator on
    axisymmetric functions.
    """
    n, h = grid.n_cells, grid.h
    wf = opening.weight(grid.faces)
    wf[0] = 0.0  # zero flux through the axis face
    diag = (wf[:-1] + wf[1:]) / h
    diag[-1] += wf[-1] / h  # ghost cell for the Dirichlet face
    off = -wf[1:-1] / h
    A = BandedOperator.tridiagonal(off, diag, off, symmetric=True)
    mass = opening.weight(grid.centers) * h
    return A, mass


def lambda_exact(opening: AxisymmetricOpening) -> Optional[float]:
    if opening.dim == 2:
        return (math.pi / opening.half_angle) ** 2
    if opening.half_angle == math.pi / 2:
        return float(opening.dim - 1)
    return None


def _discrete_pair(opening, n_cells):
    grid = opening.theta_grid(n_cells)
    A, mass = sturm_liouville(opening, grid)
    lam, phi = smallest_eigenpair(A, mass, tol=1e-12 * A.norm_sup())
    return lam, phi, grid


def lambda_numeric(opening: AxisymmetricOpening, n_cells: int = 1024) -> EigenPair:
    """First Dirichlet eigenpair of the opening by inverse iteration.

    The error estimate compares ``n_cells`` with ``n_cells // 2`` under the
    second-order Richardson model, with a safety factor of two.
    """
    n_cells = require_cells(n_cells, 64, "n_cells")
    lam, phi, grid = _discrete_pair(opening, n_cells)
    lam_half, _, _ = _discrete_pair(opening, n_cells // 2)
    err = 2.0 * abs(lam_half - lam) / 3.0
    if phi[0] < 0 or np.any(phi <= 0):
        raise NumericalFailure("ground state is not positive")
    return EigenPair(lambda_S=lam, phi=phi, grid=grid, estimated_error=err)


def exponents(lambda_S: float, dim: int) -> ExponentTriple:
    """Characteristic exponents and the critical value ``q_S = 1 + 2/alpha``."""
    if not lambda_S > 0:
        raise InvalidInput(f"lambda_S must be positive, got {lambda_S}")
    root = math.sqrt((dim - 2) ** 2 + 4.0 * lambda_S)
    alpha = 0.5 * (dim - 2 + root)
    # alpha_tilde = lambda / alpha avoids cancellation in (2 - N + root) / 2
    alpha_tilde = lambda_S / alpha
    return ExponentTriple(alpha=alpha, alpha_tilde=alpha_tilde, q_S=1.0 + 2.0 / alpha, lambda_S=lambda_S, dim=dim)


def lambda_Nq(dim: int, q: float) -> float:
    if not q > 1:
        raise InvalidInput(f"q must exceed 1, got {q}")
    return 2.0 / (q - 1.0) * (2.0 * q / (q - 1.0) - dim)


def best_lambda(opening: AxisymmetricOpening, n_cells: int = 4096):
    """``(lambda_S, error)``: closed form when available, else numeric."""
    exact = lambda_exact(opening)
    if exact is not None:
        return exact, 0.0
    pair = lambda_numeric(opening, n_cells)
    return pair.lambda_S, pair.estimated_error


def opening_exponents(opening: AxisymmetricOpening, n_cells: int = 4096) -> ExponentTriple:
    lam, _ = best_lambda(opening, n_cells)
    return exponents(lam, opening.dim)


def classify(opening: AxisymmetricOpening, q: float, n_cells: int = 4096) -> CriticalityClass:
    """Subcritical iff ``lambda_S < lambda_{N,q}``."""
    lam_nq = lambda_Nq(opening.dim, q)
    lam, err = best_lambda(opening, n_cells)
    margin = lam_nq - lam
    if err > 0 and abs(margin) < err:
        raise AmbiguousNearCritical(
            f"|lambda_Nq - lambda_S| = {abs(margin):.3e} is below the eigenvalue error {err:.3e}; refine"
        )
    sub = lam < lam_nq
    sub_alpha = exponents(lam, opening.dim).alpha < 2.0 / (q - 1.0)
    if sub != sub_alpha and abs(margin) > 1e-9:
        raise NumericalFailure("eigenvalue and exponent criticality tests disagree")
    return CriticalityClass(SUBCRITICAL if sub else CRITICAL_OR_SUPERCRITICAL, margin, lam, lam_nq)


def phi_on_grid(opening: AxisymmetricOpening, grid: Grid1D, n_fine: int = 4096) -> np.ndarray:
    """Ground state sampled at ``grid`` centres, normalized to 1 on the axis.

    Closed forms are used for arcs and the half-sphere; otherwise a fine
    discrete eigenvector is interpolated with an even reflection at the axis.
    """
    th = grid.centers
    if opening.dim == 2:
        return np.cos(math.pi * th / opening.half_angle)
    if opening.half_angle == math.pi / 2:
        return np.cos(th)
    from scipy.interpolate import CubicSpline

    pair = lambda_numeric(opening, n_fine)
    fc = pair.grid.centers
    x = np.concatenate([-fc[::-1], fc, [opening.theta_max]])
    y = np.concatenate([pair.phi[::-1], pair.phi, [0.0]])
    phi = CubicSpline(x, y)(th)
    # axis value is 1 by normalization
    axis = CubicSpline(x, y)(0.0)
    return phi / axis
