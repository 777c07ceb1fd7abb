"""Vertex singularities in a truncated circular cone.

The cone ``C_S ∩ B_1`` is mapped to the cylinder ``(t, theta)`` with
``t = -ln r``. Writing ``u = e^{beta t} y`` turns ``-Lap u + |u|^{q-1} u = 0``
into

    y_tt + (2 beta + 2 - N) y_t + (beta^2 - (N-2) beta) y + Lap' y
        - e^{(beta (q-1) - 2) t} |y|^{q-1} y = 0.

``beta = alpha_S`` gives the transformed unknown ``v = r^alpha u`` used for
Dirac data; ``beta = 2/(q-1)`` makes the equation autonomous and is used
for the strong singularity.

Dirac data ``k delta_0`` are realized by the lift ``u = k Psi + z`` with the
exact harmonic kernel ``Psi`` and ``z = 0`` on the whole boundary of the
computational rectangle, so the discrete system is ``u + G[g(u)] = k Psi``.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import NewtonReport, TensorGrid2D, damped_newton
from .errors import (
    InvalidInput,
    NoConvergence,
    ScheduleExhausted,
    SingularOperator,
    SupercriticalRefused,
    Unclassifiable,
    WindowTooNoisy,
)
from .io import read_json, write_json
from .spectrum import AxisymmetricOpening, ExponentTriple, best_lambda, classify, exponents, phi_on_grid, sturm_liouville

LN2 = math.log(2.0)
DEFAULT_T = 12.0
DEFAULT_NT = 600
DEFAULT_NTHETA = 96
STRONG_T = 30.0
STRONG_NT = 1500
FIT_WINDOW = (0.6, 0.85)
NEWTON_RTOL = 1e-12


def default_grid(opening, T=DEFAULT_T, nt=DEFAULT_NT, ntheta=DEFAULT_NTHETA) -> TensorGrid2D:
    return TensorGrid2D.build(T, nt, opening.theta_max, ntheta)


def strong_grid(opening, ntheta=DEFAULT_NTHETA) -> TensorGrid2D:
    """Longer cylinder with the default ``t`` step, so ``t``-rows line up with :func:`default_grid`."""
    return TensorGrid2D.build(STRONG_T, STRONG_NT, opening.theta_max, ntheta)


def thread_count(default=1) -> int:
    """Parallelism cap from ``CONETRACE_THREADS``."""
    raw = os.environ.get("CONETRACE_THREADS", "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


# ---------------------------------------------------------------------------
# discrete cylinder operator


class CylinderOperator:
    """``-L_beta`` on the interior rows ``1..n-1`` of a (t, theta) grid.

    Rows ``0`` and ``n`` carry Dirichlet data. The lateral edge
    ``theta = theta_max`` is a Dirichlet face handled by a ghost cell, and
    the axis face has zero flux.
    """

    def __init__(self, opening: AxisymmetricOpening, grid: TensorGrid2D, beta: float, last_row: Optional[int] = None):
        self.opening = opening
        self.grid = grid
        self.beta = float(beta)
        self.n = grid.t_axis.n_cells if last_row is None else int(last_row)
        if not 2 <= self.n <= grid.t_axis.n_cells:
            raise InvalidInput(f"last_row must lie in [2, {grid.t_axis.n_cells}], got {self.n}")
        N = opening.dim
        self.c = 2.0 * beta + 2.0 - N
        self.kappa = beta * beta - (N - 2) * beta
        h = grid.t_axis.h
        self.h = h
        self.lo = -1.0 / h**2 + self.c / (2.0 * h)
        self.up = -1.0 / h**2 - self.c / (2.0 * h)
        self.dg = 2.0 / h**2
        A, m = sturm_liouville(opening, grid.theta_axis)
        self.A_d = A.band(0) / m
        self.A_l = A.band(-1) / m[1:]
        self.A_u = A.band(1) / m[:-1]
        wf_last = opening.weight(np.array([grid.theta_axis.b]))[0]
        self.lat = 2.0 * wf_last / (grid.theta_axis.h * m[-1])
        self.ntheta = grid.theta_axis.n_cells
        self.t = grid.t[: self.n + 1]
        self._matrix = None

    @property
    def n_interior(self):
        return (self.n - 1) * self.ntheta

    def theta_part(self, y):
        """``-Lap'_h`` applied row-wise (zero lateral data)."""
        out = self.A_d * y
        out[:, 1:] += self.A_l * y[:, :-1]
        out[:, :-1] += self.A_u * y[:, 1:]
        return out

    def apply(self, y, lateral=None):
        """``-L y`` on interior rows; ``y`` holds rows ``0..n``."""
        yi = y[1:-1]
        out = self.lo * y[:-2] + self.dg * yi + self.up * y[2:] - self.kappa * yi + self.theta_part(yi)
        if lateral is not None:
            out[:, -1] -= self.lat * lateral[1:-1]
        return out

    @property
    def matrix(self):
        if self._matrix is None:
            ni, nth = self.n - 1, self.ntheta
            Tt = sp.diags(
                [np.full(ni - 1, self.lo), np.full(ni, self.dg), np.full(ni - 1, self.up)], [-1, 0, 1], format="csr"
            )
            Th = sp.diags([self.A_l, self.A_d, self.A_u], [-1, 0, 1], format="csr")
            I_t = sp.identity(ni, format="csr")
            I_h = sp.identity(nth, format="csr")
            self._matrix = (sp.kron(Tt, I_h) + sp.kron(I_t, Th) - self.kappa * sp.identity(ni * nth)).tocsr()
        return self._matrix

    def norm_sup(self):
        return abs(self.lo) + self.dg + abs(self.up) + abs(self.kappa) + float(
            np.max(np.abs(self.A_d) + np.r_[0, np.abs(self.A_l)] + np.r_[np.abs(self.A_u), 0])
        )


@lru_cache(maxsize=16)
def _laplace_lu(opening, grid, last_row):
    op = CylinderOperator(opening, grid, 0.0, last_row)
    try:
        return op, spla.splu(op.matrix.tocsc())
    except RuntimeError as exc:
        raise SingularOperator(str(exc)) from exc


def laplace_dirichlet(opening, grid, last_row=None, outer=None, inner=None, lateral=None):
    """Discrete harmonic extension in ``u``-variables.

    Parameters
    ----------
    outer, inner : array_like, optional
        Data on row ``0`` (the sphere ``r = 1``) and on row ``last_row``.
    lateral : array_like, optional
        Data on the lateral face, one value per row ``0..last_row``.

    Returns
    -------
    ndarray
        Rows ``0..last_row`` of the extension.
    """
    n = grid.t_axis.n_cells if last_row is None else int(last_row)
    op, lu = _laplace_lu(opening, grid, n)
    nth = op.ntheta
    y = np.zeros((n + 1, nth))
    if outer is not None:
        y[0] = outer
    if inner is not None:
        y[n] = inner
    rhs = np.zeros((n - 1, nth))
    rhs[0] -= op.lo * y[0]
    rhs[-1] -= op.up * y[n]
    if lateral is not None:
        lateral = np.asarray(lateral, dtype=float)
        rhs[:, -1] += op.lat * lateral[1:n]
    y[1:n] = lu.solve(rhs.ravel()).reshape(n - 1, nth)
    return y


def axis_value(field_rows, grid, t0=LN2):
    """Value of a cell-centred field on the axis at ``t = t0``.

    Cubic Lagrange interpolation in ``t`` and the even extrapolation
    ``f(0) = (9 f(h/2) - f(3h/2)) / 8`` in ``theta``.
    """
    f = np.asarray(field_rows)
    col = (9.0 * f[:, 0] - f[:, 1]) / 8.0
    h = grid.t_axis.h
    i = int(math.floor(t0 / h))
    i0 = min(max(i - 1, 0), f.shape[0] - 4)
    ts = grid.t[i0 : i0 + 4]
    vals = col[i0 : i0 + 4]
    out = 0.0
    for a in range(4):
        w = 1.0
        for b in range(4):
            if b != a:
                w *= (t0 - ts[b]) / (ts[a] - ts[b])
        out += w * vals[a]
    return float(out)


def _solve_nonlinear(op, q, lift, z0=None, lateral=None, rows=None, max_iter=60):
    """Newton for ``-L z + e^{sigma t} g(lift + z) = 0`` on interior rows.

    ``lift`` holds rows ``0..n`` and enters only through the nonlinearity,
    because it is harmonic by construction. ``rows`` optionally gives
    Dirichlet data for ``z`` on rows ``0`` and ``n`` (the remainder is
    otherwise zero there), and ``lateral`` data on the lateral face.
    Returns ``lift + z`` on rows ``0..n``.
    """
    n, nth = op.n, op.ntheta
    sigma = op.beta * (q - 1.0) - 2.0
    ew = np.exp(sigma * op.t[1:n])[:, None]
    lift_i = lift[1:n]
    zfull = np.zeros((n + 1, nth))
    if rows is not None:
        zfull[0] = rows[0]
        zfull[n] = rows[n]
    scale = max(np.max(np.abs(lift)), np.max(np.abs(zfull)), np.max(np.abs(lateral)) if lateral is not None else 0.0)
    if scale == 0.0:
        return lift + zfull, NewtonReport(converged=True, final_residual_sup=0.0)
    D = op.matrix

    def residual(zv):
        zfull[1:n] = zv.reshape(n - 1, nth)
        yy = lift_i + zfull[1:n]
        return (op.apply(zfull, lateral) + ew * np.abs(yy) ** (q - 1.0) * yy).ravel()

    def jacobian(zv):
        yy = lift_i + zv.reshape(n - 1, nth)
        return (D + sp.diags((ew * q * np.abs(yy) ** (q - 1.0)).ravel())).tocsc()

    z0 = np.zeros(op.n_interior) if z0 is None else np.asarray(z0, dtype=float).ravel()
    tol = NEWTON_RTOL * op.norm_sup() * scale
    z, rep = damped_newton(residual, jacobian, z0, tol=tol, max_iter=max_iter, polish=2)
    zfull[1:n] = z.reshape(n - 1, nth)
    return lift + zfull, rep


# ---------------------------------------------------------------------------
# kernel lift and solutions


@dataclass
class KernelLift:
    """``Phi = r^{-alpha} phi``, ``Phi~ = r^{alpha~} phi`` and ``Psi = (Phi - Phi~) / gamma``.

    ``gamma = (Phi - Phi~)(x0)`` with ``x0`` on the axis at ``r = 1/2``, so
    ``Psi(x0) = 1``; ``Psi`` vanishes on ``r = 1``.
    """

    opening: AxisymmetricOpening
    exps: ExponentTriple
    grid: TensorGrid2D
    phi: np.ndarray
    gamma: float

    @property
    def x0(self):
        return (LN2, 0.0)

    def _t(self):
        return self.grid.t[:, None]

    @property
    def Phi(self):
        return np.exp(self.exps.alpha * self._t()) * self.phi

    @property
    def Phi_tilde(self):
        return np.exp(-self.exps.alpha_tilde * self._t()) * self.phi

    @property
    def Psi(self):
        return self.in_variables(0.0)

    def in_variables(self, beta):
        """``r^beta Psi`` on the grid, written to avoid overflow and cancellation."""
        a, at = self.exps.alpha, self.exps.alpha_tilde
        t = self._t()
        return np.exp((a - beta) * t) * (-np.expm1(-(a + at) * t)) * self.phi / self.gamma


def build_kernel_lift(opening: AxisymmetricOpening, q=None, grid: Optional[TensorGrid2D] = None) -> KernelLift:
    """Tabulate the normalized harmonic kernel of the cone at its vertex.

    ``q`` is accepted for call-site symmetry; the kernel is linear data.
    """
    grid = grid or default_grid(opening)
    lam, _ = best_lambda(opening)
    exps = exponents(lam, opening.dim)
    phi = phi_on_grid(opening, grid.theta_axis)
    gamma = 2.0**exps.alpha - 2.0 ** (-exps.alpha_tilde)
    return KernelLift(opening, exps, grid, phi, gamma)


@dataclass
class ConeSolution:
    """Solution samples ``v = r^alpha u`` on the (t, theta) grid.

    ``mode`` is ``"weak"`` for Dirac data, ``"strong"`` for the large-mass
    limit and ``"data"`` for lateral boundary data.
    """

    opening: AxisymmetricOpening
    q: float
    grid: TensorGrid2D
    v: np.ndarray
    k: Optional[float]
    newton: NewtonReport
    exps: ExponentTriple
    gamma: float
    mode: str = "weak"
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.grid.T

    @property
    def p(self):
        return 2.0 / (self.q - 1.0)

    @property
    def u(self):
        return np.exp(self.exps.alpha * self.grid.t)[:, None] * self.v

    @property
    def w(self):
        """``r^{2/(q-1)} u``."""
        return np.exp((self.exps.alpha - self.p) * self.grid.t)[:, None] * self.v

    def probe(self):
        """``u(x0)``."""
        return 2.0**self.exps.alpha * axis_value(self.v, self.grid)

    def as_dict(self):
        g = self.grid
        return {
            "meta": {
                "N": self.opening.dim,
                "theta0": self.opening.half_angle,
                "q": self.q,
                "k": self.k,
                "T": g.T,
                "nt": g.t_axis.n_cells,
                "ntheta": g.theta_axis.n_cells,
                "gamma": self.gamma,
                "lambda_S": self.exps.lambda_S,
                "alpha": self.exps.alpha,
                "alpha_tilde": self.exps.alpha_tilde,
                "mode": self.mode,
            },
            "v": self.v.ravel(),
            "newton": self.newton.as_dict(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            m = doc["meta"]
            opening = AxisymmetricOpening(m["N"], m["theta0"])
            grid = TensorGrid2D.build(m["T"], m["nt"], opening.theta_max, m["ntheta"])
            v = np.asarray(doc["v"], dtype=float).reshape(grid.shape)
            exps = ExponentTriple(m["alpha"], m["alpha_tilde"], 1.0 + 2.0 / m["alpha"], m["lambda_S"], opening.dim)
            nw = doc.get("newton", {})
            rep = NewtonReport(
                iterations=nw.get("iterations", 0),
                final_residual_sup=nw.get("final_residual_sup") or 0.0,
                damping_events=nw.get("damping_events", 0),
                converged=nw.get("converged", True),
            )
            return cls(opening, m["q"], grid, v, m["k"], rep, exps, m["gamma"], m.get("mode", "weak"), doc.get("diagnostics", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed cone solution document: {exc}") from exc


def save_solution(solution: ConeSolution, path):
    write_json(solution.as_dict(), path)


def load_solution(path) -> ConeSolution:
    return ConeSolution.from_dict(read_json(path))


def _require_subcritical(opening, q):
    cls = classify(opening, q)
    if not cls.subcritical:
        raise SupercriticalRefused(
            f"q = {q} is not below q_S for this opening (lambda_S = {cls.lambda_S:.6g}, lambda_Nq = {cls.lambda_Nq:.6g})"
        )
    return cls


def solve_weak(opening: AxisymmetricOpening, q: float, k: float, grid: Optional[TensorGrid2D] = None) -> ConeSolution:
    """Solution with vertex datum ``k delta_0``.

    Raises
    ------
    SupercriticalRefused
        When ``q >= q_S``: the Dirac is not admissible.
    """
    if not k >= 0:
        raise InvalidInput(f"k must be non-negative, got {k}")
    _require_subcritical(opening, q)
    grid = grid or default_grid(opening)
    lift = build_kernel_lift(opening, q, grid)
    alpha = lift.exps.alpha
    op = CylinderOperator(opening, grid, alpha)
    v, rep = _solve_nonlinear(op, q, k * lift.in_variables(alpha))
    return ConeSolution(opening, q, grid, v, float(k), rep, lift.exps, lift.gamma, "weak")


def solve_strong(
    opening: AxisymmetricOpening,
    q: float,
    grid: Optional[TensorGrid2D] = None,
    k_schedule=None,
    tol: float = 1e-4,
    max_doublings: int = 20,
) -> ConeSolution:
    """Large-mass limit ``u_inf = lim u_k`` along a doubling schedule.

    The solve runs in ``w = r^{2/(q-1)} u``, where the equation is
    autonomous. For large ``k`` the lift ``k Psi`` dwarfs ``u_k`` away from
    the vertex, so each member is posed directly as the Dirichlet problem
    with data ``k Psi`` on the inner sphere. The default schedule starts where the lift reaches the
    constant solution ``lambda_{N,q}^{1/(q-1)}`` on the truncation row and
    doubles ``k`` until the mid-cylinder slice of ``w`` moves by less than
    ``tol`` relative to its maximum.

    Raises
    ------
    ScheduleExhausted
        When ``max_doublings`` doublings do not stabilize the slice.
    """
    cls = _require_subcritical(opening, q)
    grid = grid or strong_grid(opening)
    lift = build_kernel_lift(opening, q, grid)
    p = 2.0 / (q - 1.0)
    op = CylinderOperator(opening, grid, p)
    lw = lift.in_variables(p)
    ceiling = cls.lambda_Nq ** (1.0 / (q - 1.0))
    if k_schedule is None:
        k0 = ceiling / np.max(lw[-1])
        k_schedule = [k0 * 2.0**j for j in range(max_doublings + 1)]
    k_schedule = [float(k) for k in k_schedule]
    mid = grid.row_of(0.5 * grid.T)
    zero = np.zeros(grid.shape)
    data = np.zeros(grid.shape)
    prev = None
    z0 = None
    changes, min_increase = [], np.inf
    w = None
    for k in k_schedule:
        # u_k equals k Psi on the inner sphere and vanishes on the rest of the boundary
        data[-1] = k * lw[-1]
        if z0 is None:
            # a constant above the data and the ceiling is a supersolution; Newton descends from it
            z0 = np.full((grid.t_axis.n_cells - 1, grid.theta_axis.n_cells), max(ceiling, np.max(data)))
        w, rep = _solve_nonlinear(op, q, zero, z0=z0, rows=data)
        z0 = w[1:-1]
        cur = w[mid].copy()
        if prev is not None:
            diff = cur - prev
            min_increase = min(min_increase, float(diff.min()) / max(np.max(cur), 1e-300))
            change = float(np.max(np.abs(diff)) / max(np.max(cur), 1e-300))
            changes.append(change)
            if change < tol:
                break
        prev = cur
    else:
        last = changes[-1] if changes else float("nan")
        raise ScheduleExhausted(f"slice still moving after {len(k_schedule)} masses (last change {last:.3e})")
    s = p - lift.exps.alpha
    v = np.exp(s * grid.t)[:, None] * w
    diag = {"k_last": k, "masses_used": len(changes) + 1, "slice_changes": changes, "min_relative_increase": min_increase}
    return ConeSolution(opening, q, grid, v, None, rep, lift.exps, lift.gamma, "strong", diag)


# ---------------------------------------------------------------------------
# asymptotics and classification


@dataclass(frozen=True)
class AsymptoticFit:
    mode: str
    fitted_amplitude: float
    window: tuple
    drift: float
    series: tuple = ()


def _window_rows(grid, window):
    lo, hi = window
    if not (0.5 <= lo < hi <= 0.9):
        raise InvalidInput(f"fit window must lie inside [0.5, 0.9], got {window}")
    i0 = grid.row_of(lo * grid.T)
    i1 = grid.row_of(hi * grid.T)
    return np.arange(i0, i1 + 1)


def fit_vertex_asymptotics(solution: ConeSolution, phi=None, profile=None, mode=None, window=FIT_WINDOW, noise=0.25):
    """Window fit of the vertex behaviour.

    Weak mode tracks ``a(t) = max_theta v / phi_S`` (estimate of ``k*``);
    strong mode tracks ``d(t) = sup_theta |w - omega_S|``. The fitted value
    is the window mean and the drift is max minus min.

    Raises
    ------
    WindowTooNoisy
        When the drift exceeds ``noise`` times the fitted amplitude (weak
        mode) or times ``max omega_S`` (strong mode).
    """
    mode = mode or ("strong" if solution.mode == "strong" else "weak")
    rows = _window_rows(solution.grid, window)
    ts = tuple(solution.grid.t[rows])
    if mode == "weak":
        if phi is None:
            phi = phi_on_grid(solution.opening, solution.grid.theta_axis)
        series = np.max(solution.v[rows] / phi, axis=1)
        scale = None
    elif mode == "strong":
        if profile is None:
            from .profile import solve_profile

            profile = solve_profile(solution.opening, solution.q)
        omega = profile(solution.grid.theta)
        series = np.max(np.abs(solution.w[rows] - omega), axis=1)
        scale = float(np.max(omega))
    else:
        raise InvalidInput(f"mode must be 'weak' or 'strong', got {mode}")
    fit = float(np.mean(series))
    drift = float(np.max(series) - np.min(series))
    ref = fit if scale is None else scale
    if drift > noise * ref:
        raise WindowTooNoisy(f"{mode} fit drifts by {drift:.3e} over the window (reference {ref:.3e})")
    return AsymptoticFit(mode, fit, (ts[0], ts[-1]), drift, tuple(float(x) for x in series))


@dataclass(frozen=True)
class ClassificationTolerances:
    bounded_growth: float = 2.0
    weak_drift: float = 0.10
    strong_distance: float = 0.05


@dataclass(frozen=True)
class VertexBehaviour:
    kind: str  # "bounded" | "weak" | "strong"
    k: Optional[float] = None
    detail: float = 0.0

    def describe(self):
        if self.kind == "weak":
            return f"weak, k={self.k:.6g}"
        return self.kind


def classify_solution(solution: ConeSolution, tolerances: ClassificationTolerances = ClassificationTolerances(), profile=None):
    """Three-way verdict on the vertex behaviour.

    bounded: ``r^{-alpha~} u`` does not grow across the fit window;
    weak: ``max v / phi_S`` settles to ``k* > 0`` and ``k = k* gamma``;
    strong: ``r^{2/(q-1)} u`` stays close to ``omega_S``.

    Raises
    ------
    Unclassifiable
        When none of the three tests passes.
    """
    grid = solution.grid
    rows = _window_rows(grid, FIT_WINDOW)
    phi = phi_on_grid(solution.opening, grid.theta_axis)
    if not np.any(solution.v[rows]):
        return VertexBehaviour("bounded")
    a, at = solution.exps.alpha, solution.exps.alpha_tilde
    b = np.max(np.abs(solution.v[rows]) / phi, axis=1) * np.exp((a + at) * grid.t[rows])
    if b[-1] <= tolerances.bounded_growth * b[0]:
        return VertexBehaviour("bounded", detail=float(b[-1] / b[0]))
    try:
        fit = fit_vertex_asymptotics(solution, phi=phi, mode="weak", noise=tolerances.weak_drift)
        if fit.fitted_amplitude > 0:
            return VertexBehaviour("weak", k=fit.fitted_amplitude * solution.gamma, detail=fit.drift)
    except WindowTooNoisy:
        pass
    from .profile import solve_profile
    from .errors import RegimeRefusal

    try:
        profile = profile or solve_profile(solution.opening, solution.q)
        fit = fit_vertex_asymptotics(solution, profile=profile, mode="strong", noise=1.0)
        if fit.fitted_amplitude <= tolerances.strong_distance * profile.amplitude_max:
            return VertexBehaviour("strong", detail=fit.fitted_amplitude / profile.amplitude_max)
    except (WindowTooNoisy, RegimeRefusal):
        pass
    raise Unclassifiable("no bounded, weak or strong behaviour detected in the fit window")


# ---------------------------------------------------------------------------
# Keller-Osserman ceiling


def keller_osserman_constant(dim, q):
    """Ceiling ``C`` in ``u(x) dist(x)^{2/(q-1)} <= C``.

    From the explicit supersolution ``C (R^2 - |x|^2)^{-2/(q-1)}`` of the
    equation in a ball of radius ``R``.
    """
    p = 2.0 / (q - 1.0)
    return (2.0 * p * max(dim, 2.0 * p + 2.0)) ** (p / 2.0)


def cone_distance(opening, grid):
    """Distance to the boundary of the truncated cone at every grid node."""
    r = np.exp(-grid.t)[:, None]
    gap = opening.theta_max - grid.theta[None, :]
    lateral = np.where(gap <= 0.5 * math.pi, r * np.sin(gap), r)
    return np.minimum(np.minimum(1.0 - r, lateral), r - math.exp(-grid.T))


@dataclass(frozen=True)
class KellerOssermanReport:
    max_value: float
    ceiling: float
    holds: bool
    argmax: tuple

    def as_dict(self):
        return {"max_value": self.max_value, "ceiling": self.ceiling, "holds": self.holds, "argmax": list(self.argmax)}


def keller_osserman_values(u, dist, q):
    p = 2.0 / (q - 1.0)
    return np.abs(u) * dist**p


def verify_keller_osserman(solution: ConeSolution) -> KellerOssermanReport:
    """Check ``u dist^{2/(q-1)} <= C`` on interior nodes (report only)."""
    dist = cone_distance(solution.opening, solution.grid)[1:-1]
    # u = e^{alpha t} v, folded into dist to stay finite deep in the cylinder
    t = solution.grid.t[1:-1, None]
    p = 2.0 / (solution.q - 1.0)
    vals = np.abs(solution.v[1:-1]) * np.exp(solution.exps.alpha * t + p * np.log(dist))
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    c = keller_osserman_constant(solution.opening.dim, solution.q)
    m = float(vals[i, j])
    return KellerOssermanReport(m, c, m <= c, (float(solution.grid.t[i + 1]), float(solution.grid.theta[j])))


def keller_osserman_refinement(coarse: ConeSolution, fine: ConeSolution):
    """Relative change of the Keller-Osserman maximum between two grids."""
    a = verify_keller_osserman(coarse).max_value
    b = verify_keller_osserman(fine).max_value
    if a == 0 and b == 0:
        return 0.0
    return abs(b - a) / max(abs(a), abs(b))


# ---------------------------------------------------------------------------
# removability experiment


@dataclass(frozen=True)
class RemovabilityProbe:
    epsilon: float
    band_measure: float
    density: float
    probe: float
    newton_iterations: int

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "band_measure": self.band_measure,
            "density": self.density,
            "probe": self.probe,
            "newton_iterations": self.newton_iterations,
        }


def _band_solve(opening, q, k, eps, grid, alpha):
    t = grid.t
    band = ((t > -math.log(2.0 * eps)) & (t < -math.log(eps))).astype(float)
    if not band.any():
        raise InvalidInput(f"epsilon {eps} gives an empty band on this grid")
    if k == 0:
        return RemovabilityProbe(eps, 0.0, 0.0, 0.0, 0)
    ext = laplace_dirichlet(opening, grid, lateral=band)
    measure = axis_value(ext, grid)
    density = k / measure
    # lateral data in v-variables
    lat_v = density * band * np.exp(-alpha * t)
    op = CylinderOperator(opening, grid, alpha)
    zero = np.zeros(grid.shape)
    y, rep = _solve_with_data_continuation(op, q, zero, lat_v)
    return RemovabilityProbe(eps, measure, density, 2.0**alpha * axis_value(y, grid), rep.iterations)


def _solve_with_data_continuation(op, q, lift, lateral, steps=8):
    try:
        return _solve_nonlinear(op, q, lift, lateral=lateral)
    except NoConvergence:
        pass
    # ramp the data in and warm start each stage
    z0 = None
    for s in np.geomspace(2.0 ** (-steps), 1.0, steps + 1):
        y, rep = _solve_nonlinear(op, q, lift, z0=z0, lateral=s * lateral)
        z0 = y[1:-1]
    return y, rep


def dirac_approximation_limit(opening: AxisymmetricOpening, q: float, k: float, epsilon_schedule, grid=None, threads=None):
    """Probe ``u_eps(x0)`` for data of mass ``k`` spread on the band ``eps < r < 2 eps``.

    The density on the lateral band is constant and scaled so that its
    harmonic extension equals ``k`` at ``x0``. Works in either regime.
    """
    if not k >= 0:
        raise InvalidInput(f"k must be non-negative, got {k}")
    if not q > 1:
        raise InvalidInput(f"q must exceed 1, got {q}")
    grid = grid or default_grid(opening)
    lam, _ = best_lambda(opening)
    alpha = exponents(lam, opening.dim).alpha
    eps = [float(e) for e in epsilon_schedule]
    if any(not 0 < e < 0.5 for e in eps):
        raise InvalidInput("epsilon values must lie in (0, 1/2)")
    n = threads or thread_count()
    job = lambda e: _band_solve(opening, q, k, e, grid, alpha)  # noqa: E731
    if n > 1 and len(eps) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            return list(pool.map(job, eps))
    return [job(e) for e in eps]
