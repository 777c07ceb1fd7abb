"""Dynamic boundary trace on cone exhaustions.

The exhaustion ``Omega_n = Omega_S minus B_{e^{-t_n}}`` is cut at grid
rows. Harmonic-measure integrals are never tabulated as densities: each one
is the value at ``x0`` of a discrete harmonic extension.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cone import LN2, ConeSolution, axis_value, laplace_dirichlet
from .errors import InvalidInput
from .io import write_csv
from .spectrum import phi_on_grid


@dataclass(frozen=True)
class Exhaustion:
    """Increasing truncation depths ``t_1 < ... < t_m`` with basepoint ``t = ln 2`` on the axis."""

    levels: tuple
    basepoint: float = LN2

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        if len(lv) < 1 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise InvalidInput("exhaustion levels must be strictly increasing")
        if lv[0] <= self.basepoint + 0.1:
            raise InvalidInput("every truncated domain must contain the basepoint")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def uniform(cls, t_first, t_last, m):
        return cls(tuple(np.linspace(t_first, t_last, m)))

    @classmethod
    def default(cls, T, m=8):
        """``m`` levels from ``t = 2`` to ``0.9 T``."""
        return cls.uniform(2.0, 0.9 * T, m)

    def rows(self, grid):
        h = grid.t_axis.h
        out = []
        for t in self.levels:
            i = grid.row_of(t)
            if abs(i * h - t) > 0.5 * h + 1e-12 or i >= grid.t_axis.n_cells or i < 4:
                raise InvalidInput(f"level t={t} is not inside the grid")
            out.append(i)
        return out


@dataclass
class TraceSequence:
    label: str
    levels: tuple
    values: np.ndarray
    limit_estimate: float
    diverging: bool
    notes: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "label": self.label,
            "levels": list(self.levels),
            "values": list(self.values),
            "limit_estimate": self.limit_estimate,
            "diverging": self.diverging,
            "divergence_rule": "v[-2] > 2 v[-3] and v[-1] > 2 v[-3]",
        }

    def to_csv(self, path):
        ext = aitken_series(self.values)
        write_csv(path, ["level", "value", "extrapolation"], zip(self.levels, self.values, ext))


def aitken(a, b, c):
    """Aitken delta-squared estimate from three consecutive terms."""
    d2 = c - 2.0 * b + a
    if d2 == 0 or not np.isfinite(d2):
        return float(c)
    est = c - (c - b) ** 2 / d2
    return float(est) if np.isfinite(est) else float(c)


def aitken_series(values):
    v = list(values)
    return [float("nan") if i < 2 else aitken(v[i - 2], v[i - 1], v[i]) for i in range(len(v))]


def is_diverging(values) -> bool:
    v = np.asarray(values, dtype=float)
    if v.size < 3 or not v[-3] > 0:
        return False
    return bool(v[-2] > 2.0 * v[-3] and v[-1] > 2.0 * v[-3])


def harmonic_measure_integral(opening, grid, level: float, inner=None, outer=None, lateral=None) -> float:
    """``int h d omega^{x0}`` over the boundary of the domain truncated at ``t = level``.

    ``inner`` and ``outer`` are data on the spheres ``r = e^{-level}`` and
    ``r = 1`` (one value per angular cell), ``lateral`` one value per row
    ``0..row(level)`` on the lateral face. Scalars are broadcast.
    """
    n = grid.row_of(level)
    nth = grid.theta_axis.n_cells

    def full(x, size):
        if x is None:
            return None
        return np.broadcast_to(np.asarray(x, dtype=float), (size,)).copy()

    ext = laplace_dirichlet(opening, grid, n, outer=full(outer, nth), inner=full(inner, nth), lateral=full(lateral, n + 1))
    return axis_value(ext, grid)


def quadratic_bump(radius):
    """``C^1`` piecewise-quadratic bump of the distance: 1 at 0, 0 beyond ``radius``."""

    def z(d):
        s = np.asarray(d, dtype=float) / radius
        return np.where(s <= 0.5, 1.0 - 2.0 * s**2, np.where(s < 1.0, 2.0 * (1.0 - s) ** 2, 0.0))

    return z


def vertex_bump(radius=0.25) -> Callable:
    """Test function of ``(r, theta)`` equal to 1 at the vertex."""
    z = quadratic_bump(radius)
    return lambda r, theta: z(r) * np.ones_like(theta)


def lateral_bump(r_y, opening, radius=0.25) -> Callable:
    """Bump centred on the lateral circle ``r = r_y`` (a point when ``N = 2``)."""
    z = quadratic_bump(radius)
    gap = opening.theta_max

    def f(r, theta):
        d2 = r**2 + r_y**2 - 2.0 * r * r_y * np.cos(gap - theta)
        return z(np.sqrt(np.maximum(d2, 0.0)))

    return f


def dynamic_trace(solution: ConeSolution, Z: Callable, exhaustion: Exhaustion, label: str = "Z") -> TraceSequence:
    """Per level, ``int_{dOmega_n} Z u d omega_n^{x0}`` with Aitken extrapolation.

    The cone solutions vanish on the lateral face and on ``r = 1``, so the
    data reduce to ``Z u`` on the inner sphere plus ``Z u`` on the outer one.
    """
    grid = solution.grid
    theta = grid.theta
    vals = []
    for i in exhaustion.rows(grid):
        t = grid.t[i]
        r = math.exp(-t)
        inner = Z(r, theta) * math.exp(solution.exps.alpha * t) * solution.v[i]
        outer = Z(1.0, theta) * solution.v[0]
        vals.append(harmonic_measure_integral(solution.opening, grid, t, inner=inner, outer=outer))
    vals = np.array(vals)
    lim = aitken(*vals[-3:]) if vals.size >= 3 else float(vals[-1])
    return TraceSequence(label, exhaustion.levels, vals, lim, is_diverging(vals))


def singular_mass_scan(solution: ConeSolution, exhaustion: Exhaustion, probe_points: Sequence = ("vertex",), radius=0.25):
    """Divergence flags of the bump traces at each probe.

    A probe is ``"vertex"`` or a radius ``r_y`` on the lateral face.
    """
    out = []
    for y in probe_points:
        if y == "vertex":
            Z = vertex_bump(radius)
        else:
            Z = lateral_bump(float(y), solution.opening, radius)
        seq = dynamic_trace(solution, Z, exhaustion, label=str(y))
        out.append((y, seq.diverging, seq))
    return out


@dataclass(frozen=True)
class RegularityReport:
    mass: float
    trend: float
    masses: tuple
    cuts: tuple

    @property
    def singular_suspect(self):
        return self.trend > 0.5

    def as_dict(self):
        return {"mass": self.mass, "trend": self.trend, "masses": list(self.masses), "cuts": list(self.cuts)}


def cone_weight(solution: ConeSolution):
    """``rho ~ r^{alpha~} phi_S (1 - r^2)``, normalized to 1 at ``x0``."""
    t = solution.grid.t[:, None]
    phi = phi_on_grid(solution.opening, solution.grid.theta_axis)
    r = np.exp(-t)
    rho = np.exp(-solution.exps.alpha_tilde * t) * phi * (1.0 - r**2)
    x0 = 2.0 ** (-solution.exps.alpha_tilde) * 0.75
    return rho / x0


def regularity_classifier(solution: ConeSolution, region_radius: float = 0.5, depth: Optional[float] = None) -> RegularityReport:
    """Weighted mass ``int u^q rho`` over the vertex region ``e^{-depth} < r < region_radius``.

    The region is cut at two inner radii, the second half the first;
    ``trend = log2`` of the mass ratio. Trend above 0.5 flags the vertex as
    singular-suspect.
    """
    grid = solution.grid
    depth = 0.9 * grid.T if depth is None else depth
    t = grid.t
    th = grid.theta
    op = solution.opening
    dth = grid.theta_axis.h
    wth = op.weight(th) * dth * (2.0 if op.dim == 2 else 1.0)
    rho = cone_weight(solution)
    uq = (np.exp(solution.exps.alpha * t)[:, None] * np.abs(solution.v)) ** solution.q
    # dx = r^N dt dsigma
    dens = np.sum(uq * rho * wth, axis=1) * np.exp(-op.dim * t)
    t_lo = -math.log(region_radius)
    cuts = (depth - LN2, depth)
    masses = []
    for c in cuts:
        i0, i1 = grid.row_of(t_lo), grid.row_of(c)
        seg = dens[i0 : i1 + 1]
        masses.append(float(np.trapezoid(seg, t[i0 : i1 + 1])) if seg.size > 1 else 0.0)
    if masses[0] <= 0:
        trend = 0.0
    else:
        trend = math.log2(masses[1] / masses[0])
    return RegularityReport(masses[1], trend, tuple(masses), cuts)
