"""Rectilinear polygons: feature exponents, uniform subcriticality and measure data.

Every boundary point of a rectilinear polygon has a tangent cone: a
quarter plane at convex corners, a half plane on open edges and a
three-quarter plane at reentrant corners, with critical exponents 2, 3
and 4. Boundary value problems are solved on a grid conforming to the
polygon with the five-point Laplacian.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .core import NewtonReport, damped_newton, smallest_eigenpair
from .errors import (
    InadmissibleDatum,
    InvalidInput,
    InvalidPolygon,
    SandwichViolation,
    ScheduleExhausted,
    SupercriticalRefused,
)
from .io import read_json, write_json
from .spectrum import AxisymmetricOpening, exponents, lambda_exact

CONVEX = "convex_corner"
REENTRANT = "reentrant_corner"
EDGE = "edge_point"
NEWTON_RTOL = 1e-13


# ---------------------------------------------------------------------------
# geometry


def _segment_distance(p, a, b):
    """Distance from points ``p`` (..., 2) to the segment ``[a, b]``."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    L2 = float(d @ d)
    s = np.clip(((p - a) @ d) / L2, 0.0, 1.0)
    return np.linalg.norm(p - (a + s[..., None] * d), axis=-1)


def _segments_touch(a, b, c, d):
    """Closed axis-parallel segments ``[a,b]`` and ``[c,d]`` intersect."""
    return (
        min(a[0], b[0]) <= max(c[0], d[0])
        and min(c[0], d[0]) <= max(a[0], b[0])
        and min(a[1], b[1]) <= max(c[1], d[1])
        and min(c[1], d[1]) <= max(a[1], b[1])
    )


@dataclass(frozen=True)
class RectilinearPolygon:
    """Simple polygon with axis-parallel edges, vertices in counterclockwise order."""

    vertices: tuple

    def __post_init__(self):
        try:
            vs = tuple((float(x), float(y)) for x, y in self.vertices)
        except (TypeError, ValueError) as exc:
            raise InvalidPolygon(f"vertices must be pairs of numbers: {exc}") from exc
        object.__setattr__(self, "vertices", vs)
        n = len(vs)
        if n < 4 or n % 2:
            raise InvalidPolygon(f"a rectilinear polygon needs an even number >= 4 of vertices, got {n}")
        if not all(math.isfinite(c) for v in vs for c in v):
            raise InvalidPolygon("vertex coordinates must be finite")
        for i in range(n):
            a, b = vs[i], vs[(i + 1) % n]
            dx, dy = b[0] - a[0], b[1] - a[1]
            if (dx == 0) == (dy == 0):
                raise InvalidPolygon(f"edge {i} is degenerate or not axis-parallel")
        for i in range(n):
            d0 = self.direction(i - 1)
            d1 = self.direction(i)
            if d0[0] * d1[0] + d0[1] * d1[1] != 0:
                raise InvalidPolygon(f"edges meeting at vertex {i} are not perpendicular")
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_touch(vs[i], vs[(i + 1) % n], vs[j], vs[(j + 1) % n]):
                    raise InvalidPolygon(f"edges {i} and {j} intersect")
        if self.signed_area <= 0:
            raise InvalidPolygon("vertices must be in counterclockwise order")

    @classmethod
    def from_json(cls, path):
        doc = read_json(path)
        if not isinstance(doc, dict) or "vertices" not in doc:
            raise InvalidPolygon("geometry file needs a 'vertices' list")
        return cls(tuple(tuple(v) for v in doc["vertices"]))

    def to_json(self, path):
        write_json({"vertices": [list(v) for v in self.vertices]}, path)

    @property
    def n(self):
        return len(self.vertices)

    def vertex(self, i):
        return np.array(self.vertices[i % self.n])

    def edge(self, i):
        return self.vertex(i), self.vertex(i + 1)

    def direction(self, i):
        a, b = self.vertices[i % self.n], self.vertices[(i + 1) % self.n]
        L = abs(b[0] - a[0]) + abs(b[1] - a[1])
        return ((b[0] - a[0]) / L, (b[1] - a[1]) / L)

    def edge_length(self, i):
        a, b = self.edge(i)
        return float(np.abs(b - a).sum())

    @property
    def signed_area(self):
        v = np.array(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def centroid(self):
        v = np.array(self.vertices)
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        A = 0.5 * cr.sum()
        return np.array([np.sum((x + xn) * cr), np.sum((y + yn) * cr)]) / (6.0 * A)

    @property
    def bbox(self):
        v = np.array(self.vertices)
        return v.min(axis=0), v.max(axis=0)

    def quarter_turns(self, i):
        """Interior angle at vertex ``i`` in units of ``pi/2`` (1 convex, 3 reentrant)."""
        d0, d1 = self.direction(i - 1), self.direction(i)
        cross = d0[0] * d1[1] - d0[1] * d1[0]
        return 1 if cross > 0 else 3

    def interior_angle(self, i):
        return self.quarter_turns(i) * math.pi / 2.0

    def distance_to_boundary(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.min([_segment_distance(pts, *self.edge(i)) for i in range(self.n)], axis=0)

    def contains(self, pts, tol=1e-12):
        """Strict interior test (points on the boundary are outside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        for i in range(self.n):
            (x0, y0), (x1, y1) = self.edge(i)
            if x0 == x1:
                lo, hi = min(y0, y1), max(y0, y1)
                crosses = (y >= lo) & (y < hi) & (x < x0)
                inside ^= crosses
        on = self.distance_to_boundary(pts) <= tol
        return inside & ~on

    def locate(self, point, tol=1e-12):
        """``("vertex", i)``, ``("edge", i)`` or ``None`` for a boundary point."""
        p = np.asarray(point, dtype=float)
        for i in range(self.n):
            if np.linalg.norm(p - self.vertex(i)) <= tol:
                return ("vertex", i)
        for i in range(self.n):
            if _segment_distance(p[None, :], *self.edge(i))[0] <= tol:
                return ("edge", i)
        return None


def polygon_from_vertices(vertices) -> RectilinearPolygon:
    return RectilinearPolygon(tuple(tuple(v) for v in vertices))


UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
L_SHAPE = ((0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0))


# ---------------------------------------------------------------------------
# features and exponents


@dataclass(frozen=True)
class BoundaryFeature:
    kind: str
    location: tuple
    interior_angle: float
    q_c: float
    lambda_S: float
    alpha: float
    index: int

    def as_dict(self):
        return {
            "kind": self.kind,
            "index": self.index,
            "location": list(self.location),
            "interior_angle": self.interior_angle,
            "lambda": self.lambda_S,
            "alpha": self.alpha,
            "q_c": self.q_c,
        }


def _feature(kind, loc, m, index):
    omega = m * math.pi / 2.0
    lam = lambda_exact(AxisymmetricOpening(2, omega))
    ex = exponents(lam, 2)
    q_c = 1.0 + m  # 1 + 2 omega / pi with omega = m pi / 2
    if abs(ex.q_S - q_c) > 1e-12 * q_c:
        raise AssertionError("spectral and geometric critical exponents disagree")
    return BoundaryFeature(kind, tuple(float(c) for c in loc), omega, q_c, lam, ex.alpha, index)


def feature_exponents(polygon: RectilinearPolygon):
    """Corners (convex or reentrant) and one representative point per open edge."""
    out = []
    for i in range(polygon.n):
        m = polygon.quarter_turns(i)
        out.append(_feature(CONVEX if m == 1 else REENTRANT, polygon.vertices[i], m, i))
    for i in range(polygon.n):
        a, b = polygon.edge(i)
        out.append(_feature(EDGE, 0.5 * (a + b), 2, i))
    return out


def feature_at(polygon, point):
    """Feature of an arbitrary boundary point."""
    loc = polygon.locate(point)
    if loc is None:
        raise InvalidInput(f"{tuple(point)} is not on the boundary")
    kind, i = loc
    if kind == "vertex":
        m = polygon.quarter_turns(i)
        return _feature(CONVEX if m == 1 else REENTRANT, polygon.vertices[i], m, i)
    return _feature(EDGE, tuple(point), 2, i)


def q_of_opening(omega):
    """Critical exponent ``1 + 2 omega / pi`` of a planar sector."""
    return 1.0 + 2.0 * omega / math.pi


# ---------------------------------------------------------------------------
# boundary sets and q*


@dataclass(frozen=True)
class BoundarySet:
    """Corners by vertex index and closed edge pieces ``(edge, s0, s1)`` in arc length."""

    corners: tuple = ()
    edges: tuple = ()

    @classmethod
    def from_dict(cls, doc):
        try:
            corners = tuple(int(c) for c in doc.get("corners", []))
            edges = tuple((int(e[0]), float(e[1]), float(e[2])) for e in doc.get("edges", []))
        except (TypeError, ValueError, IndexError, AttributeError) as exc:
            raise InvalidInput(f"malformed boundary set: {exc}") from exc
        return cls(corners, edges)

    @classmethod
    def whole_boundary(cls, polygon):
        return cls((), tuple((i, 0.0, polygon.edge_length(i)) for i in range(polygon.n)))

    def as_dict(self):
        return {"corners": list(self.corners), "edges": [list(e) for e in self.edges]}

    @property
    def empty(self):
        return not self.corners and not self.edges

    def validate(self, polygon):
        for c in self.corners:
            if not 0 <= c < polygon.n:
                raise InvalidInput(f"corner index {c} out of range")
        for i, s0, s1 in self.edges:
            if not 0 <= i < polygon.n:
                raise InvalidInput(f"edge index {i} out of range")
            if not 0 <= s0 <= s1 <= polygon.edge_length(i) + 1e-12:
                raise InvalidInput(f"edge piece ({i}, {s0}, {s1}) outside the edge")

    def pieces(self, polygon):
        """Closed segments (as endpoint pairs) making up the set; corners are degenerate."""
        segs = []
        for c in self.corners:
            v = polygon.vertex(c)
            segs.append((v, v))
        for i, s0, s1 in self.edges:
            a, _ = polygon.edge(i)
            d = np.array(polygon.direction(i))
            segs.append((a + s0 * d, a + s1 * d))
        return segs

    def distance(self, polygon, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        best = np.full(len(pts), np.inf)
        for a, b in self.pieces(polygon):
            if np.allclose(a, b):
                d = np.linalg.norm(pts - a, axis=1)
            else:
                d = _segment_distance(pts, a, b)
            best = np.minimum(best, d)
        return best

    def union(self, other):
        return BoundarySet(tuple(sorted(set(self.corners) | set(other.corners))), tuple(self.edges) + tuple(other.edges))


def _blocked_intervals(polygon, z, r, tol=1e-12):
    """Directions from ``z`` whose ray of length ``r`` leaves the open polygon.

    Returns ``(start, length)`` arcs. Edges through ``z`` block the outside
    of the local tangent cone; every other edge blocks the angular span of
    its part inside the closed disc ``B_r(z)``.
    """
    z = np.asarray(z, dtype=float)
    loc = polygon.locate(z, tol)
    arcs = []
    own = set()
    if loc is None:
        raise InvalidInput("sample point is not on the boundary")
    kind, i = loc
    if kind == "vertex":
        d = polygon.direction(i)
        start = math.atan2(d[1], d[0]) + polygon.interior_angle(i)
        arcs.append((start % (2 * math.pi), 2 * math.pi - polygon.interior_angle(i)))
        own = {i, (i - 1) % polygon.n}
    else:
        d = polygon.direction(i)
        arcs.append(((math.atan2(d[1], d[0]) + math.pi) % (2 * math.pi), math.pi))
        own = {i}
    for j in range(polygon.n):
        if j in own:
            continue
        a, b = polygon.edge(j)
        clip = _clip_segment_to_disc(a, b, z, r)
        if clip is None:
            continue
        p, q = clip
        ap = math.atan2(p[1] - z[1], p[0] - z[0])
        aq = math.atan2(q[1] - z[1], q[0] - z[0])
        span = (aq - ap) % (2 * math.pi)
        if span > math.pi:
            ap, span = aq, 2 * math.pi - span
        arcs.append((ap % (2 * math.pi), span))
    return arcs


def _clip_segment_to_disc(a, b, c, r):
    """Part of ``[a, b]`` inside the closed disc ``|x - c| <= r``, or ``None``."""
    d = b - a
    f = a - c
    A = float(d @ d)
    B = 2.0 * float(f @ d)
    C = float(f @ f) - r * r
    disc = B * B - 4 * A * C
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    s0 = max((-B - sq) / (2 * A), 0.0)
    s1 = min((-B + sq) / (2 * A), 1.0)
    if s0 > s1:
        return None
    return a + s0 * d, a + s1 * d


def _largest_free_arc(arcs):
    two_pi = 2 * math.pi
    if not arcs:
        return two_pi
    ivs = []
    for s, L in arcs:
        s %= two_pi
        if s + L > two_pi:
            ivs.append((s, two_pi))
            ivs.append((0.0, s + L - two_pi))
        else:
            ivs.append((s, s + L))
    ivs.sort()
    merged = [list(ivs[0])]
    for s, e in ivs[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    if merged[0][0] <= 0 and merged[-1][1] >= two_pi and len(merged) > 1:
        # join the wrap-around piece
        merged[0][0] = merged[-1][0] - two_pi
        merged.pop()
    if len(merged) == 1:
        return max(two_pi - (merged[0][1] - merged[0][0]), 0.0)
    gaps = [merged[k + 1][0] - merged[k][1] for k in range(len(merged) - 1)]
    gaps.append(merged[0][0] + two_pi - merged[-1][1])
    return max(gaps)


def inscribed_opening(polygon, z, r):
    """Opening of the largest sector at ``z`` whose intersection with ``B_r(z)`` lies in the polygon."""
    return _largest_free_arc(_blocked_intervals(polygon, z, r))


def inscribed_opening_bruteforce(polygon, z, r, step_deg=1.0, samples=64):
    """Angular sampling oracle for :func:`inscribed_opening` (resolution ``step_deg``)."""
    z = np.asarray(z, dtype=float)
    n_dir = int(round(360.0 / step_deg))
    ang = np.arange(n_dir) * 2 * math.pi / n_dir
    s = r * np.arange(1, samples + 1) / (samples + 1)
    pts = z[None, None, :] + s[None, :, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)[:, None, :]
    free = polygon.contains(pts.reshape(-1, 2)).reshape(n_dir, samples).all(axis=1)
    if free.all():
        return 2 * math.pi
    if not free.any():
        return 0.0
    k = int(np.argmin(free))
    rolled = np.roll(free, -k)
    best = run = 0
    for f in rolled:
        run = run + 1 if f else 0
        best = max(best, run)
    # a run of m free directions spans about m steps
    return best * 2 * math.pi / n_dir


def _boundary_samples(polygon, E, r):
    """Boundary points within distance ``r`` of ``E``: vertices, geometric clusters near ends, uniform fill."""
    pts = []
    for i in range(polygon.n):
        a, b = polygon.edge(i)
        L = polygon.edge_length(i)
        d = np.array(polygon.direction(i))
        ss = [0.0, L]
        ss += list(np.linspace(0.0, L, 33))
        for m in range(1, 16):
            ss += [r * 2.0**-m, L - r * 2.0**-m]
        for j, s0, s1 in E.edges:
            if j == i:
                ss += [s0, s1]
        for c in E.corners:
            v = polygon.vertex(c)
            s_proj = float((v - a) @ d)
            if 0 <= s_proj <= L:
                ss.append(s_proj)
        ss = np.unique(np.clip(ss, 0.0, L))
        pts.append(a + ss[:, None] * d)
    pts = np.concatenate(pts)
    keep = E.distance(polygon, pts) < r
    return pts[keep]


@dataclass(frozen=True)
class QStar:
    value: float
    radii: tuple
    per_radius: tuple
    argmin: tuple
    oracle: Optional[float] = None

    def as_dict(self):
        return {
            "value": self.value,
            "radii": list(self.radii),
            "per_radius": list(self.per_radius),
            "argmin": list(self.argmin),
            "oracle": self.oracle,
        }


def default_radii(polygon, steps=4):
    Lmin = min(polygon.edge_length(i) for i in range(polygon.n))
    return tuple(0.25 * Lmin * 2.0**-k for k in range(steps))


def q_star_detail(polygon, E: BoundarySet, radii=None, oracle=False, step_deg=1.0) -> QStar:
    """Uniform subcriticality exponent of ``E`` along a decreasing radius schedule."""
    E.validate(polygon)
    if E.empty:
        raise InvalidInput("q* of the empty set is undefined")
    radii = tuple(radii or default_radii(polygon))
    vals, arg = [], None
    for r in radii:
        pts = _boundary_samples(polygon, E, r)
        qs = np.array([q_of_opening(inscribed_opening(polygon, z, r)) for z in pts])
        k = int(np.argmin(qs))
        vals.append(float(qs[k]))
        arg = tuple(float(c) for c in pts[k])
    brute = None
    if oracle:
        r = radii[-1]
        pts = _boundary_samples(polygon, E, r)
        brute = min(q_of_opening(inscribed_opening_bruteforce(polygon, z, r, step_deg)) for z in pts)
    return QStar(vals[-1], radii, tuple(vals), arg, brute)


def q_star(polygon, E: BoundarySet, radii=None) -> float:
    return q_star_detail(polygon, E, radii).value


# ---------------------------------------------------------------------------
# conforming grid


class PolygonGrid:
    """Nodes ``(x0 + i h, y0 + j h)`` of the bounding box with ``h = max(width, height) / n``.

    Arrays are indexed ``[j, i]`` (row = y). Every vertex must be a node.
    """

    def __init__(self, polygon: RectilinearPolygon, n: int):
        if int(n) != n or n < 8:
            raise InvalidInput(f"grid resolution must be an integer >= 8, got {n}")
        self.polygon = polygon
        self.n = int(n)
        lo, hi = polygon.bbox
        self.origin = lo
        self.h = float(max(hi - lo)) / n
        for v in polygon.vertices:
            k = (np.array(v) - lo) / self.h
            if np.max(np.abs(k - np.round(k))) > 1e-9:
                raise InvalidPolygon(f"vertex {v} is not a node of the {n}-cell grid")
        nx = int(round((hi[0] - lo[0]) / self.h))
        ny = int(round((hi[1] - lo[1]) / self.h))
        self.shape = (ny + 1, nx + 1)
        xs = lo[0] + self.h * np.arange(nx + 1)
        ys = lo[1] + self.h * np.arange(ny + 1)
        self.X, self.Y = np.meshgrid(xs, ys)
        pts = np.stack([self.X.ravel(), self.Y.ravel()], axis=1)
        tol = 1e-9 * self.h
        dist = polygon.distance_to_boundary(pts)
        self.boundary = (dist <= tol).reshape(self.shape)
        self.interior = polygon.contains(pts, tol).reshape(self.shape)
        self.index = -np.ones(self.shape, dtype=int)
        self.index[self.interior] = np.arange(int(self.interior.sum()))
        self.n_interior = int(self.interior.sum())
        # snap the centroid on the n = 8 lattice so nested grids share x0
        stride = n // 8 if n % 8 == 0 else 1
        c = polygon.centroid
        cand = np.argwhere(self.interior)
        on_lattice = (cand[:, 0] % stride == 0) & (cand[:, 1] % stride == 0)
        if on_lattice.any():
            cand = cand[on_lattice]
        d = (self.X[cand[:, 0], cand[:, 1]] - c[0]) ** 2 + (self.Y[cand[:, 0], cand[:, 1]] - c[1]) ** 2
        self.x0_node = tuple(int(v) for v in cand[int(np.argmin(d))])

    @property
    def x0(self):
        j, i = self.x0_node
        return (float(self.X[j, i]), float(self.Y[j, i]))

    def node_of(self, point):
        p = (np.asarray(point, dtype=float) - self.origin) / self.h
        k = np.round(p)
        if np.max(np.abs(p - k)) > 1e-9:
            raise InvalidInput(f"{tuple(point)} is not a grid node")
        return int(k[1]), int(k[0])

    @cached_property
    def laplacian(self):
        """``-Delta_h`` on interior nodes (symmetric positive definite)."""
        rows, cols, vals = [], [], []
        idx = self.index
        inv = 1.0 / self.h**2
        J, I = np.nonzero(self.interior)
        me = idx[J, I]
        rows.append(me)
        cols.append(me)
        vals.append(np.full(me.size, 4.0 * inv))
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = idx[J + dj, I + di]
            ok = nb >= 0
            rows.append(me[ok])
            cols.append(nb[ok])
            vals.append(np.full(int(ok.sum()), -inv))
        m = self.n_interior
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))

    def boundary_rhs(self, data):
        """Contribution of boundary values ``data`` (full node array) to ``-Delta_h`` rows."""
        inv = 1.0 / self.h**2
        J, I = np.nonzero(self.interior)
        out = np.zeros(self.n_interior)
        me = self.index[J, I]
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jj, ii = J + dj, I + di
            bnd = self.boundary[jj, ii]
            out[me[bnd]] += inv * data[jj[bnd], ii[bnd]]
        return out

    def to_full(self, interior_values, boundary_values=None):
        u = np.zeros(self.shape) if boundary_values is None else np.array(boundary_values, dtype=float)
        u[self.interior] = interior_values
        return u

    def harmonic_extension(self, data):
        from .core import _linear_solver

        vals = _linear_solver(self.laplacian)(self.boundary_rhs(data))
        return self.to_full(vals, np.where(self.boundary, data, 0.0))

    @cached_property
    def rho(self):
        """First Dirichlet eigenfunction, normalized to 1 at ``x0``."""
        lam, v = smallest_eigenpair(self.laplacian)
        full = self.to_full(np.abs(v))
        return full / full[self.x0_node], lam

    def boundary_param_nodes(self, edge, s0, s1):
        """Boundary nodes on the closed piece ``[s0, s1]`` of ``edge``."""
        a, _ = self.polygon.edge(edge)
        d = np.array(self.polygon.direction(edge))
        L = self.polygon.edge_length(edge)
        s = np.arange(0, int(round(L / self.h)) + 1) * self.h
        s = s[(s >= s0 - 1e-9 * self.h) & (s <= s1 + 1e-9 * self.h)]
        return [self.node_of(a + si * d) for si in s]


# ---------------------------------------------------------------------------
# Dirac kernels


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2), 30.0 * s**2 * (1.0 - s) ** 2, 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


def _local_frame(polygon, y):
    kind, i = polygon.locate(y)
    if kind == "vertex":
        d = polygon.direction(i)
        omega = polygon.interior_angle(i)
        others_v = [polygon.vertex(k) for k in range(polygon.n) if k != i]
        others_e = [k for k in range(polygon.n) if k not in (i, (i - 1) % polygon.n)]
    else:
        d = polygon.direction(i)
        omega = math.pi
        others_v = [polygon.vertex(k) for k in range(polygon.n)]
        others_e = [k for k in range(polygon.n) if k != i]
    y = np.asarray(y, dtype=float)
    dv = min(float(np.linalg.norm(v - y)) for v in others_v)
    de = min(float(_segment_distance(y[None, :], *polygon.edge(k))[0]) for k in others_e)
    return np.array(d), omega, min(dv, de) / 3.0


@dataclass
class DiracKernel:
    """Normalized kernel ``K(., y)`` with ``K(x0, y) = 1`` on a polygon grid."""

    y: tuple
    omega: float
    cutoff: float
    values: np.ndarray
    scale: float


def dirac_kernel(grid: PolygonGrid, y) -> DiracKernel:
    """``K = chi L + h`` with the sector kernel ``L = r^{-pi/omega} sin(pi theta/omega)``.

    ``chi`` is a quintic cutoff (1 for ``r <= R/2``, 0 for ``r >= R``) and
    the harmonic correction solves ``-Delta_h h = Delta(chi L)`` with zero
    boundary values.
    """
    y = np.asarray(y, dtype=float)
    d, omega, R = _local_frame(grid.polygon, y)
    a = math.pi / omega
    dx, dy = grid.X - y[0], grid.Y - y[1]
    r = np.hypot(dx, dy)
    th = np.arctan2(d[0] * dy - d[1] * dx, d[0] * dx + d[1] * dy) % (2 * math.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = np.where(r > 0, r, 1.0)
        L = np.where(r > 0, rs**-a * np.sin(a * th), 0.0)
        half = 0.5 * R
        S, dS, d2S = _smoothstep((r - half) / half)
        chi = 1.0 - S
        chi1 = -dS / half
        chi2 = -d2S / half**2
        src = 2.0 * chi1 * (-a) * rs ** (-a - 1) * np.sin(a * th) + L * (chi2 + chi1 / rs)
    src = np.where(grid.interior, src, 0.0)
    from .core import _linear_solver

    corr = _linear_solver(grid.laplacian)(src[grid.interior])
    K = np.where(grid.interior, chi * L, 0.0)
    K[grid.interior] += corr
    scale = K[grid.x0_node]
    return DiracKernel(tuple(y), omega, R, K / scale, float(scale))


def admissibility_mass(polygon, y, q, levels=(16, 64, 256)):
    """``int K(., y)^q rho`` on nested grids.

    Returns
    -------
    dict
        ``levels``, ``masses`` and ``ratio`` (last over previous).
    """
    masses = []
    for n in levels:
        g = PolygonGrid(polygon, n)
        K = dirac_kernel(g, y).values
        rho, _ = g.rho
        vals = np.abs(K[g.interior]) ** q * rho[g.interior]
        masses.append(float(vals.sum() * g.h**2))
    ratio = masses[-1] / masses[-2] if len(masses) > 1 and masses[-2] > 0 else float("nan")
    return {"levels": list(levels), "masses": masses, "ratio": ratio, "q": q, "y": list(map(float, y))}


# ---------------------------------------------------------------------------
# measure data and solutions


@dataclass(frozen=True)
class Datum:
    """Boundary datum: Diracs ``(x, y, mass)``, densities ``(edge, s0, s1, value)`` and blow-up pieces."""

    diracs: tuple = ()
    densities: tuple = ()
    blowup: BoundarySet = BoundarySet()
    M: float = 0.0

    @property
    def empty(self):
        return not self.diracs and not self.densities and (self.blowup.empty or self.M == 0)

    def plus(self, other):
        return Datum(self.diracs + other.diracs, self.densities + other.densities, self.blowup.union(other.blowup), max(self.M, other.M))

    def as_dict(self):
        return {
            "diracs": [list(d) for d in self.diracs],
            "densities": [list(d) for d in self.densities],
            "blowup": self.blowup.as_dict(),
            "M": self.M,
        }


@dataclass
class PolygonSolution:
    polygon: RectilinearPolygon
    grid: PolygonGrid
    u: np.ndarray
    q: float
    datum: Datum
    newton: NewtonReport
    meta: dict = field(default_factory=dict)

    def probe(self):
        return float(self.u[self.grid.x0_node])

    def as_dict(self):
        return {
            "meta": {"q": self.q, "n": self.grid.n, "h": self.grid.h, "x0": list(self.grid.x0), **self.meta},
            "geometry": {"vertices": [list(v) for v in self.polygon.vertices]},
            "datum": self.datum.as_dict(),
            "shape": list(self.grid.shape),
            "u": self.u.ravel(),
            "newton": self.newton.as_dict(),
        }


def _blowup_nodes(grid, F: BoundarySet):
    """Boundary nodes carrying blow-up data: edge pieces plus the one-node neighbourhood of each corner."""
    mask = np.zeros(grid.shape, dtype=bool)
    for i, s0, s1 in F.edges:
        for j, k in grid.boundary_param_nodes(i, s0, s1):
            mask[j, k] = True
    for c in F.corners:
        j, k = grid.node_of(grid.polygon.vertex(c))
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                jj, kk = j + dj, k + dk
                if 0 <= jj < grid.shape[0] and 0 <= kk < grid.shape[1] and grid.boundary[jj, kk] and abs(dj) + abs(dk) <= 1:
                    mask[jj, kk] = True
    return mask


def boundary_data(grid, datum: Datum):
    data = np.zeros(grid.shape)
    for i, s0, s1, val in datum.densities:
        if val < 0:
            raise InvalidInput("densities must be non-negative")
        for j, k in grid.boundary_param_nodes(int(i), s0, s1):
            data[j, k] += val
    if not datum.blowup.empty and datum.M > 0:
        data[_blowup_nodes(grid, datum.blowup)] += datum.M
    return data


def _kernel_lift(grid, q, diracs):
    lift = np.zeros(grid.shape)
    for x, y, m in diracs:
        if m < 0:
            raise InvalidInput("Dirac masses must be non-negative")
        f = feature_at(grid.polygon, (x, y))
        if q >= f.q_c:
            raise InadmissibleDatum(f"Dirac at ({x}, {y}) needs q < q_c = {f.q_c:g}, got q = {q}")
        if m == 0:
            continue
        lift += m * dirac_kernel(grid, (x, y)).values
    return lift


def solve_measure_bvp(polygon, q, datum: Datum, n=128, grid=None, y0=None) -> PolygonSolution:
    """Solution of ``-Delta u + u^q = 0`` with trace given by ``datum``.

    ``u = sum_i m_i K(., y_i) + y`` where ``y`` carries the density and
    blow-up values on the boundary and solves
    ``-Delta_h y + g(lift + y) = 0`` in the interior.

    Raises
    ------
    InadmissibleDatum
        When a Dirac sits at a feature with ``q >= q_c``.
    """
    if not q > 1:
        raise InvalidInput(f"q must exceed 1, got {q}")
    grid = grid or PolygonGrid(polygon, n)
    lift = _kernel_lift(grid, q, datum.diracs)
    data = boundary_data(grid, datum)
    if not lift.any() and not data.any():
        return PolygonSolution(polygon, grid, np.zeros(grid.shape), q, datum, NewtonReport(converged=True, final_residual_sup=0.0))
    A = grid.laplacian
    b = grid.boundary_rhs(data)
    li = lift[grid.interior]

    def residual(y):
        s = li + y
        return A @ y - b + np.abs(s) ** (q - 1.0) * s

    def jacobian(y):
        s = li + y
        return (A + sp.diags(q * np.abs(s) ** (q - 1.0))).tocsc()

    scale = max(np.max(np.abs(lift)), np.max(data))
    tol = NEWTON_RTOL * 8.0 / grid.h**2 * scale
    if y0 is None:
        # a constant at the top of the data is a supersolution
        y0 = np.full(grid.n_interior, float(np.max(data)))
    y, rep = damped_newton(residual, jacobian, y0, tol=tol, max_iter=200, polish=2)
    u = grid.to_full(li + y, data)
    return PolygonSolution(polygon, grid, u, q, datum, rep)


def keller_osserman_scale(q, h):
    """Blow-up level ``C h^{-2/(q-1)}`` at distance ``h``."""
    from .cone import keller_osserman_constant

    return keller_osserman_constant(2, q) * h ** (-2.0 / (q - 1.0))


def blowup_level(q, h):
    """Boundary value standing in for ``+infinity`` at resolution ``h``.

    The one-dimensional large solution ``c d^{-p}``, ``c = (p (p+1))^{1/(q-1)}``,
    satisfies the discrete equation at the first interior node exactly when
    the boundary node carries ``c h^{-p} (2 - 2^{-p} + p (p+1))``. The
    five-point scheme has no finite limit as the boundary value grows (the
    first layer grows like ``(M/h^2)^{1/q}``), so this level is used in place
    of the limit.
    """
    p = 2.0 / (q - 1.0)
    c = (p * (p + 1.0)) ** (1.0 / (q - 1.0))
    return c * h**-p * (2.0 - 2.0**-p + p * (p + 1.0))


def blowup_schedule(q, h, doublings=20):
    """Doubling schedule ``M0 2^j`` starting at the Keller-Osserman level."""
    M0 = keller_osserman_scale(q, h)
    return [M0 * 2.0**j for j in range(doublings + 1)]


def maximal_solution(polygon, q, F: BoundarySet, M_schedule=None, n=128, grid=None, tol=1e-4):
    """Largest solution vanishing off ``F``: boundary data ``M`` on the nodes of ``F``.

    With ``M_schedule`` of length one (the default is :func:`blowup_level`)
    a single solve is done. Longer schedules are followed until ``u(x0)``
    changes by less than ``tol`` relative between consecutive values.

    Raises
    ------
    ScheduleExhausted
        When a schedule ends with the probe still moving.
    """
    grid = grid or PolygonGrid(polygon, n)
    F.validate(polygon)
    if F.empty:
        return PolygonSolution(polygon, grid, np.zeros(grid.shape), q, Datum(), NewtonReport(converged=True, final_residual_sup=0.0), {"M": 0.0})
    if M_schedule is None:
        M_schedule = [blowup_level(q, grid.h)]
    prev, sol, y0 = None, None, None
    changes = []
    for M in M_schedule:
        sol = solve_measure_bvp(polygon, q, Datum(blowup=F, M=float(M)), grid=grid, y0=y0)
        y0 = sol.u[grid.interior]
        cur = sol.probe()
        if prev is not None:
            ch = abs(cur - prev) / max(abs(cur), 1e-300)
            changes.append(ch)
            if ch < tol:
                break
        prev = cur
    else:
        if len(M_schedule) > 1:
            raise ScheduleExhausted(
                f"maximal-solution probe still moving after {len(M_schedule)} values of M (last relative change {changes[-1]:.2e})"
            )
    sol.meta.update({"M": float(M), "probe_changes": changes})
    return sol


def _violation(a, b, rtol):
    """Worst excess of ``a`` over ``b`` relative to ``max(1, |b|)``, and its node."""
    ex = (a - b) / np.maximum(1.0, np.abs(b))
    k = int(np.argmax(ex))
    return float(ex.ravel()[k]), np.unravel_index(k, a.shape)


def compare_nodewise(a, b, rtol=1e-6):
    """True iff ``a <= b`` at every node up to ``rtol * max(1, |b|)``."""
    ex, _ = _violation(a, b, rtol)
    return ex <= rtol


def sandwich_check(polygon, q, nu: Datum, F: BoundarySet, n=128, grid=None, rtol=1e-6, M=None):
    """``max(V_nu, U_F) <= u <= V_nu + U_F`` at every node.

    ``u`` has trace ``(nu, F)``: data ``nu`` plus ``M`` on ``F``. All three
    solves share the same ``M``, taken from the converged ``U_F`` schedule.

    Raises
    ------
    SupercriticalRefused
        Outside the well-posed range ``q < q*`` of the whole boundary.
    SandwichViolation
        With the worst node when either inequality fails.
    """
    grid = grid or PolygonGrid(polygon, n)
    qs = q_star(polygon, BoundarySet.whole_boundary(polygon))
    if not q < qs:
        raise SupercriticalRefused(f"sandwich needs q < q*(boundary) = {qs:g}")
    U = maximal_solution(polygon, q, F, grid=grid, M_schedule=None if M is None else [M])
    M_used = U.meta["M"]
    V = solve_measure_bvp(polygon, q, nu, grid=grid)
    full = Datum(nu.diracs, nu.densities, F, M_used)
    u = solve_measure_bvp(polygon, q, full, grid=grid)
    lower = np.maximum(V.u, U.u)
    upper = V.u + U.u
    lo_ex, lo_node = _violation(lower, u.u, rtol)
    up_ex, up_node = _violation(u.u, upper, rtol)
    report = {
        "M": M_used,
        "lower_excess": lo_ex,
        "upper_excess": up_ex,
        "holds": lo_ex <= rtol and up_ex <= rtol,
        "probe_u": u.probe(),
        "probe_V": V.probe(),
        "probe_U": U.probe(),
    }
    if lo_ex > rtol:
        raise SandwichViolation(f"u < max(V, U_F) by {lo_ex:.3e} (relative)", node=tuple(int(c) for c in lo_node))
    if up_ex > rtol:
        raise SandwichViolation(f"u > V + U_F by {up_ex:.3e} (relative)", node=tuple(int(c) for c in up_node))
    return report, (u, V, U)


# ---------------------------------------------------------------------------
# traces and ceilings on polygons


def offset_levels(grid):
    """Chessboard distance (in nodes) from each interior node to the boundary."""
    from scipy.ndimage import distance_transform_cdt

    return distance_transform_cdt(grid.interior, metric="chessboard")


def polygon_trace(solution: PolygonSolution, Z, offsets=(8, 4, 2, 1)):
    """``int_{dOmega_m} Z u d omega_m^{x0}`` on the inward offsets ``Omega_m = {depth > m}``."""
    from .trace import TraceSequence, aitken, is_diverging

    g = solution.grid
    depth = offset_levels(g)
    vals = []
    Zv = Z(g.X, g.Y)
    for m in offsets:
        inside = depth > m
        ring = depth == m
        if not inside[g.x0_node]:
            raise InvalidInput(f"offset {m} removes the basepoint")
        idx = -np.ones(g.shape, dtype=int)
        idx[inside] = np.arange(int(inside.sum()))
        inv = 1.0 / g.h**2
        J, I = np.nonzero(inside)
        me = idx[J, I]
        rows, cols, vv = [me], [me], [np.full(me.size, 4 * inv)]
        rhs = np.zeros(me.size)
        data = np.where(ring, Zv * solution.u, 0.0)
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = idx[J + dj, I + di]
            ok = nb >= 0
            rows.append(me[ok])
            cols.append(nb[ok])
            vv.append(np.full(int(ok.sum()), -inv))
            rhs[me[~ok]] += inv * data[(J + dj)[~ok], (I + di)[~ok]]
        A = sp.csc_matrix((np.concatenate(vv), (np.concatenate(rows), np.concatenate(cols))), shape=(me.size, me.size))
        from scipy.sparse.linalg import spsolve

        ext = spsolve(A, rhs)
        vals.append(float(ext[idx[g.x0_node]]))
    vals = np.array(vals)
    lim = aitken(*vals[-3:]) if vals.size >= 3 else float(vals[-1])
    levels = tuple(float(m * g.h) for m in offsets)
    return TraceSequence("polygon", levels, vals, lim, is_diverging(vals))


def point_bump(y, radius):
    from .trace import quadratic_bump

    z = quadratic_bump(radius)
    return lambda X, Y: z(np.hypot(X - y[0], Y - y[1]))


def polygon_keller_osserman(solution: PolygonSolution, min_depth=2):
    """``max u dist^{2/(q-1)}`` over interior nodes at least ``min_depth`` nodes from the boundary."""
    g = solution.grid
    mask = offset_levels(g) >= min_depth
    pts = np.stack([g.X[mask], g.Y[mask]], axis=1)
    d = g.polygon.distance_to_boundary(pts)
    vals = np.abs(solution.u[mask]) * d ** (2.0 / (solution.q - 1.0))
    from .cone import keller_osserman_constant

    c = keller_osserman_constant(2, solution.q)
    m = float(vals.max()) if vals.size else 0.0
    return {"max_value": m, "ceiling": c, "holds": m <= c}


# ---------------------------------------------------------------------------
# report


@dataclass
class CriticalityReport:
    features: list
    q_star: dict
    masses: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "features": [f.as_dict() for f in self.features],
            "q_star": {k: v.as_dict() for k, v in self.q_star.items()},
            "admissibility": self.masses,
        }


def criticality_report(polygon, sets: Optional[dict] = None, mass_requests: Sequence = (), levels=(16, 64, 256), oracle=True):
    """Features, ``q*`` for named boundary sets and optional admissibility masses.

    ``sets`` maps names to :class:`BoundarySet`; the whole boundary and each
    corner are always included.
    """
    feats = feature_exponents(polygon)
    named = {"boundary": BoundarySet.whole_boundary(polygon)}
    for i in range(polygon.n):
        named[f"corner_{i}"] = BoundarySet(corners=(i,))
    named.update(sets or {})
    qs = {name: q_star_detail(polygon, E, oracle=oracle) for name, E in named.items()}
    for name, E in named.items():
        bound = min(feature_at(polygon, p).q_c for p in _feature_points(polygon, E))
        if qs[name].value > bound + 1e-12:
            raise AssertionError(f"q* of {name} exceeds the smallest feature exponent")
    masses = {}
    for y, q in mass_requests:
        masses[f"({y[0]:g},{y[1]:g}) q={q:g}"] = admissibility_mass(polygon, y, q, levels)
    return CriticalityReport(feats, qs, masses)


def _feature_points(polygon, E):
    pts = [tuple(polygon.vertex(c)) for c in E.corners]
    for i, s0, s1 in E.edges:
        a, _ = polygon.edge(i)
        d = np.array(polygon.direction(i))
        for s in np.linspace(s0, s1, 5):
            pts.append(tuple(a + s * d))
    return pts
