import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conetrace.errors import InadmissibleDatum, InvalidInput, InvalidPolygon, SupercriticalRefused
from conetrace.polygon import (
    L_SHAPE,
    UNIT_SQUARE,
    BoundarySet,
    Datum,
    PolygonGrid,
    admissibility_mass,
    compare_nodewise,
    criticality_report,
    dirac_kernel,
    feature_at,
    feature_exponents,
    inscribed_opening,
    inscribed_opening_bruteforce,
    maximal_solution,
    point_bump,
    polygon_from_vertices,
    polygon_keller_osserman,
    polygon_trace,
    q_star,
    q_star_detail,
    RectilinearPolygon,
    sandwich_check,
    solve_measure_bvp,
)


@pytest.fixture(scope="module")
def square():
    return polygon_from_vertices(UNIT_SQUARE)


@pytest.fixture(scope="module")
def ell():
    return polygon_from_vertices(L_SHAPE)


@pytest.fixture(scope="module")
def ell_grid(ell):
    return PolygonGrid(ell, 32)


# geometry


@pytest.mark.parametrize(
    "verts",
    [
        [(0, 0), (1, 0), (0, 1)],  # too few
        [(0, 0), (0, 1), (1, 1), (1, 0)],  # clockwise
        [(0, 0), (1, 0), (1, 1), (0.5, 1.5)],  # slanted edge
        [(0, 0), (2, 0), (2, 2), (1, 2), (1, -1), (0, -1)],  # self-intersecting
    ],
)
def test_invalid_polygons(verts):
    with pytest.raises(InvalidPolygon):
        polygon_from_vertices(verts)


def test_geometry_json_round_trip(tmp_path, ell):
    ell.to_json(tmp_path / "g.json")
    back = RectilinearPolygon.from_json(tmp_path / "g.json")
    np.testing.assert_array_equal(back.vertices, ell.vertices)


def test_features_of_the_ell(ell):
    feats = feature_exponents(ell)
    corners = [f for f in feats if f.kind != "edge_point"]
    assert [f.q_c for f in corners] == [2.0, 2.0, 2.0, 4.0, 2.0, 2.0]
    assert corners[3].kind == "reentrant_corner"
    assert corners[3].interior_angle == pytest.approx(3 * math.pi / 2)
    assert all(f.q_c == 3.0 for f in feats if f.kind == "edge_point")


def test_feature_constancy_along_edges(ell):
    for i in range(ell.n):
        a, b = ell.edge(i)
        for s in np.linspace(0.05, 0.95, 10):
            assert feature_at(ell, a + s * (b - a)).q_c == 3.0


def test_feature_of_interior_point_rejected(square):
    with pytest.raises(InvalidInput):
        feature_at(square, (0.5, 0.5))


# q*


def test_q_star_values(square, ell):
    assert q_star(square, BoundarySet.whole_boundary(square)) == pytest.approx(2.0)
    # the thickened corner picks up the adjacent open edges (q_c = 3)
    assert q_star(ell, BoundarySet(corners=(3,))) == pytest.approx(3.0)
    assert q_star(ell, BoundarySet(edges=((0, 0.5, 1.5),))) == pytest.approx(3.0)


def test_q_star_monotone_under_inclusion(ell):
    small = BoundarySet(edges=((0, 0.5, 1.0),))
    big = BoundarySet(edges=((0, 0.25, 1.5),))
    whole = BoundarySet.whole_boundary(ell)
    assert q_star(ell, whole) <= q_star(ell, big) <= q_star(ell, small)


def test_q_star_thickening_law(ell):
    E = BoundarySet(corners=(3,))
    det = q_star_detail(ell, E)
    assert len(det.radii) == 4
    assert np.all(np.diff(det.per_radius) >= -1e-12)
    assert det.per_radius[-1] <= 4.0


def test_q_star_below_feature_exponents(ell):
    rep = criticality_report(ell, oracle=False)
    for name, qs in rep.q_star.items():
        if name.startswith("corner_"):
            i = int(name.split("_")[1])
            assert qs.value <= feature_at(ell, ell.vertex(i)).q_c + 1e-12


def test_q_star_of_empty_set(square):
    with pytest.raises(InvalidInput):
        q_star(square, BoundarySet())


@settings(max_examples=20, deadline=None)
@given(edge=st.integers(0, 5), s=st.floats(0.0, 1.0), r=st.floats(0.05, 0.4))
def test_inscribed_opening_against_sampling(ell, edge, s, r):
    a, b = ell.edge(edge)
    z = a + s * (b - a)
    exact = inscribed_opening(ell, z, r)
    brute = inscribed_opening_bruteforce(ell, z, r)
    assert abs(exact - brute) <= 2 * math.pi / 180 + 1e-9


# kernels and solutions


def test_kernel_normalization(ell_grid):
    K = dirac_kernel(ell_grid, (1.0, 0.0))
    assert K.values[ell_grid.x0_node] == pytest.approx(1.0)
    assert np.all(K.values[ell_grid.boundary] == 0)
    assert np.all(K.values[ell_grid.interior] > 0)


def test_rho_normalization(ell_grid):
    rho, lam = ell_grid.rho
    assert rho[ell_grid.x0_node] == pytest.approx(1.0)
    assert lam > 0 and np.all(rho[ell_grid.interior] > 0)


def test_zero_datum(ell, ell_grid):
    sol = solve_measure_bvp(ell, 1.5, Datum(), grid=ell_grid)
    assert not np.any(sol.u)


def test_empty_blowup_set(ell, ell_grid):
    assert not np.any(maximal_solution(ell, 1.5, BoundarySet(), grid=ell_grid).u)


def test_inadmissible_dirac(square):
    with pytest.raises(InadmissibleDatum):
        solve_measure_bvp(square, 2.5, Datum(diracs=((0.0, 0.0, 1.0),)), n=16)


def test_monotone_in_data(ell, ell_grid):
    a = solve_measure_bvp(ell, 1.5, Datum(diracs=((1.0, 0.0, 1.0),)), grid=ell_grid)
    b = solve_measure_bvp(ell, 1.5, Datum(diracs=((1.0, 0.0, 2.0),), densities=((5, 0.2, 1.4, 3.0),)), grid=ell_grid)
    assert compare_nodewise(a.u, b.u)
    assert np.all(a.u >= 0)


def test_subadditivity(ell, ell_grid):
    n1 = Datum(diracs=((1.0, 0.0, 1.0),))
    n2 = Datum(densities=((4, 0.2, 0.8, 2.0),))
    u1 = solve_measure_bvp(ell, 1.5, n1, grid=ell_grid).u
    u2 = solve_measure_bvp(ell, 1.5, n2, grid=ell_grid).u
    u12 = solve_measure_bvp(ell, 1.5, n1.plus(n2), grid=ell_grid).u
    assert np.all(u12 <= u1 + u2 + 1e-9)
    assert compare_nodewise(np.maximum(u1, u2), u12)


def test_sandwich_with_zero_measure_is_the_maximal_solution(ell, ell_grid):
    F = BoundarySet(edges=((0, 0.5, 1.0),))
    rep, (u, V, U) = sandwich_check(ell, 1.5, Datum(), F, grid=ell_grid)
    assert rep["holds"]
    assert not np.any(V.u)
    np.testing.assert_allclose(u.u, U.u, rtol=1e-10)


def test_sandwich_refused_above_q_star(ell, ell_grid):
    with pytest.raises(SupercriticalRefused):
        sandwich_check(ell, 2.0, Datum(), BoundarySet(corners=(0,)), grid=ell_grid)


def test_keller_osserman_on_polygon_solutions(ell, ell_grid):
    U = maximal_solution(ell, 1.5, BoundarySet.whole_boundary(ell), grid=ell_grid)
    assert polygon_keller_osserman(U)["holds"]
    v = solve_measure_bvp(ell, 1.5, Datum(diracs=((1.0, 0.0, 1.0),)), grid=ell_grid)
    assert polygon_keller_osserman(v)["holds"]


def test_polygon_trace_of_a_dirac(square):
    sol = solve_measure_bvp(square, 2.0, Datum(diracs=((0.5, 0.0, 1.0),)), n=64)
    seq = polygon_trace(sol, point_bump((0.5, 0.0), 0.25))
    assert seq.limit_estimate == pytest.approx(1.0, rel=0.05)
    assert np.all(np.diff(seq.values) > 0)


def test_polygon_trace_away_from_the_dirac(square):
    sol = solve_measure_bvp(square, 2.0, Datum(diracs=((0.5, 0.0, 1.0),)), n=64)
    seq = polygon_trace(sol, point_bump((0.5, 1.0), 0.25))
    assert abs(seq.values[-1]) <= 0.05


def test_reentrant_admissibility_trend(ell):
    res = admissibility_mass(ell, (1.0, 1.0), 3.5, levels=(16, 32, 64, 128))
    m = np.array(res["masses"])
    inc = np.diff(m)
    assert np.all(m > 0)
    # convergent but slow: increments shrink level over level
    assert np.all(inc[1:] < inc[:-1])


def test_subcritical_edge_mass_converges(square):
    res = admissibility_mass(square, (0.5, 0.0), 2.0, levels=(16, 32, 64))
    assert abs(res["ratio"] - 1.0) <= 0.1
