"""Per-feature comparison of q_c with q* on the L-shape.

q* is a liminf over boundary points near the feature, so it never exceeds
q_c. It equals q_c at convex corners and edge points. At the reentrant
corner the nearby open edges pull it down to 3 while q_c is 4. The script
prints q_c and the q* radius schedule for every feature.
"""

from conetrace.polygon import L_SHAPE, BoundarySet, feature_exponents, polygon_from_vertices, q_star_detail


def main():
    ell = polygon_from_vertices(L_SHAPE)
    for f in feature_exponents(ell):
        if f.kind == "edge_point":
            a, _ = ell.edge(f.index)
            s = float(((f.location[0] - a[0]) ** 2 + (f.location[1] - a[1]) ** 2) ** 0.5)
            E = BoundarySet(edges=((f.index, s, s),))
        else:
            E = BoundarySet(corners=(f.index,))
        det = q_star_detail(ell, E)
        sched = ", ".join(f"{v:.4f}" for v in det.per_radius)
        print(f"{f.kind:17s} {f.index}  q_c={f.q_c:g}  q*(r)=[{sched}]")


if __name__ == "__main__":
    main()
