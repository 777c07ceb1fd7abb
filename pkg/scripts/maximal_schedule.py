"""The boundary-value doubling schedule for maximal solutions does not settle.

Prints u(x0) for M = M0 2^j on a fixed grid next to the resolution-matched
blow-up level used by default.
"""

import argparse

from conetrace.polygon import L_SHAPE, BoundarySet, PolygonGrid, blowup_level, blowup_schedule, maximal_solution, polygon_from_vertices


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--q", type=float, default=1.5)
    ap.add_argument("--doublings", type=int, default=12)
    args = ap.parse_args()
    ell = polygon_from_vertices(L_SHAPE)
    grid = PolygonGrid(ell, args.n)
    F = BoundarySet(corners=(0,))
    prev = None
    for M in blowup_schedule(args.q, grid.h, args.doublings):
        p = maximal_solution(ell, args.q, F, M_schedule=[M], grid=grid).probe()
        ch = "" if prev is None else f"  change {abs(p - prev) / p:.3e}"
        print(f"M={M:.4e}  u(x0)={p:.8f}{ch}")
        prev = p
    M = blowup_level(args.q, grid.h)
    print(f"default level M={M:.4e}  u(x0)={maximal_solution(ell, args.q, F, grid=grid).probe():.8f}")


if __name__ == "__main__":
    main()
