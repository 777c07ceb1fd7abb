"""Exploratory run at q = q_c for a Dirac at a polygon feature.

At q = q_c the solver refuses the Dirac itself. The experiment instead
spreads mass 1 on a shrinking boundary piece next to the feature and
follows u(x0); the trend is reported without a verdict.
"""

import argparse

import numpy as np

from conetrace.polygon import UNIT_SQUARE, Datum, PolygonGrid, polygon_from_vertices, solve_measure_bvp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--q", type=float, default=3.0, help="3 is q_c of an open edge")
    args = ap.parse_args()
    sq = polygon_from_vertices(UNIT_SQUARE)
    grid = PolygonGrid(sq, args.n)
    for m in range(1, 7):
        w = 2.0**-m
        s0, s1 = 0.5 - w / 2, 0.5 + w / 2
        # density normalized to unit harmonic-measure mass at x0
        probe = np.zeros(grid.shape)
        for j, k in grid.boundary_param_nodes(0, s0, s1):
            probe[j, k] = 1.0
        mass = grid.harmonic_extension(probe)[grid.x0_node]
        sol = solve_measure_bvp(sq, args.q, Datum(densities=((0, s0, s1, 1.0 / mass),)), grid=grid)
        print(f"width={w:.4f}  u(x0)={sol.probe():.6f}")


if __name__ == "__main__":
    main()
