"""Decay of the concentrating-data probe above the critical exponent.

For q > q_S the probe u_eps(x0) tends to 0 as the data concentrate at the
vertex, but only algebraically. The script fits the slope of log(probe)
against log(eps) and compares it with alpha_S - 2/(q-1).
"""

import argparse
import math

import numpy as np

from conetrace.cone import default_grid, dirac_approximation_limit
from conetrace.spectrum import AxisymmetricOpening, opening_exponents


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=2.5)
    ap.add_argument("--mmax", type=int, default=10, help="smallest eps is 2^-mmax")
    ap.add_argument("--T", type=float, default=14.0)
    args = ap.parse_args()
    op = AxisymmetricOpening(3, math.pi / 2)
    grid = default_grid(op, T=args.T, nt=int(50 * args.T))
    eps = [2.0**-m for m in range(3, args.mmax + 1)]
    probes = dirac_approximation_limit(op, args.q, 1.0, eps, grid)
    for p in probes:
        print(f"eps={p.epsilon:.3e}  probe={p.probe:.6e}")
    x = np.log([p.epsilon for p in probes[-4:]])
    y = np.log([p.probe for p in probes[-4:]])
    slope = np.polyfit(x, y, 1)[0]
    e = opening_exponents(op)
    print(f"fitted slope {slope:.3f}; predicted alpha - 2/(q-1) = {e.alpha - 2 / (args.q - 1):.3f}")


if __name__ == "__main__":
    main()
