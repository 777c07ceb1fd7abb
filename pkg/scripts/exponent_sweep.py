"""Critical exponent q_S of axisymmetric cones across dimensions and openings.

Writes a CSV with columns N, theta0, lambda_S, alpha, alpha_tilde, q_S.
"""

import argparse
import math

import numpy as np

from conetrace.io import write_csv
from conetrace.spectrum import AxisymmetricOpening, best_lambda, exponents


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="exponent_sweep.csv")
    ap.add_argument("--angles", type=int, default=20)
    args = ap.parse_args()
    rows = []
    for N in range(2, 7):
        top = 2 * math.pi if N == 2 else math.pi
        for th in np.linspace(0.1, 0.95, args.angles) * top:
            lam, _ = best_lambda(AxisymmetricOpening(N, th), 2048)
            e = exponents(lam, N)
            rows.append((N, th, lam, e.alpha, e.alpha_tilde, e.q_S))
        half = exponents(N - 1.0, N).q_S
        print(f"N={N}: q_S ranges {rows[-args.angles][5]:.4f} .. {rows[-1][5]:.4f}; half-space {half:.6f}")
    write_csv(args.out, ["N", "theta0", "lambda_S", "alpha", "alpha_tilde", "q_S"], rows)


if __name__ == "__main__":
    main()
