"""Command-line front end.

Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 refusal mandated
by the theory. Errors are written to stderr as a JSON object. Every file
written gets a ``<path>.manifest.json`` sidecar with the command, the
parameters, the grid sizes and the wall time; the result files themselves
are deterministic.
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConetraceError, InvalidInput
from .io import dumps, write_csv, write_json


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("InvalidInput", message, 2)
        raise SystemExit(2)


def _emit_error(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")


class _Run:
    """Collects outputs and writes the manifest sidecars."""

    def __init__(self, args):
        self.args = args
        self.start = time.perf_counter()
        self.grids = {}
        self.outputs = []

    def params(self):
        skip = {"func", "name"}
        return {k: str(v) if isinstance(v, Path) else v for k, v in sorted(vars(self.args).items()) if k not in skip}

    def write_json(self, obj, path):
        write_json(obj, path)
        self.outputs.append(str(path))

    def write_csv(self, path, header, rows):
        write_csv(path, header, rows)
        self.outputs.append(str(path))

    def finish(self, command):
        wall = time.perf_counter() - self.start
        for out in self.outputs:
            manifest = {
                "command": command,
                "parameters": self.params(),
                "version": __version__,
                "grid": self.grids,
                "wall_time_s": wall,
                "outputs": self.outputs,
            }
            Path(out + ".manifest.json").write_text(dumps(manifest))


def _angle(args, value):
    return math.radians(value) if args.degrees else value


def _opening(args):
    from .spectrum import AxisymmetricOpening

    return AxisymmetricOpening(args.dim, _angle(args, args.half_angle))


def _print(obj):
    sys.stdout.write(dumps(obj))


# ---------------------------------------------------------------------------
# exponents and profile


def cmd_exponents(args, run):
    from .spectrum import classify, exponents, lambda_exact, lambda_Nq, lambda_numeric

    op = _opening(args)
    exact = lambda_exact(op)
    if exact is not None and args.resolution is None:
        lam, err, res = exact, 0.0, None
    else:
        pair = lambda_numeric(op, args.resolution or 4096)
        lam, err, res = pair.lambda_S, pair.estimated_error, pair.resolution
    ex = exponents(lam, op.dim)
    out = {
        "N": op.dim,
        "half_angle": op.half_angle,
        "lambda_S": lam,
        "lambda_error": err,
        "resolution": res,
        "source": "closed_form" if res is None else "numeric",
        "alpha": ex.alpha,
        "alpha_tilde": ex.alpha_tilde,
        "q_S": ex.q_S,
    }
    if args.q is not None:
        out["q"] = args.q
        out["lambda_Nq"] = lambda_Nq(op.dim, args.q)
        out["class"] = classify(op, args.q).kind
    run.grids["theta_cells"] = res
    if args.json:
        run.write_json(out, args.json)
    else:
        _print(out)


def cmd_profile(args, run):
    from .profile import solve_profile

    if args.resolution < 64:
        raise InvalidInput(f"--resolution must be at least 64, got {args.resolution}")
    prof = solve_profile(_opening(args), args.q, args.resolution)
    run.grids["theta_cells"] = args.resolution
    summary = {
        "q": args.q,
        "lambda_Nq": prof.lambda_Nq,
        "amplitude_max": prof.amplitude_max,
        "ceiling": prof.ceiling,
        "residual_sup": prof.residual_sup,
        "resolution": args.resolution,
    }
    if args.csv:
        run.write_csv(args.csv, ["theta", "omega"], zip(prof.theta, prof.samples))
    _print(summary)


# ---------------------------------------------------------------------------
# cones


def _cone_grid(args, op):
    from .cone import default_grid

    return default_grid(op, T=args.tmax, nt=args.nt, ntheta=args.ntheta)


def _grid_meta(grid):
    return {"T": grid.T, "nt": grid.t_axis.n_cells, "ntheta": grid.theta_axis.n_cells}


def cmd_cone_solve(args, run):
    from .cone import save_solution, solve_weak, verify_keller_osserman

    op = _opening(args)
    grid = _cone_grid(args, op)
    sol = solve_weak(op, args.q, args.mass, grid)
    run.grids.update(_grid_meta(grid))
    save_solution(sol, args.out)
    run.outputs.append(str(args.out))
    _print({"probe": sol.probe(), "newton": sol.newton, "keller_osserman": verify_keller_osserman(sol), **_grid_meta(grid)})


def cmd_cone_strong(args, run):
    from .cone import STRONG_NT, STRONG_T, save_solution, solve_strong, strong_grid
    from .core import TensorGrid2D

    op = _opening(args)
    if args.tmax is None and args.nt is None:
        grid = strong_grid(op, args.ntheta)
    else:
        grid = TensorGrid2D.build(args.tmax or STRONG_T, args.nt or STRONG_NT, op.theta_max, args.ntheta)
    sol = solve_strong(op, args.q, grid)
    run.grids.update(_grid_meta(grid))
    save_solution(sol, args.out)
    run.outputs.append(str(args.out))
    _print({"probe": sol.probe(), "diagnostics": sol.diagnostics, **_grid_meta(grid)})


def cmd_cone_classify(args, run):
    from .cone import classify_solution, load_solution

    sol = load_solution(args.input)
    verdict = classify_solution(sol)
    _print({"verdict": verdict.describe(), "kind": verdict.kind, "k": verdict.k, "detail": verdict.detail, **_grid_meta(sol.grid)})


def _bump(args, sol):
    from .trace import lateral_bump, vertex_bump

    if args.bump == "vertex":
        return vertex_bump(args.radius)
    if args.bump == "one":
        return lambda r, theta: np.ones_like(theta)
    if args.bump.startswith("lateral:"):
        return lateral_bump(float(args.bump.split(":", 1)[1]), sol.opening, args.radius)
    raise InvalidInput(f"unknown bump {args.bump!r}; use vertex, one or lateral:R")


def cmd_cone_trace(args, run):
    from .cone import load_solution
    from .trace import Exhaustion, dynamic_trace

    sol = load_solution(args.input)
    ex = Exhaustion.default(sol.grid.T, args.levels)
    seq = dynamic_trace(sol, _bump(args, sol), ex, label=args.bump)
    if args.csv:
        seq.to_csv(args.csv)
        run.outputs.append(str(args.csv))
    _print({**seq.as_dict(), **_grid_meta(sol.grid)})


def cmd_cone_removability(args, run):
    from .cone import dirac_approximation_limit

    op = _opening(args)
    grid = _cone_grid(args, op)
    eps = [float(e) for e in args.eps.split(",")]
    probes = dirac_approximation_limit(op, args.q, args.mass, eps, grid)
    run.grids.update(_grid_meta(grid))
    rows = [(p.epsilon, p.band_measure, p.density, p.probe) for p in probes]
    if args.csv:
        run.write_csv(args.csv, ["epsilon", "band_measure", "density", "probe"], rows)
    _print({"probes": probes, **_grid_meta(grid)})


# ---------------------------------------------------------------------------
# polygons


def _parse_tuple(text, n, what):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise InvalidInput(f"{what} must be {n} comma-separated numbers, got {text!r}") from exc
    if len(vals) != n:
        raise InvalidInput(f"{what} must be {n} comma-separated numbers, got {text!r}")
    return tuple(vals)


def _boundary_set(args):
    from .polygon import BoundarySet

    corners = tuple(int(c) for c in args.corners.split(",")) if args.corners else ()
    edges = []
    for e in args.edge or []:
        i, s0, s1 = _parse_tuple(e, 3, "--edge")
        edges.append((int(i), s0, s1))
    return BoundarySet(corners, tuple(edges))


def _datum(args):
    from .polygon import Datum

    diracs = tuple(_parse_tuple(d, 3, "--dirac") for d in args.dirac or [])
    dens = []
    for d in args.density or []:
        i, s0, s1, v = _parse_tuple(d, 4, "--density")
        dens.append((int(i), s0, s1, v))
    return Datum(diracs, tuple(dens))


def _polygon(args):
    from .polygon import RectilinearPolygon

    return RectilinearPolygon.from_json(args.geometry)


def cmd_polygon_report(args, run):
    from .polygon import criticality_report

    poly = _polygon(args)
    sets = {}
    if args.corners or args.edge:
        sets["requested"] = _boundary_set(args)
        sets["requested"].validate(poly)
    masses = []
    for m in args.mass or []:
        x, y, q = _parse_tuple(m, 3, "--mass")
        masses.append(((x, y), q))
    rep = criticality_report(poly, sets, masses)
    out = rep.as_dict()
    if args.out:
        run.write_json(out, args.out)
    else:
        _print(out)


def _save_polygon(run, sol, path, extra=None):
    run.grids.update({"n": sol.grid.n, "h": sol.grid.h, "shape": list(sol.grid.shape)})
    doc = sol.as_dict()
    if extra:
        doc["report"] = extra
    run.write_json(doc, path)
    summary = {"probe": sol.probe(), "x0": list(sol.grid.x0), "n": sol.grid.n, "newton": sol.newton}
    if extra:
        summary["report"] = extra
    _print(summary)


def cmd_polygon_solve(args, run):
    from .polygon import solve_measure_bvp

    sol = solve_measure_bvp(_polygon(args), args.q, _datum(args), n=args.n)
    _save_polygon(run, sol, args.out)


def cmd_polygon_maximal(args, run):
    from .polygon import maximal_solution

    sched = None if args.M is None else [args.M]
    sol = maximal_solution(_polygon(args), args.q, _boundary_set(args), M_schedule=sched, n=args.n)
    _save_polygon(run, sol, args.out, {"M": sol.meta["M"]})


def cmd_polygon_sandwich(args, run):
    from .polygon import sandwich_check

    rep, (u, _, _) = sandwich_check(_polygon(args), args.q, _datum(args), _boundary_set(args), n=args.n, M=args.M)
    _save_polygon(run, u, args.out, rep)


# ---------------------------------------------------------------------------
# parser


def _add_opening(p, q_required=True):
    p.add_argument("--dim", type=int, required=True, help="space dimension N >= 2")
    p.add_argument("--half-angle", type=float, required=True, help="opening angle (full arc when N = 2), radians")
    p.add_argument("--degrees", action="store_true", help="read angles in degrees")
    p.add_argument("--q", type=float, required=q_required)


def _add_cone_grid(p, T=12.0, nt=600):
    p.add_argument("--tmax", type=float, default=T, help="truncation depth T = -ln r_min")
    p.add_argument("--nt", type=int, default=nt)
    p.add_argument("--ntheta", type=int, default=96)


def build_parser():
    ap = _Parser(prog="conetrace", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"conetrace {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exponents", help="eigenvalue and critical exponents of a cap")
    _add_opening(p, q_required=False)
    p.add_argument("--resolution", type=int, default=None, help="force a numeric eigenvalue on this many cells")
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_exponents, name="exponents")

    p = sub.add_parser("profile", help="strong-singularity angular profile")
    _add_opening(p)
    p.add_argument("--resolution", type=int, default=1024)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_profile, name="profile")

    cone = sub.add_parser("cone", help="vertex singularities on cones")
    csub = cone.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = csub.add_parser("solve", help="solution with vertex datum k delta")
    _add_opening(p)
    p.add_argument("--mass", type=float, required=True)
    _add_cone_grid(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_cone_solve, name="cone solve")
    p = csub.add_parser("strong", help="large-mass limit")
    _add_opening(p)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--nt", type=int, default=None)
    p.add_argument("--ntheta", type=int, default=96)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_cone_strong, name="cone strong")
    p = csub.add_parser("classify", help="bounded / weak / strong verdict")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.set_defaults(func=cmd_cone_classify, name="cone classify")
    p = csub.add_parser("trace", help="dynamic trace along the default exhaustion")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--bump", default="vertex", help="vertex, one or lateral:R")
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_cone_trace, name="cone trace")
    p = csub.add_parser("removability", help="probe table for data concentrating at the vertex")
    _add_opening(p)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--eps", default="0.1,0.05,0.025,0.0125,0.00625")
    _add_cone_grid(p)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_cone_removability, name="cone removability")

    poly = sub.add_parser("polygon", help="rectilinear polygons")
    psub = poly.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func, hlp in (
        ("report", cmd_polygon_report, "feature exponents, q* and admissibility masses"),
        ("solve", cmd_polygon_solve, "measure-data boundary value problem"),
        ("maximal", cmd_polygon_maximal, "maximal solution U_F"),
        ("sandwich", cmd_polygon_sandwich, "max(V, U_F) <= u <= V + U_F check"),
    ):
        p = psub.add_parser(name, help=hlp)
        p.add_argument("--geometry", type=Path, required=True)
        p.add_argument("--corners", help="comma-separated vertex indices of the set F (or E)")
        p.add_argument("--edge", action="append", help="edge piece 'index,s0,s1' (repeatable)")
        p.add_argument("--n", type=int, default=128, help="cells across the longer side of the bounding box")
        if name == "report":
            p.add_argument("--mass", action="append", help="admissibility mass request 'x,y,q' (repeatable)")
            p.add_argument("--out", type=Path)
        else:
            p.add_argument("--q", type=float, required=True)
            p.add_argument("--dirac", action="append", help="Dirac 'x,y,k' (repeatable)")
            p.add_argument("--density", action="append", help="density 'edge,s0,s1,value' (repeatable)")
            p.add_argument("--M", type=float, default=None, help="blow-up boundary value (default: grid level)")
            p.add_argument("--out", type=Path, required=True)
        p.set_defaults(func=func, name=f"polygon {name}")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    run = _Run(args)
    try:
        args.func(args, run)
    except ConetraceError as exc:
        _emit_error(type(exc).__name__, str(exc), exc.exit_code)
        return exc.exit_code
    run.finish(args.name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
