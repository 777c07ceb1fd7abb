"""Boundary traces of ``-Delta u + |u|^{q-1} u = 0`` on cones and rectilinear polygons.

Modules
-------
core       banded operators, linear solvers, damped Newton
spectrum   first Dirichlet eigenvalue of spherical caps and critical exponents
profile    positive solution of the nonlinear spherical problem
cone       vertex singularities on truncated cones (log-cylinder solver)
trace      dynamic boundary traces on exhaustions
polygon    criticality and measure data on rectilinear polygons
cli        command-line front end
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConetraceError,
    InadmissibleDatum,
    InvalidInput,
    InvalidPolygon,
    NoConvergence,
    NumericalFailure,
    RegimeRefusal,
    ScheduleExhausted,
    SupercriticalNoSolution,
    SupercriticalRefused,
)
from .spectrum import AxisymmetricOpening, classify, exponents, lambda_Nq, lambda_exact, lambda_numeric  # noqa: F401
