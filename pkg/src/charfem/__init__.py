"""Lagrange-Galerkin Navier-Stokes solver with exact composite-term integration."""

from . import analysis, fem, geometry, mesh, quadrature, scheme, system, transport
from .errors import (
    AdmissibilityError,
    CharfemError,
    ConfigError,
    DegenerateExactSolutionError,
    GeometryConsistencyError,
    InvalidArgumentError,
    OutOfDomainError,
    SingularGeometryError,
    SingularMapError,
    SolverFailureError,
    StepRejectedError,
)

__version__ = "0.1.0"

__all__ = [
    "analysis", "fem", "geometry", "mesh", "quadrature", "scheme", "system",
    "transport",
    "AdmissibilityError", "CharfemError", "ConfigError",
    "DegenerateExactSolutionError", "GeometryConsistencyError",
    "InvalidArgumentError", "OutOfDomainError", "SingularGeometryError",
    "SingularMapError", "SolverFailureError", "StepRejectedError",
]
