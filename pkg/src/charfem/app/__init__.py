"""Benchmark problems, study drivers, file output, and the CLI."""

from .problems import CavityProblem, ManufacturedSolution, example1_fields
from .studies import run_cavity, run_convergence_study

__all__ = [
    "CavityProblem",
    "ManufacturedSolution",
    "example1_fields",
    "run_cavity",
    "run_convergence_study",
]
