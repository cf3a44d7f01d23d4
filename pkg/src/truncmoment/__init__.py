"""Atomic solutions of truncated multidimensional moment problems via multiplication operators."""
from .gram import MomentSequence, build_gram, check_kernel_inclusion, check_positivity
from .measure import generate_problem, integrate_monomial, moments_of, verify_solution
from .multi_index import (AdmissibleIndexSet, is_admissible, omega_sets, rectangle_set, shift,
                          simplex_set, sumset)
from .solver import SolverConfig, SolverReport, Status, solve
from .spectral import AtomicMeasure

__all__ = [
    "AdmissibleIndexSet", "AtomicMeasure", "MomentSequence", "SolverConfig", "SolverReport", "Status",
    "build_gram", "check_kernel_inclusion", "check_positivity", "generate_problem", "integrate_monomial",
    "is_admissible", "moments_of", "omega_sets", "rectangle_set", "shift", "simplex_set", "solve",
    "sumset", "verify_solution",
]
