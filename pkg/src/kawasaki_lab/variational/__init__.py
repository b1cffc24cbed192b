"""Variational formulas for finite-volume conductivities."""

from .canonical import (CanonicalProblem, clt_identity, clt_variance, ensemble_equivalence,
                        special_functions)
from .corrector import (R_of_F, corrector, density_free_corrector, dirichlet_functional, mu,
                        quadratic_c)
from .disorder import DisorderResult, quenched_conductivity
from .grand import (DualProblem, MasterQuantity, MasterQuantityReport, Matrices, NuResult,
                    NuStarResult, PrimalProblem, diffusion_matrices, master_J, solve_nu,
                    solve_nu_star)
from .inequalities import bias_check, regularity_suite, run_inequality_suite, theta, theta_tilde
from .solvers import CGResult, EdgeSystem, SolverError, conjugate_gradient

__all__ = [
    "CGResult", "CanonicalProblem", "DisorderResult", "DualProblem", "EdgeSystem", "MasterQuantity",
    "MasterQuantityReport", "Matrices", "NuResult", "NuStarResult", "PrimalProblem", "R_of_F",
    "SolverError", "bias_check", "clt_identity", "clt_variance", "conjugate_gradient", "corrector",
    "density_free_corrector", "diffusion_matrices", "dirichlet_functional",
    "ensemble_equivalence", "master_J", "mu", "quadratic_c", "quenched_conductivity", "regularity_suite",
    "run_inequality_suite", "solve_nu", "solve_nu_star", "special_functions", "theta",
    "theta_tilde",
]
