"""sigma_k Loewner-Nirenberg toolkit.

Boundary expansions with logarithmic terms over a truncated graded series
ring, radial solvers for balls and annuli (including the non-smooth corner
on annuli), and numerical verification of the barrier, corner-regularity,
and minimal-sphere obstruction facts that govern these solutions.
"""

from .errors import DegeneracyError, DiagnosticError, NumericalFailure
from .symfun import in_gamma, n_k, sigma, sigma_grad, tangential_trace
from .series import (GradedSeries, add, exp_series, extract_coeff,
                     geometric_expand, mul)
from .expansion import (BoundaryData, ExpansionTable, G_series, ball_oracle,
                        evaluate_expansion, expand, neg_d2_S, solve_order,
                        table_from_json, table_to_json)
from .geometry import (Annulus, Ball, BarrierSpec, MinimalSphereResult,
                       barrier_check, barrier_report_to_json, dist,
                       mean_curvature_conformal, minimal_sphere,
                       obstruction_residual, radial_G_pointwise,
                       sphere_area_g, sphere_report, sphere_report_to_csv,
                       unit_sphere_area)
from .radial import (RadialProblem, RadialSolution, corner_metrics,
                     corner_report_json, exact_ball, kelvin_reflect,
                     lambda_radial, ode_rhs, shoot, sigma_k_radial,
                     solution_to_csv, solve_annulus, xi_ode_residual)

__version__ = "0.1.0"

__all__ = [
    "DegeneracyError", "DiagnosticError", "NumericalFailure",
    "sigma", "n_k", "sigma_grad", "in_gamma", "tangential_trace",
    "GradedSeries", "add", "mul", "exp_series", "geometric_expand",
    "extract_coeff",
    "BoundaryData", "ExpansionTable", "neg_d2_S", "G_series", "solve_order",
    "expand", "ball_oracle", "evaluate_expansion", "table_to_json",
    "table_from_json",
    "Ball", "Annulus", "BarrierSpec", "MinimalSphereResult", "dist",
    "unit_sphere_area", "mean_curvature_conformal", "sphere_area_g",
    "minimal_sphere", "obstruction_residual", "sphere_report",
    "radial_G_pointwise", "barrier_check", "sphere_report_to_csv",
    "barrier_report_to_json",
    "RadialProblem", "RadialSolution", "lambda_radial", "sigma_k_radial",
    "ode_rhs", "exact_ball", "shoot", "solve_annulus", "kelvin_reflect",
    "corner_metrics", "xi_ode_residual", "solution_to_csv",
    "corner_report_json",
    "__version__",
]
