"""Bifurcation analysis for the stationary free boundary problem of nonnecrotic tumor growth.

Pipeline: radial equilibrium (``radial``) -> mode ODEs (``modes``) -> symbol
and bifurcation catalog (``spectrum``) -> boundary operator on perturbed
domains (``geometry``, ``field``) -> branches (``continuation``).
"""

from .model import (AdmissibilityError, DomainError, ModelParams, NutrientFn, ParameterError,
                    check_admissible, eval_f, eval_f_prime, validate_params)
from .radial import RadialEquilibrium, eval_v0, find_RA, integrate_radial_ivp
from .modes import ModeSolution, solve_mode, solve_mode_volterra, solve_modes, verify_estimates
from .spectrum import (BifurcationPoint, SymbolTable, bif_value, bif_values, build_table, catalog,
                       crandall_rabinowitz, find_k1, find_k1_stable, g_bullet, mu)
from .geometry import ShapeCoeffs, boundary_points, chart, curvature, eval_shape, normal_field
from .field import FieldGrid, FieldSolver, PhiTrace, assemble_phi, multiplier_check
from .continuation import (Branch, fit_asymptotics, newton_correct, non_bifurcation_probe,
                           trace_branch)

__version__ = "0.1.0"
