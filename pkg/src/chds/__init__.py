"""chds: a mixed finite element solver for a coupled Cahn-Hilliard /
Darcy-Stokes system with an unconditionally stable convex-splitting time
discretization, plus the diagnostics and convergence harness that verify the
discrete energy law, conservation identities, and first-order Cauchy rates.
"""

from .config import Config, ConfigError, parse_config, serialize
from .diagnostics import (EnergyBreakdown, InvariantResiduals, Monitor,
                          energy, energy_law_residual, invariant_residuals)
from .fem import (FeFunction, FeSpace, ScalarField, VectorField,
                  assemble_matrix, assemble_vector, fe_norm, function_space,
                  interpolate, prolongate)
from .harness import (ConvergenceReport, cauchy_convergence, compute_rates,
                      write_convergence_csv, write_convergence_json)
from .linalg import (SingularMatrixError, SolveReport, SolverFailure,
                     solve_constrained_poisson, solve_indefinite, solve_spd)
from .mesh import Mesh, MeshError, build_crossed_mesh, uniform_refine
from .operators import (apply_Th, darcy_stokes_projection,
                        discrete_laplacian, ell_form, l2_projection,
                        neg_inner, neg_norm, ritz_projection, workspace_for)
from .scheme import (Params, RunSummary, SpaceBundle, State, Stepper,
                     build_spaces, initialize, run, solve_ch_block,
                     solve_flow_block, step)

__version__ = "0.1.0"

__all__ = [
    "Config", "ConfigError", "parse_config", "serialize",
    "EnergyBreakdown", "InvariantResiduals", "Monitor", "energy",
    "energy_law_residual", "invariant_residuals",
    "FeFunction", "FeSpace", "ScalarField", "VectorField", "assemble_matrix",
    "assemble_vector", "fe_norm", "function_space", "interpolate",
    "prolongate",
    "ConvergenceReport", "cauchy_convergence", "compute_rates",
    "write_convergence_csv", "write_convergence_json",
    "SingularMatrixError", "SolveReport", "SolverFailure",
    "solve_constrained_poisson", "solve_indefinite", "solve_spd",
    "Mesh", "MeshError", "build_crossed_mesh", "uniform_refine",
    "apply_Th", "darcy_stokes_projection", "discrete_laplacian", "ell_form",
    "l2_projection", "neg_inner", "neg_norm", "ritz_projection",
    "workspace_for",
    "Params", "RunSummary", "SpaceBundle", "State", "Stepper", "build_spaces",
    "initialize", "run", "solve_ch_block", "solve_flow_block", "step",
]
