"""Two-step implicit-explicit Peer methods: coefficients, stability regions,
extrapolation search, constant-step integration and PDE benchmarks."""

__version__ = "0.1.0"

from .integrator import (IntegrationError, NewtonError, PeerState, SolveStats, SplitSystem,
                         StarterError, StepFailure, imex_step, integrate, starting_values)
from .optimizer import objective, optimize_s2, real_stability_interval
from .pde_bench import (adsorption_desorption_problem, advection_reaction_problem,
                        convergence_study, grid_norm, reference_solution, schnakenberg_problem)
from .simplex import nelder_mead
from .stability import (StabilityPolygon, implicit_angle, spectral_radius, stability_matrix,
                        wedge_region)
from .svg import render_svg
from .tableau import (ImexTableau, TableauError, assemble_imex, bdf_to_peer, builtin,
                      consistency_report, error_constants, load_tableau, order_residuals,
                      resolve, save_tableau)
from .weno import weno5_derivative

__all__ = [
    "IntegrationError", "NewtonError", "PeerState", "SolveStats", "SplitSystem", "StarterError",
    "StepFailure", "imex_step", "integrate", "starting_values", "objective", "optimize_s2",
    "real_stability_interval", "adsorption_desorption_problem", "advection_reaction_problem",
    "convergence_study", "grid_norm", "reference_solution", "schnakenberg_problem",
    "nelder_mead", "StabilityPolygon", "implicit_angle", "spectral_radius", "stability_matrix",
    "wedge_region", "render_svg", "ImexTableau", "TableauError", "assemble_imex", "bdf_to_peer",
    "builtin", "consistency_report", "error_constants", "load_tableau", "order_residuals",
    "resolve", "save_tableau", "weno5_derivative",
]
