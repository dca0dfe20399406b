"""Numerical toolkit for double-porosity homogenization: periodic Stokes
cell problems and their effective tensors, microscale DNS on perforated
domains, homogenized Darcy and two-velocity acoustic models, and the
convergence verification layer tying them together."""

from .errors import (PoroscaleError, ConfigError, ConvergenceError,
                     GeometryError)
from .geometry import (AlphaRule, CellSpec, IndicatorField, ScalingRegime,
                       build_cell, build_perforated_domain, build_phase_masks,
                       composite_porosity, fluid_percolates,
                       minimal_macro_resolution, porosity)
from .staggered import MacGrid, StaggeredField, scalar_laplacian
from .cell_problems import (EffectiveTensor, acoustic_tensor_crack,
                            acoustic_tensor_pore, filtration_tensor,
                            solve_filtration_cell, solve_neumann_cell)
from .dns import (DnsOperator, DnsState, DnsTrajectory, Forcing, dns_step,
                  initial_state, run_dns)
from .macro import (BoundaryCondition, HomogenizedCoefficients, MacroState,
                    MacroTrajectory, acoustic_cfl_limit, run_acoustics,
                    run_darcy)
from .analysis import (ConvergenceReport, cell_average, convergence_study,
                       poincare_constant, verify_estimates)

__version__ = "0.1.0"

__all__ = [
    "PoroscaleError", "ConfigError", "ConvergenceError", "GeometryError",
    "AlphaRule", "CellSpec", "IndicatorField", "ScalingRegime",
    "build_cell", "build_perforated_domain", "build_phase_masks",
    "composite_porosity", "fluid_percolates", "minimal_macro_resolution",
    "porosity", "MacGrid", "StaggeredField", "scalar_laplacian",
    "EffectiveTensor", "acoustic_tensor_crack", "acoustic_tensor_pore",
    "filtration_tensor", "solve_filtration_cell", "solve_neumann_cell",
    "DnsOperator", "DnsState", "DnsTrajectory", "Forcing", "dns_step",
    "initial_state", "run_dns", "BoundaryCondition",
    "HomogenizedCoefficients", "MacroState", "MacroTrajectory",
    "acoustic_cfl_limit", "run_acoustics", "run_darcy",
    "ConvergenceReport", "cell_average", "convergence_study",
    "poincare_constant", "verify_estimates",
]
