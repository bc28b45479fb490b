"""haptosim: finite-element simulation of a haptotaxis-driven invasion model.

Three coupled fields on an axis-aligned box with zero-flux boundaries --
cell density, extracellular-matrix density, and protease -- advanced by a
blended implicit one-step scheme, Q1 finite elements, and a relaxed
fixed-point decoupling of the three equations.
"""

from .fem import (
    assemble,
    assemble_haptotaxis,
    assemble_mass,
    assemble_product_load,
    assemble_stiffness,
    assemble_weighted_mass,
    element_haptotaxis,
    element_load_product,
    element_mass,
    element_stiffness,
    element_weighted_mass,
)
from .iocfg import RunConfig, parse_config, render_config, write_diagnostics_csv, write_vtk
from .linsolve import CsrMatrix, SolverFailure, solve, spmv
from .mesh import FeField, StructuredMesh, build_structured_mesh, interpolate
from .model import (
    InitialData,
    Parameters,
    SimState,
    corner_gaussian_initial_data,
    interpolate_initial_state,
    rescale_to_unit_chi_eps,
    w_diagnostic,
)
from .stepper import (
    BreakdownReport,
    FixedPointReport,
    NonconvergenceError,
    Operators,
    RunResult,
    StepRecord,
    fixed_point_advance,
    run,
    simulate,
    step_c,
    step_p,
    step_u,
)
from .verify import (
    element_matrix_crosscheck,
    ode_oracle,
    scaling_equivalence,
    temporal_order_study,
)

__version__ = "0.1.0"

__all__ = [
    "BreakdownReport",
    "CsrMatrix",
    "FeField",
    "FixedPointReport",
    "InitialData",
    "NonconvergenceError",
    "Operators",
    "Parameters",
    "RunConfig",
    "RunResult",
    "SimState",
    "SolverFailure",
    "StepRecord",
    "StructuredMesh",
    "assemble",
    "assemble_haptotaxis",
    "assemble_mass",
    "assemble_product_load",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "build_structured_mesh",
    "corner_gaussian_initial_data",
    "element_haptotaxis",
    "element_load_product",
    "element_mass",
    "element_matrix_crosscheck",
    "element_stiffness",
    "element_weighted_mass",
    "fixed_point_advance",
    "interpolate",
    "interpolate_initial_state",
    "ode_oracle",
    "parse_config",
    "render_config",
    "rescale_to_unit_chi_eps",
    "run",
    "scaling_equivalence",
    "simulate",
    "solve",
    "spmv",
    "step_c",
    "step_p",
    "step_u",
    "temporal_order_study",
    "w_diagnostic",
    "write_diagnostics_csv",
    "write_vtk",
]
