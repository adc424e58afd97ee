"""Pseudo-transient ghost-fluid solver for the regularized nonlinear PBE."""

from .control import (
    Controller,
    ControllerConfig,
    ControllerState,
    error_norm,
    manual_update,
    pid_factor,
    should_stop,
)
from .driver import (
    ConvergenceResult,
    ConvergenceRow,
    EnergyTrace,
    Problem,
    RunConfig,
    TraceRow,
    build_problem,
    convergence_study,
    export_potential,
    initial_condition,
    kirkwood_config,
    reference_config,
    run,
    run_schedule,
    scaling_study,
)
from .errors import (
    AssemblyError,
    ConfigError,
    DivergenceError,
    DomainError,
    FormatError,
    GfmpbeError,
    InitializationError,
    NumericalError,
    ParseError,
    SingularityError,
)
from .gfm import JumpData, LineSystem, apply_operator, assemble_line, thomas_solve
from .grid import (
    Field,
    Grid,
    build_grid,
    read_field_binary,
    trilinear,
    write_field_binary,
    write_field_csv,
)
from .molecule import (
    Atom,
    AtomSet,
    PhysicalParams,
    debye_kappa_sq,
    dirichlet_boundary,
    green_gradient,
    green_potential,
    parse_atoms,
    solvation_energy,
)
from .stepping import (
    AxisOperator,
    SplitOperators,
    adi_step,
    build_split_operators,
    compute_jumps,
    lod_step,
    nonlinear_substep,
)
from .surface import (
    Crossing,
    InterfaceData,
    classify_sphere,
    classify_ses_grid,
    classify_union,
    export_interface,
    import_interface,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomSet",
    "AssemblyError",
    "AxisOperator",
    "ConfigError",
    "Controller",
    "ControllerConfig",
    "ControllerState",
    "ConvergenceResult",
    "ConvergenceRow",
    "Crossing",
    "DivergenceError",
    "DomainError",
    "EnergyTrace",
    "Field",
    "FormatError",
    "GfmpbeError",
    "Grid",
    "InitializationError",
    "InterfaceData",
    "JumpData",
    "LineSystem",
    "NumericalError",
    "ParseError",
    "PhysicalParams",
    "Problem",
    "RunConfig",
    "SingularityError",
    "SplitOperators",
    "TraceRow",
    "adi_step",
    "apply_operator",
    "assemble_line",
    "build_grid",
    "build_problem",
    "build_split_operators",
    "classify_ses_grid",
    "classify_sphere",
    "classify_union",
    "compute_jumps",
    "convergence_study",
    "debye_kappa_sq",
    "dirichlet_boundary",
    "error_norm",
    "export_interface",
    "export_potential",
    "green_gradient",
    "green_potential",
    "import_interface",
    "initial_condition",
    "kirkwood_config",
    "lod_step",
    "manual_update",
    "nonlinear_substep",
    "parse_atoms",
    "pid_factor",
    "read_field_binary",
    "reference_config",
    "run",
    "run_schedule",
    "scaling_study",
    "should_stop",
    "solvation_energy",
    "thomas_solve",
    "trilinear",
    "write_field_binary",
    "write_field_csv",
]
