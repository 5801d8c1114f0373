"""Free-boundary size-structured population solver.

Typical use::

    from sizewave import parse_config, solve_boundary, ReferenceFrame, solve_global

    config = parse_config(open("run.json", "rb").read())
    traj = solve_boundary(config.spec)
    field, report = solve_global(ReferenceFrame(config.spec, traj))
"""

from .characteristics import CharCurve, DividingCurve, crossing_time, dividing_curve, exponent_integral, trace
from .conditions import ValidationReport, estimate_M, validate_conditions
from .config import RunConfig, load_config, parse_config
from .errors import (
    CapExceededError,
    ConfigError,
    DegenerateInflowError,
    DomainError,
    GridMismatchError,
    NonConvergenceError,
    NotInflowError,
    ParameterError,
    SizewaveError,
    StiffnessError,
)
from .field import Field
from .free_boundary import BoundaryTrajectory, eval_boundary, solve_boundary
from .io import emit_outputs
from .measures import FieldSlice, MeasureSeries, population_measure, renewal_value
from .model import Field1D, Field2D, MortalityField, ProblemSpec, eval_field, eval_field_derivative
from .monotone import IterationState, SeedParams, SolveReport, iterate, seed_bounds, solve_global, solve_slab
from .transform import ReferenceFrame, reaction_rate, to_physical, to_reference, transformed_velocity
from .verification import (
    ResidualSeries,
    compare_on_oracle_grid,
    comparison_check,
    mass_balance_residual,
    upwind_oracle,
    weak_residual,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
