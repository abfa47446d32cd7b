"""Escape of SGD from quadratic minima: simulation, exit-time Monte Carlo,
minimum-action quasi-potentials and sweep experiments."""

__version__ = "0.1.0"

from .action import (  # noqa: E402
    ActionReport,
    OptimizerSettings,
    approx_gap,
    hj_residual,
    min_action_path,
    quasi_potential,
    steepness,
)
from .dynamics import DynamicsConfig, DynamicsKind, Path, SimState, simulate, step  # noqa: E402
from .errors import ConfigError, DimensionError, EscapeError, LandscapeError, NumericalError  # noqa: E402
from .exit_mc import ExitRecord, ExitStats, first_exit, mean_exit_time, tube_probability  # noqa: E402
from .experiments import (  # noqa: E402
    RunSpec,
    SweepKind,
    SweepSpec,
    discretization_study,
    fit_line,
    proxy_reference,
    run_sweep,
)
from .landscape import (  # noqa: E402
    CovarianceModel,
    Domain,
    Landscape,
    covariance,
    covariance_sqrt,
    depth,
    gradient,
    loss_eval,
    sharpness,
    validate_domain,
)
from .rng import RngStream  # noqa: E402
