"""Relativistic Boltzmann solver and validation harness in Maxwellian-perturbation form."""

from .errors import (ConfigError, DegenerateCollisionError, DomainError, FitError, RelkinError,
                     SingularityError, UsageError)
from .kinematics import (energy, energy_and_velocity, maxwellian, post_collision, relative_quantities,
                         scattering_angle, weight)
from .cross_section import CrossSection, chi, sigma, validate_params
from .grid import (AngularQuadrature, DistributionField, MomentumGrid, SpatialGrid,
                   build_angular_quadrature, build_momentum_grid, interpolate, moment)
from .operators import OperatorWorkspace, build_workspace
from .solver import (ModeOperator, PicardReport, SolverConfig, TimeSeries, picard_iterate,
                     positivity_monitor, semigroup_decay, solve_homogeneous, solve_linear_mode,
                     solve_slab, step_homogeneous)
from .diagnostics import (AuditReport, ExponentTable, Fit, entropy_functionals, excess_quantities,
                          exponents, fit_decay, inequality_suite, norm, probe_decay)

__all__ = [name for name in dir() if not name.startswith("_")]
