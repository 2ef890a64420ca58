"""Deterministic velocity-grid solver for the bosonic Boltzmann-Nordheim
equation on the torus, with the regularized approximation family, mild-form
fixed-point stepping along characteristics, and theory-bound diagnostics."""

from ._backend import BACKEND
from .collision import (CollisionIncrement, apply_R_alpha, collision_gain,
                        collision_loss_nu, collision_moment,
                        conservative_projection, filling_factor_anyon,
                        filling_factor_regularized)
from .equilibria import (EquilibriumParams, Moments, bose_einstein_field,
                         compute_moments, condensate_fraction,
                         critical_temperature, detailed_balance_residual,
                         fit_equilibrium)
from .geometry import KernelSpec, energy_cutoff_chi, kernel_eval, post_collision
from .grids import (DistributionField, SphereQuadrature, TorusGrid,
                    VelocityGrid, build_sphere_quadrature, integrate_velocity,
                    interpolate_velocity, lebedev26, transport_shift)
from .manifest import (ManifestError, RunManifest, emit_snapshot,
                       emit_timeseries, load_manifest, load_snapshot)
from .solver import (NumericalFailure, RunState, SolverConfig,
                     TheoryConstants, alpha_cauchy_study, fixed_point_map_C,
                     guaranteed_window, picard_advance, run, stability_study,
                     verify_density_bounds)

__version__ = "0.1.0"
