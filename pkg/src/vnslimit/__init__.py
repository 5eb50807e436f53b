"""Gravity-driven Vlasov-Navier-Stokes sprays on a half-space strip and their
high-friction limit: particle-in-cell kinetics, MAC projection fluid solver,
energy and convergence diagnostics."""

from .characteristics import (EgcQuery, EgcResult, ExitTimes, PhasePoint, egc_bounds, egc_check,
                              egc_transfer_eps_bound, exit_time_free, free_fall_horizon, free_flow,
                              push_exponential, velocity_jacobian)
from .diagnostics import (ConvergenceReport, EnergyReport, MonitorReport, convergence_report,
                          decay_fit, delta_star, energy_report, hminus1_norm, monitor_report)
from .fluid import FluidState, LimitState, limit_step, ns_step, stokes_solve
from .grid import (DomainError, Grid, ScalarField, StripDomain, VectorField, discrete_div,
                   discrete_grad, interpolate)
from .kinetic import (InitialKineticSpec, KineticMoments, ParticleEnsemble, advance_particles,
                      deposit, sample_initial)
from .scenario import ScenarioConfig

__version__ = "0.1.0"
