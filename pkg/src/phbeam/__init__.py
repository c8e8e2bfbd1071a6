"""Boundary passivity-based control of a viscously damped piezoelectric beam.

Simulation and analysis toolkit for a clamped elastic beam in longitudinal
vibration, actuated through its free end by a voltage, modeled as a
distributed port-Hamiltonian system on a staggered grid.  Includes two
PI-like boundary controllers acting on the tip velocity (output shaping and
input shaping), exact discrete power-balance diagnostics, passivity and
Lyapunov descent certificates, step-response metrics, gain sweeps, and a
small CLI.
"""

from .analysis import (ClosedLoopMatrix, ConvergenceRow, OrderReport,
                       SandwichReport, StepMetrics, SweepCell,
                       assemble_closed_loop, convergence_study,
                       passivity_certificate, random_sandwich, rk4_order_study,
                       sandwich_bounds, shaped_storage_monotone,
                       spectral_abscissa, step_metrics, sweep,
                       trajectory_sandwich)
from .control import (ControllerSpec, ControllerState, controller_affine,
                      controller_output, controller_rhs, raw_gains,
                      reparameterize, shaped_storage_gain)
from .discretization import (BoundaryPort, DiscreteBeam, boundary_output,
                             boundary_port, build_grid, discrete_hamiltonian,
                             discrete_storage, efforts, hamiltonian_rate,
                             power_balance_residual, rhs, storage_quarter_form,
                             velocity_efforts)
from .model import BeamParameters, Equilibrium, steady_state
from .simulation import (NumericalInstabilityError, Scenario, SimulationResult,
                         affine_step_operators, coupled_rhs, equilibrium_state,
                         rk4_step, simulate)

__version__ = "0.1.0"

__all__ = [
    "BeamParameters", "Equilibrium", "steady_state",
    "DiscreteBeam", "BoundaryPort", "build_grid", "efforts", "rhs",
    "boundary_output", "boundary_port", "discrete_hamiltonian",
    "velocity_efforts", "discrete_storage", "storage_quarter_form",
    "hamiltonian_rate", "power_balance_residual",
    "ControllerSpec", "ControllerState", "controller_output", "controller_rhs",
    "controller_affine", "raw_gains", "shaped_storage_gain", "reparameterize",
    "Scenario", "SimulationResult", "NumericalInstabilityError", "coupled_rhs",
    "rk4_step", "simulate", "affine_step_operators", "equilibrium_state",
    "StepMetrics", "step_metrics", "ClosedLoopMatrix", "assemble_closed_loop",
    "spectral_abscissa", "passivity_certificate", "shaped_storage_monotone",
    "SandwichReport", "sandwich_bounds", "trajectory_sandwich",
    "random_sandwich", "SweepCell", "sweep", "ConvergenceRow",
    "convergence_study", "OrderReport", "rk4_order_study",
]
