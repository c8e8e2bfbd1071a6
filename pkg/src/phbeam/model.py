"""Physical constants and steady state of the boundary-actuated beam.

The plant is a viscously damped piezoelectric cantilever in longitudinal
vibration: rho*w_tt = C*w_zz - b*w_t on (0, ell), clamped at z = 0, driven
through the free end where the applied voltage enters as a boundary force,
C*w_z(ell, t) = -gamma*U(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BeamParameters:
    """Validated constant coefficients of the beam model."""

    rho: float    # mass density per unit length
    ell: float    # beam length
    C: float      # stiffness (stress = C * strain)
    gamma: float  # piezoelectric coupling, voltage -> boundary force
    b: float      # viscous damping coefficient

    def __post_init__(self):
        for name in ("rho", "ell", "C", "gamma", "b"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.ell <= 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.gamma == 0:
            raise ValueError("gamma must be nonzero (the boundary actuation "
                             "inverts it to convert force to voltage)")
        if self.b < 0:
            raise ValueError(f"b must be nonnegative, got {self.b}")


@dataclass(frozen=True)
class Equilibrium:
    """Constant-strain operating point for a commanded tip strain.

    The only steady solution with zero velocity is a uniform stress field
    matched by the boundary force: e_q* = C*E, e_p* = 0, U* = -C*E/gamma.
    """

    eq_star: float        # steady stress effort, C * strain_target
    ep_star: float        # steady velocity effort, identically zero
    u_star: float         # steady applied voltage
    u_bar_star: float     # steady boundary force -gamma*U*, equals eq_star
    strain_target: float


def steady_state(params: BeamParameters, strain_target: float) -> Equilibrium:
    """Closed-form constant-strain equilibrium for the commanded strain."""
    eq_star = params.C * strain_target
    return Equilibrium(
        eq_star=eq_star,
        ep_star=0.0,
        u_star=-eq_star / params.gamma,
        u_bar_star=eq_star,
        strain_target=strain_target,
    )
