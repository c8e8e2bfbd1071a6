"""Boundary voltage laws: constant feedforward and two PI-like shaping laws.

Both shaping controllers measure only the tip velocity f_b = e_p(ell) and
carry one scalar integrator xi:

* output shaping   xi_dot = f_b (integrated tip velocity, i.e. tip
  displacement); the voltage combines integral and proportional action on
  the measured output.
* input shaping    xi_dot = U - U* (integrated voltage error); the law is a
  stable scalar filter that steers the voltage itself to its steady value.

Each family exists in two gain parameterizations.  The "raw" form states
gains as they enter the voltage law and requires Kp, Ki > 0 (the certified
regime); the "bar" form states gains as they enter the boundary force
U_bar = -gamma*U and admits zero entries for sweep studies.  For output
shaping the two coincide; for input shaping they are related by
Kp_bar = gamma**2/Kp and Ki_bar = gamma*Ki/Kp.

When the reference action is enabled the feedforward consists of every
constant the desired operating point determines: the steady boundary force
U_bar* and, for output shaping, the anchor of the displacement integrator at
the tip displacement strain_target*ell that the commanded strain implies.
Without the anchor the integral action would re-equilibrate the loop at the
commanded strain scaled by C/(C + Ki), never at the commanded value itself.
With the reference action disabled the laws are pure feedback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import BeamParameters, Equilibrium

FAMILIES = ("constant", "output_shaping", "input_shaping")
GAIN_FORMS = ("raw", "bar")


@dataclass(frozen=True)
class ControllerSpec:
    """Controller family, gains, gain parameterization and reference toggle."""

    family: str
    Kp: float = 0.0
    Ki: float = 0.0
    gain_form: str = "bar"
    reference_on: bool = True
    u_constant: float | None = None   # constant family only; None = steady-state voltage

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown controller family {self.family!r}")
        if self.gain_form not in GAIN_FORMS:
            raise ValueError(f"unknown gain form {self.gain_form!r}")
        for name in ("Kp", "Ki"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.family == "constant":
            if self.u_constant is not None and not math.isfinite(self.u_constant):
                raise ValueError("u_constant must be finite or None")
            return
        if self.u_constant is not None:
            raise ValueError("u_constant only applies to the constant family")
        if self.gain_form == "raw":
            if self.Kp <= 0 or self.Ki <= 0:
                raise ValueError("raw-form gains must be strictly positive "
                                 f"(got Kp={self.Kp}, Ki={self.Ki})")
        elif self.Kp < 0 or self.Ki < 0:
            raise ValueError("bar-form gains must be nonnegative")


@dataclass
class ControllerState:
    """Scalar integrator state, owned by the simulation loop; starts at zero."""

    xi: float = 0.0


def controller_output(spec: ControllerSpec, xi, f_b, params: BeamParameters,
                      eq: Equilibrium):
    """Applied voltage for integrator value xi and measured tip velocity f_b.

    Pure arithmetic in the inputs, so array arguments broadcast.
    """
    if spec.family == "constant":
        return spec.u_constant if spec.u_constant is not None else eq.u_star
    ref = 1.0 if spec.reference_on else 0.0
    if spec.family == "output_shaping":
        anchor = eq.strain_target * params.ell
        return ((spec.Ki * (xi - ref * anchor) + spec.Kp * f_b) / params.gamma
                + ref * eq.u_star)
    if spec.gain_form == "bar":
        u_bar = spec.Ki * xi - spec.Kp * f_b + ref * eq.u_bar_star
        return -u_bar / params.gamma
    return -(spec.Ki * xi - params.gamma * f_b) / spec.Kp + ref * eq.u_star


def controller_rhs(spec: ControllerSpec, xi, f_b, u, eq: Equilibrium):
    """Integrator derivative; ``u`` must be the output at the same instant."""
    if spec.family == "constant":
        return 0.0
    if spec.family == "output_shaping":
        return f_b - eq.ep_star
    return u - eq.u_star


def controller_affine(spec: ControllerSpec, params: BeamParameters,
                      eq: Equilibrium):
    """Coefficients (a_xi, a_fb, a0) with U = a_xi*xi + a_fb*f_b + a0.

    Stated directly from the control laws, independently of
    ``controller_output``, so dense closed-loop assembly provides a second
    route for the equivalence tests.
    """
    if spec.family == "constant":
        u = spec.u_constant if spec.u_constant is not None else eq.u_star
        return 0.0, 0.0, u
    ref = 1.0 if spec.reference_on else 0.0
    if spec.family == "output_shaping":
        a0 = ref * (eq.u_star - spec.Ki * eq.strain_target * params.ell / params.gamma)
        return spec.Ki / params.gamma, spec.Kp / params.gamma, a0
    if spec.gain_form == "bar":
        return -spec.Ki / params.gamma, spec.Kp / params.gamma, ref * eq.u_star
    return -spec.Ki / spec.Kp, params.gamma / spec.Kp, ref * eq.u_star


def raw_gains(spec: ControllerSpec, gamma: float):
    """(Kp, Ki) in raw form, or None when the bar gains have no raw equivalent."""
    if spec.family == "constant":
        return None
    if spec.gain_form == "raw" or spec.family == "output_shaping":
        return spec.Kp, spec.Ki
    if spec.Kp == 0:
        return None
    kp = gamma ** 2 / spec.Kp
    return kp, spec.Ki * kp / gamma


def shaped_storage_gain(spec: ControllerSpec, gamma: float):
    """Raw integral gain weighting the shaped-storage term, or None if undefined."""
    if spec.family == "constant":
        return 0.0
    if spec.family == "input_shaping" and spec.gain_form == "bar" and spec.Kp == 0:
        return 0.0 if spec.Ki == 0 else None
    return raw_gains(spec, gamma)[1]


def reparameterize(spec: ControllerSpec, gamma: float) -> ControllerSpec:
    """Same control law expressed in the other gain form."""
    if spec.family == "constant":
        raise ValueError("constant family has no alternative gain form")
    other = "bar" if spec.gain_form == "raw" else "raw"
    if spec.family == "output_shaping":
        return replace(spec, gain_form=other)
    if spec.gain_form == "raw":
        return replace(spec, gain_form="bar",
                       Kp=gamma ** 2 / spec.Kp, Ki=gamma * spec.Ki / spec.Kp)
    if spec.Kp == 0:
        raise ValueError("input-shaping bar form with Kp == 0 has no raw equivalent")
    kp = gamma ** 2 / spec.Kp
    return replace(spec, gain_form="raw", Kp=kp, Ki=spec.Ki * kp / gamma)
