"""Step metrics, dense closed-loop assembly, spectral and Lyapunov checks.

The dense assembly writes the closed-loop system matrix block by block from
the stencil and controller coefficients, independently of ``coupled_rhs``;
agreement of the two routes is one of the package's certificates.  The
remaining tools quantify step responses, verify the velocity-storage
passivity inequality and the shaped-storage descent along recorded runs,
evaluate the two-sided Lyapunov sandwich bounds, and drive gain sweeps and
mesh refinement studies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .control import controller_affine, controller_rhs, raw_gains
from .discretization import momentum_rate, strain_rate
from .model import BeamParameters
from .simulation import (NumericalInstabilityError, Scenario, SimulationResult,
                         equilibrium_state, simulate)

_EIG_SIZE_LIMIT = 513   # dense eigensolve budget: N <= 256


@dataclass(frozen=True)
class StepMetrics:
    """Step-response quality figures for a strain series against its target.

    Undefined quantities (no crossing, zero target, not settled) are NaN;
    ``settled`` records whether the series ends inside the +/-2% band.
    """

    rise_time_10_90: float
    overshoot_pct: float
    settling_time_2pct: float
    steady_state_error_pct: float
    vibration_index: int
    settled: bool

    def as_dict(self) -> dict:
        return {
            "rise_time_10_90": self.rise_time_10_90,
            "overshoot_pct": self.overshoot_pct,
            "settling_time_2pct": self.settling_time_2pct,
            "steady_state_error_pct": self.steady_state_error_pct,
            "vibration_index": self.vibration_index,
            "settled": self.settled,
        }


def step_metrics(times: np.ndarray, series: np.ndarray, target: float) -> StepMetrics:
    """Rise (10-90% of target), overshoot, 2%-band settling, final error and
    zero-crossing vibration count on a uniformly sampled series."""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")

    residual = series - target
    nonzero = residual[residual != 0.0]
    if nonzero.size:
        signs = np.sign(nonzero)
        crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    else:
        crossings = 0
    vibration = max(0, crossings - 1)

    if target == 0.0:
        return StepMetrics(math.nan, math.nan, math.nan, math.nan, vibration, False)

    y = series / target
    rise = math.nan
    reached10 = np.nonzero(y >= 0.1)[0]
    reached90 = np.nonzero(y >= 0.9)[0]
    if reached10.size and reached90.size:
        rise = float(times[reached90[0]] - times[reached10[0]])

    overshoot = max(0.0, float(y.max()) - 1.0) * 100.0

    outside = np.abs(residual) > 0.02 * abs(target)
    if not outside.any():
        settling, settled = 0.0, True
    elif outside[-1]:
        settling, settled = math.nan, False
    else:
        settling, settled = float(times[np.max(np.nonzero(outside)[0]) + 1]), True

    sse = float(abs(series[-1] - target) / abs(target) * 100.0)
    return StepMetrics(rise, overshoot, settling, sse, vibration, settled)


@dataclass
class ClosedLoopMatrix:
    """Dense affine closed loop dx/dt = A x + c with state component labels."""

    A: np.ndarray
    c: np.ndarray
    labels: list


def assemble_closed_loop(scenario: Scenario) -> ClosedLoopMatrix:
    """Explicit dense assembly of the coupled plant/controller dynamics."""
    N = scenario.N
    p = scenario.params
    h = scenario.h
    n = 2 * N + 1
    A = np.zeros((n, n))
    c = np.zeros(n)

    # strain cells: d(alpha_q)_i = (e_p_i - e_p_{i-1}) / h, clamped left end
    for i in range(N):
        A[i, N + i] += 1.0 / (p.rho * h)
        if i >= 1:
            A[i, N + i - 1] -= 1.0 / (p.rho * h)
    # interior momentum nodes: d(alpha_p)_i = (e_q_{i+1} - e_q_i)/h - b e_p_i
    for i in range(N - 1):
        A[N + i, i + 1] += p.C / h
        A[N + i, i] -= p.C / h
        A[N + i, N + i] -= p.b / p.rho
    # actuated node: d(alpha_p)_N = (e_b - e_q_N)/h - b e_p_N, e_b = -gamma*U
    a_xi, a_fb, a0 = controller_affine(scenario.controller, p, scenario.equilibrium())
    A[2 * N - 1, N - 1] -= p.C / h
    A[2 * N - 1, 2 * N - 1] -= p.b / p.rho
    A[2 * N - 1, 2 * N] += -p.gamma * a_xi / h
    A[2 * N - 1, 2 * N - 1] += -p.gamma * a_fb / (p.rho * h)
    c[2 * N - 1] = -p.gamma * a0 / h
    # integrator row
    family = scenario.controller.family
    if family == "output_shaping":
        A[2 * N, 2 * N - 1] = 1.0 / p.rho
    elif family == "input_shaping":
        A[2 * N, 2 * N] = a_xi
        A[2 * N, 2 * N - 1] = a_fb / p.rho
        c[2 * N] = a0 - scenario.equilibrium().u_star

    labels = ([f"alpha_q[{i + 1}]" for i in range(N)]
              + [f"alpha_p[{i + 1}]" for i in range(N)] + ["xi"])
    return ClosedLoopMatrix(A=A, c=c, labels=labels)


def spectral_abscissa(matrix) -> float:
    """Largest real part of the eigenvalues of a dense system matrix."""
    A = matrix.A if isinstance(matrix, ClosedLoopMatrix) else np.asarray(matrix)
    if A.shape[0] > _EIG_SIZE_LIMIT:
        raise ValueError(f"dense eigensolve limited to {_EIG_SIZE_LIMIT} states, "
                         f"got {A.shape[0]}")
    return float(np.linalg.eigvals(A).real.max())


def _cumtrapz(y: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum((y[1:] + y[:-1]) * (0.5 * dx), out=out[1:])
    return out


def _velocity_effort_fields(result: SimulationResult):
    """(ed_q, ed_p) at every recorded state, using the recorded boundary effort."""
    sc = result.scenario
    N, p, h = sc.N, sc.params, sc.h
    e_q = p.C * result.states[:, :N]
    e_p = result.states[:, N:2 * N] / p.rho
    ed_q = p.C * strain_rate(e_p, h)
    ed_p = momentum_rate(e_q, e_p, result.u_bar, h, p.b) / p.rho
    return ed_q, ed_p


@dataclass(frozen=True)
class CertificateReport:
    name: str
    passed: bool
    margin: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "margin": self.margin, "tolerance": self.tolerance,
                "detail": self.detail}


def passivity_certificate(result: SimulationResult,
                          tol_factor: float = 1e-9) -> CertificateReport:
    """Velocity-storage passivity along a recorded run.

    Checks S_h(t) - S_h(0) <= integral of (-gamma * dU/dt * ed_p(ell)) for
    every record, using the supply integral the simulation accumulated at
    step resolution (large proportional gains create boundary layers that a
    quadrature over the decimated records cannot resolve).
    """
    margins = result.supply_integral - (result.S_h - result.S_h[0])
    tol = tol_factor * float(result.S_h.max())
    worst = float(margins.min())
    return CertificateReport("velocity_storage_passivity", worst >= -tol, worst, tol,
                             f"min margin over {margins.size} records")


def shaped_storage_monotone(result: SimulationResult,
                            tol_factor: float = 1e-9) -> CertificateReport:
    """Pointwise descent of the shaped storage along a recorded run."""
    if not np.all(np.isfinite(result.S_d)):
        raise ValueError("shaped storage undefined for this controller "
                         "(no raw gain equivalent)")
    tol = tol_factor * float(result.S_d.max())
    worst = float(result.s_d_derivative.max())
    return CertificateReport("shaped_storage_descent", worst <= tol, worst, tol,
                             f"max dS_d/dt over {result.S_d.size} records")


@dataclass(frozen=True)
class SandwichReport:
    gamma1: float
    gamma2: float
    min_ratio: float
    max_ratio: float
    n_checked: int

    @property
    def passed(self) -> bool:
        slop = 1e-12
        return (self.min_ratio >= self.gamma1 - slop
                and self.max_ratio <= self.gamma2 + slop)

    def as_dict(self) -> dict:
        return {"gamma1": self.gamma1, "gamma2": self.gamma2,
                "min_ratio": self.min_ratio, "max_ratio": self.max_ratio,
                "n_checked": self.n_checked, "passed": self.passed}


def sandwich_bounds(params: BeamParameters, ki_raw: float):
    """Two-sided coefficients (gamma1, gamma2) of the Lyapunov sandwich."""
    entries = (1.0 / params.C, params.rho, 2.0 * ki_raw)
    return 0.25 * min(entries), 0.25 * max(entries)


def sandwich_forms(d_eq, d_ep, d_ed_q, d_ed_p, d_eb, params: BeamParameters,
                   ki_raw: float, h: float):
    """Shaped-storage increment N and squared deviation norm for perturbation
    fields (stress, velocity, their rates, boundary stress); vectorized over a
    leading batch axis."""
    d_eq = np.atleast_2d(d_eq)
    d_ep = np.atleast_2d(d_ep)
    d_ed_q = np.atleast_2d(d_ed_q)
    d_ed_p = np.atleast_2d(d_ed_p)
    d_eb = np.atleast_1d(d_eb)
    de_p = np.diff(d_ep, prepend=0.0, axis=1) / h
    de_q = np.diff(d_eq, append=d_eb[:, None], axis=1) / h
    t1 = d_ed_q ** 2
    t2 = d_ed_p ** 2
    t3 = de_p ** 2
    t4 = (de_q - params.b * d_ep) ** 2
    tip = d_ep[:, -1] ** 2
    n_val = (0.25 * h * (t1 / params.C + params.rho * t2 + params.C * t3
                         + t4 / params.rho).sum(axis=1)
             + 0.5 * ki_raw * tip)
    norm_sq = h * (t1 + t2 + t3 + t4).sum(axis=1) + tip
    return n_val, norm_sq


def trajectory_sandwich(result: SimulationResult) -> SandwichReport:
    """Sandwich bounds over every recorded state of an output-shaping run."""
    sc = result.scenario
    if sc.controller.family != "output_shaping":
        raise ValueError("trajectory sandwich applies to output shaping")
    gains = raw_gains(sc.controller, sc.params.gamma)
    if gains is None or gains[1] <= 0:
        raise ValueError("sandwich bounds need a positive raw integral gain")
    ki_raw = gains[1]
    p, N, h = sc.params, sc.N, sc.h
    eq = sc.equilibrium()
    d_eq = p.C * result.states[:, :N] - eq.eq_star
    d_ep = result.states[:, N:2 * N] / p.rho
    d_ed_q, d_ed_p = _velocity_effort_fields(result)
    d_eb = result.u_bar - eq.eq_star
    n_val, norm_sq = sandwich_forms(d_eq, d_ep, d_ed_q, d_ed_p, d_eb, p, ki_raw, h)
    keep = norm_sq > 1e-300
    ratios = n_val[keep] / norm_sq[keep]
    g1, g2 = sandwich_bounds(p, ki_raw)
    if ratios.size == 0:
        return SandwichReport(g1, g2, g1, g2, 0)
    return SandwichReport(g1, g2, float(ratios.min()), float(ratios.max()),
                          int(ratios.size))


def random_sandwich(params: BeamParameters, N: int, ki_raw: float,
                    n_samples: int = 1000, seed: int = 0) -> SandwichReport:
    """Sandwich bounds over independent Gaussian perturbation fields."""
    if ki_raw <= 0:
        raise ValueError("sandwich bounds need a positive integral gain")
    rng = np.random.default_rng(seed)
    h = params.ell / N
    d_eq, d_ep, d_ed_q, d_ed_p = rng.standard_normal((4, n_samples, N))
    d_eb = rng.standard_normal(n_samples)
    n_val, norm_sq = sandwich_forms(d_eq, d_ep, d_ed_q, d_ed_p, d_eb,
                                    params, ki_raw, h)
    ratios = n_val / norm_sq
    g1, g2 = sandwich_bounds(params, ki_raw)
    return SandwichReport(g1, g2, float(ratios.min()), float(ratios.max()),
                          n_samples)


@dataclass
class SweepCell:
    """One gain cell of a sweep: a run, its metrics, or a recorded failure."""

    name: str
    scenario: Scenario
    result: SimulationResult | None = None
    metrics: StepMetrics | None = None
    error: str | None = None


def sweep(cells) -> list:
    """Run named scenarios independently; failures are recorded per cell and
    the sweep continues."""
    out = []
    for name, scenario in cells:
        cell = SweepCell(name=name, scenario=scenario)
        try:
            cell.result = simulate(scenario)
            cell.metrics = step_metrics(cell.result.times, cell.result.strain_tip,
                                        scenario.strain_target)
        except NumericalInstabilityError as exc:
            cell.error = str(exc)
        out.append(cell)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    metrics: StepMetrics
    equilibrium_residual: float


def convergence_study(scenario: Scenario, n_list) -> list:
    """Metrics across mesh refinements plus the exactness of the operating
    point (max |A x* + c|, which is mesh independent for this scheme)."""
    n_list = list(n_list)
    if n_list != sorted(n_list):
        raise ValueError("N list must be ascending")
    rows = []
    for N in n_list:
        sc = replace(scenario, N=int(N))
        result = simulate(sc)
        metrics = step_metrics(result.times, result.strain_tip, sc.strain_target)
        loop = assemble_closed_loop(sc)
        try:
            x_eq = equilibrium_state(sc)
            residual = float(np.abs(loop.A @ x_eq + loop.c).max())
        except ValueError:
            residual = math.nan
        rows.append(ConvergenceRow(N=int(N), metrics=metrics,
                                   equilibrium_residual=residual))
    return rows


@dataclass(frozen=True)
class OrderReport:
    dts: tuple
    errors: tuple
    orders: tuple
    slope: float


def rk4_order_study(scenario: Scenario, dts=(4e-4, 2e-4, 1e-4),
                    dt_ref: float = 1.25e-5, t_end: float = 0.24,
                    record_dt: float = 0.02) -> OrderReport:
    """Observed self-convergence order of the staged integrator.

    Errors are the max deviation from a fine-step reference over a common
    record grid.  The horizon is kept short so truncation error stays well
    above accumulated roundoff; on settled long horizons fourth-order decay
    is unobservable in double precision.
    """
    def run(dt):
        every = round(record_dt / dt)
        if abs(every * dt - record_dt) > 1e-12:
            raise ValueError(f"record_dt={record_dt} is not a multiple of dt={dt}")
        sc = replace(scenario, dt=dt, t_end=t_end, record_every=every)
        return simulate(sc, stepper="staged").states

    reference = run(dt_ref)
    errors = tuple(float(np.abs(run(dt) - reference).max()) for dt in dts)
    orders = tuple(math.log2(errors[i] / errors[i + 1])
                   / math.log2(dts[i] / dts[i + 1])
                   for i in range(len(dts) - 1))
    slope = float(np.polyfit(np.log(np.asarray(dts)), np.log(np.asarray(errors)), 1)[0])
    return OrderReport(dts=tuple(dts), errors=errors, orders=orders, slope=slope)
