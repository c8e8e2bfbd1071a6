"""Acceptance suite: the quantitative exit criteria of the package.

 C1  Equilibrium reproduction: constant steady voltage drives the tip strain
     to the target within 0.1% by t=15 at N=16, dt=1e-4, in under 5 s.
 C2  Tuned gain pairs meet their requirement cases: case 1 overshoot <= 2%,
     case 2 overshoot <= 0.5%; both settle inside the 2% band before t_end
     with steady-state error <= 0.5%.
 C3  Output shaping without the reference action leaves >= 50% steady-state
     error for every gain cell of the three output-shaping study rows.
 C4  Exact discrete power balance on random states across meshes (1e-12).
 C5  Velocity-storage passivity certificate holds on every recorded run.
 C6  Shaped-storage descent: dS_d/dt <= 1e-9*max(S_d) pointwise for both
     controller families over a 3x3 grid of positive raw gains.
 C7  Two-sided Lyapunov sandwich bounds hold on 1000 random perturbations
     and on every recorded state of the output-shaping grid runs.
 C8  The stencil right-hand side matches the independent dense assembly to
     1e-13, and every studied gain set has spectral abscissa <= 1e-9.
 C9  Qualitative gain-sweep orderings: vibration non-increasing in KpA,
     overshoot non-decreasing in KiA, rise time non-increasing in KiB, and
     input shaping with KpB=0 and the reference on holds U == U* to 1e-12.
 C10 Observed RK4 self-convergence order >= 3.8 on the tuned case-1 gains.

Run with ``pytest -v -s tests/test_acceptance.py`` to see one line per
criterion.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from phbeam import (ControllerSpec, Scenario, assemble_closed_loop,
                    coupled_rhs, passivity_certificate, random_sandwich,
                    rk4_order_study, shaped_storage_monotone, simulate,
                    spectral_abscissa, step_metrics, trajectory_sandwich)
from phbeam.cli import parse_config
from phbeam.discretization import DiscreteBeam, power_balance_residual, efforts, \
    hamiltonian_rate

OS, IS = "output_shaping", "input_shaping"

GRID_KP = (0.5, 1.35, 2.0)
GRID_KI = (0.1, 0.2, 0.3)   # keeps 2*Ki below both 1/C and rho, where the
                            # stated sandwich constants are the exact extremes

CASE_BOUNDS = {"fig4-case1": 2.0, "fig4-case2": 0.5}


def announce(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def base_scenario(params):
    return Scenario(params=params, N=16, controller=ControllerSpec("constant"),
                    strain_target=1.0, dt=1e-4, t_end=15.0, record_every=100)


@pytest.fixture(scope="module")
def fig4_runs(base_scenario):
    runs = {}
    for preset in ("fig4-case1", "fig4-case2"):
        for name, spec in parse_config(preset=preset).cells:
            sc = replace(base_scenario, controller=spec)
            runs[(preset, name)] = simulate(sc)
    return runs


@pytest.fixture(scope="module")
def grid_runs(base_scenario):
    runs = {}
    for family in (OS, IS):
        for kp in GRID_KP:
            for ki in GRID_KI:
                spec = ControllerSpec(family, Kp=kp, Ki=ki, gain_form="raw")
                runs[(family, kp, ki)] = simulate(
                    replace(base_scenario, controller=spec))
    return runs


@pytest.fixture(scope="module")
def sweep_runs(base_scenario):
    runs = {}
    for preset in ("fig2a", "fig2b", "fig3a"):
        cells = []
        for name, spec in parse_config(preset=preset).cells:
            cells.append((name, simulate(replace(base_scenario, controller=spec))))
        runs[preset] = cells
    return runs


def test_c01_equilibrium_reproduction(base_scenario):
    result = simulate(base_scenario)
    sse_tip = abs(result.strain_tip[-1] - 1.0) * 100.0
    sse_boundary = abs(result.strain_boundary[-1] - 1.0) * 100.0
    runtime_ok = result.runtime_s <= 5.0
    plant = assemble_closed_loop(base_scenario).A[:32, :32]
    slow_mode = spectral_abscissa(plant)
    ok = sse_tip <= 0.1 and runtime_ok
    announce("C1", ok,
             f"last-cell strain error {sse_tip:.3f}% at t=15 (bound 0.1%), "
             f"boundary strain error {sse_boundary:.1e}%, runtime "
             f"{result.runtime_s:.2f}s (bound 5s); slowest open-loop mode "
             f"{slow_mode:.4f} leaves an O(0.1%) residual at this horizon")
    assert runtime_ok, f"runtime {result.runtime_s:.2f}s exceeds 5s"
    assert sse_tip <= 0.1, (
        f"last-cell strain error {sse_tip:.3f}% exceeds 0.1% at t=15: the "
        f"open loop is overdamped (slowest mode {slow_mode:.4f}) and its "
        f"transient has not decayed below 1e-3 by this horizon")


def test_c02_tuned_requirement_cases(fig4_runs):
    details = []
    ok = True
    for (preset, name), result in fig4_runs.items():
        m = step_metrics(result.times, result.strain_tip, 1.0)
        bound = CASE_BOUNDS[preset]
        good = (m.overshoot_pct <= bound and m.settled
                and m.settling_time_2pct < 15.0
                and m.steady_state_error_pct <= 0.5)
        ok = ok and good
        details.append(f"{preset}/{name}: ovs={m.overshoot_pct:.3f}%(<= {bound}) "
                       f"settle={m.settling_time_2pct:.2f} "
                       f"sse={m.steady_state_error_pct:.3f}%")
        assert m.overshoot_pct <= bound, details[-1]
        assert m.settled and m.settling_time_2pct < 15.0, details[-1]
        assert m.steady_state_error_pct <= 0.5, details[-1]
    announce("C2", ok, "; ".join(details))


def test_c03_missing_reference_error(base_scenario):
    worst = math.inf
    cells = []
    for preset in ("fig2a", "fig2b", "fig2c"):
        for name, spec in parse_config(preset=preset).cells:
            spec = replace(spec, reference_on=False)
            result = simulate(replace(base_scenario, controller=spec))
            sse = abs(result.strain_tip[-1] - 1.0) * 100.0
            worst = min(worst, sse)
            cells.append((f"{preset}/{name}", sse))
            assert sse >= 50.0, (preset, name, sse)
    announce("C3", True,
             f"{len(cells)} gain cells without reference action, smallest "
             f"steady-state error {worst:.1f}% (bound >= 50%); without the "
             f"reference feedforward the loop receives no setpoint "
             f"information, so the measured value is horizon-dependent and "
             f"approaches 100%")


def test_c04_power_balance_identity(params):
    rng = np.random.default_rng(42)
    worst = 0.0
    for N in (2, 16, 64):
        h = params.ell / N
        for _ in range(1000):
            beam = DiscreteBeam(N=N, h=h, alpha_q=rng.standard_normal(N),
                                alpha_p=rng.standard_normal(N))
            e_b = float(rng.standard_normal())
            res = power_balance_residual(beam, params, e_b)
            _, e_p = efforts(beam, params)
            scale = (1.0 + abs(e_b * e_p[-1])
                     + params.b * h * float(np.sum(e_p ** 2))
                     + abs(hamiltonian_rate(beam, params, e_b)))
            worst = max(worst, abs(res) / scale)
    ok = worst <= 1e-12
    announce("C4", ok, f"max relative power-balance residual {worst:.2e} over "
                       f"3000 random states, N in (2, 16, 64) (bound 1e-12)")
    assert ok


def test_c05_passivity_certificate(fig4_runs, grid_runs, sweep_runs):
    runs = list(fig4_runs.values()) + list(grid_runs.values())
    for cells in sweep_runs.values():
        runs += [result for _, result in cells]
    worst = math.inf
    for result in runs:
        report = passivity_certificate(result)
        worst = min(worst, report.margin + report.tolerance)
        assert report.passed, report
    ok = worst >= 0.0
    announce("C5", ok, f"velocity-storage certificate on {len(runs)} runs, "
                       f"worst margin+tol {worst:.2e} (must be >= 0)")
    assert ok


def test_c06_shaped_storage_descent(grid_runs):
    worst = -math.inf
    for (family, kp, ki), result in grid_runs.items():
        report = shaped_storage_monotone(result)
        worst = max(worst, report.margin)
        assert report.passed, (family, kp, ki, report)
    announce("C6", True,
             f"max dS_d/dt {worst:.2e} over {len(grid_runs)} runs "
             f"(3x3 positive raw gains, both families; bound 1e-9*max S_d)")


def test_c07_sandwich_bounds(params, grid_runs):
    rand = random_sandwich(params, N=16, ki_raw=0.3, n_samples=1000, seed=123)
    assert rand.passed, rand
    n_states = 0
    lo_margin = math.inf
    for (family, kp, ki), result in grid_runs.items():
        if family != OS:
            continue
        report = trajectory_sandwich(result)
        n_states += report.n_checked
        lo_margin = min(lo_margin, report.min_ratio - report.gamma1,
                        report.gamma2 - report.max_ratio)
        assert report.passed, (kp, ki, report)
    announce("C7", True,
             f"sandwich bounds hold on 1000 random perturbations "
             f"(ratios in [{rand.min_ratio:.4f}, {rand.max_ratio:.4f}] within "
             f"[{rand.gamma1:.4f}, {rand.gamma2:.4f}]) and {n_states} recorded "
             f"states (worst margin {lo_margin:.3e})")


def test_c08_oracle_equivalence_and_spectra(base_scenario):
    rng = np.random.default_rng(99)
    scenarios = [("open-loop", base_scenario)]
    for preset in ("fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c",
                   "fig4-case1", "fig4-case2"):
        for name, spec in parse_config(preset=preset).cells:
            scenarios.append((f"{preset}/{name}",
                              replace(base_scenario, controller=spec)))
    worst_mismatch = 0.0
    worst_abscissa = -math.inf
    for name, sc in scenarios:
        loop = assemble_closed_loop(sc)
        for _ in range(100):
            x = rng.standard_normal(33)
            worst_mismatch = max(worst_mismatch, float(np.abs(
                loop.A @ x + loop.c - coupled_rhs(x, sc)).max()))
        abscissa = spectral_abscissa(loop)
        worst_abscissa = max(worst_abscissa, abscissa)
        assert abscissa <= 1e-9, (name, abscissa)
    ok = worst_mismatch <= 1e-13
    announce("C8", ok,
             f"{len(scenarios)} gain sets: max |dense - stencil| "
             f"{worst_mismatch:.2e} (bound 1e-13) on 100 random states each; "
             f"max spectral abscissa {worst_abscissa:.2e} (bound 1e-9)")
    assert ok


def test_c09_sweep_orderings(base_scenario, sweep_runs):
    def metric_list(preset, field):
        out = []
        for _, result in sweep_runs[preset]:
            m = step_metrics(result.times, result.strain_tip, 1.0)
            out.append(getattr(m, field))
        return out

    vib = metric_list("fig2a", "vibration_index")
    assert all(b <= a for a, b in zip(vib, vib[1:])), vib

    ovs = metric_list("fig2b", "overshoot_pct")
    assert all(b >= a - 1e-9 for a, b in zip(ovs, ovs[1:])), ovs

    rise = [math.inf if math.isnan(r) else r
            for r in metric_list("fig3a", "rise_time_10_90")]
    assert all(b <= a + 1e-9 for a, b in zip(rise, rise[1:])), rise

    spec = ControllerSpec(IS, Kp=0.0, Ki=0.5, gain_form="bar")
    result = simulate(replace(base_scenario, controller=spec))
    u_dev = float(np.abs(result.u - (-7.5)).max())
    assert u_dev <= 1e-12, u_dev

    announce("C9", True,
             f"vibration index vs KpA {vib} non-increasing; overshoot vs KiA "
             f"{[round(o, 2) for o in ovs]} non-decreasing; rise time vs KiB "
             f"{[round(r, 2) for r in rise]} non-increasing; KpB=0 with "
             f"reference holds |U - U*| <= {u_dev:.1e}")


def test_c10_rk4_order(base_scenario):
    sc = replace(base_scenario,
                 controller=ControllerSpec(OS, Kp=1.35, Ki=0.5))
    started = time.perf_counter()
    report = rk4_order_study(sc, dts=(4e-4, 2e-4, 1e-4), dt_ref=1.25e-5)
    elapsed = time.perf_counter() - started
    ok = report.slope >= 3.8
    announce("C10", ok,
             f"errors {['%.2e' % e for e in report.errors]} for dt "
             f"{report.dts}, pairwise orders "
             f"{[round(o, 2) for o in report.orders]}, fitted order "
             f"{report.slope:.2f} (bound 3.8), {elapsed:.1f}s")
    assert ok, report
