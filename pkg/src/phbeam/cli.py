"""Command-line front end: configuration, presets, and the three subcommands.

``simulate`` runs the configured scenarios and writes one CSV per run plus a
combined metrics.json; ``sweep`` runs a gain study into one subdirectory per
cell plus a summary CSV; ``verify`` executes the numerical certificate
battery and writes verify.json.

Configuration is a flat JSON document whose keys mirror the scenario fields,
with a nested "controller" object.  Resolution precedence: built-in defaults,
then preset expansion, then the config file, then ``--set key=value``
overrides.  Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import analysis
from .control import ControllerSpec
from .discretization import DiscreteBeam, power_balance_residual, \
    discrete_storage, storage_quarter_form
from .model import BeamParameters
from .simulation import (NumericalInstabilityError, Scenario, SimulationResult,
                         coupled_rhs, equilibrium_state, simulate)

CSV_COLUMNS = ("t", "U", "U_bar", "f_b", "strain_tip", "strain_boundary",
               "H_d", "S_h", "S_d", "balance_residual", "dSd_dt")

DEFAULTS = {
    "rho": 1.0, "ell": 1.0, "C": 0.75, "gamma": 0.1, "b": 7.0,
    "N": 16, "dt": 1e-4, "t_end": 15.0, "record_every": 100,
    "strain_target": 1.0,
}

_CONTROLLER_KEYS = ("family", "Kp", "Ki", "gain_form", "reference_on", "u_constant")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _gain_sweep(prefix, family, fixed_kp, fixed_ki, vary, values, reference_on):
    cells = []
    for v in values:
        kp = v if vary == "Kp" else fixed_kp
        ki = v if vary == "Ki" else fixed_ki
        cells.append((f"{prefix}={v:g}",
                      ControllerSpec(family=family, Kp=kp, Ki=ki,
                                     gain_form="bar", reference_on=reference_on)))
    return cells


def _preset_cells(name):
    os_, is_ = "output_shaping", "input_shaping"
    if name == "paper-open-loop":
        return [("open-loop", ControllerSpec(family="constant"))]
    if name == "fig2a":
        return _gain_sweep("KpA", os_, 0.0, 0.0, "Kp", (0.0, 0.5, 2.0, 5.0), True)
    if name == "fig2b":
        return _gain_sweep("KiA", os_, 0.0, 0.0, "Ki", (0.0, 0.1, 0.3, 0.5), True)
    if name == "fig2c":
        return _gain_sweep("KpA", os_, 0.0, 0.3, "Kp", (0.0, 0.2, 0.5, 1.0, 2.5), True)
    if name == "fig3a":
        return _gain_sweep("KiB", is_, 0.0, 0.0, "Ki", (0.0, 0.2, 0.5, 1.0, 2.5), False)
    if name == "fig3b":
        return _gain_sweep("KpB", is_, 0.0, 0.5, "Kp", (0.0, 0.2, 0.5, 1.0, 2.5), False)
    if name == "fig3c":
        return _gain_sweep("KpB", is_, 0.0, 0.5, "Kp", (0.0, 0.2, 0.5, 1.0, 2.5), True)
    if name == "fig4-case1":
        return [("controllerA", ControllerSpec(os_, Kp=1.35, Ki=0.5)),
                ("controllerB", ControllerSpec(is_, Kp=1.4, Ki=0.45))]
    if name == "fig4-case2":
        return [("controllerA", ControllerSpec(os_, Kp=0.65, Ki=0.25)),
                ("controllerB", ControllerSpec(is_, Kp=0.5, Ki=0.1))]
    raise ConfigError(f"unknown preset {name!r} (choose from {sorted(PRESETS)})")


PRESETS = ("paper-open-loop", "fig2a", "fig2b", "fig2c",
           "fig3a", "fig3b", "fig3c", "fig4-case1", "fig4-case2")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: scenario scalars plus named controllers."""

    rho: float
    ell: float
    C: float
    gamma: float
    b: float
    N: int
    dt: float
    t_end: float
    record_every: int
    strain_target: float
    preset: str | None
    cells: tuple   # of (name, ControllerSpec)

    def params(self) -> BeamParameters:
        return BeamParameters(rho=self.rho, ell=self.ell, C=self.C,
                              gamma=self.gamma, b=self.b)

    def scenarios(self):
        params = self.params()
        return [(name, Scenario(params=params, N=self.N, controller=spec,
                                strain_target=self.strain_target, dt=self.dt,
                                t_end=self.t_end, record_every=self.record_every))
                for name, spec in self.cells]

    def to_dict(self) -> dict:
        out = {key: getattr(self, key) for key in DEFAULTS}
        out["preset"] = self.preset
        out["cells"] = [{"name": name, "controller": _spec_to_dict(spec)}
                        for name, spec in self.cells]
        return out

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        cells = tuple((cell["name"], _spec_from_dict(cell["controller"]))
                      for cell in data["cells"])
        scalars = {key: data[key] for key in DEFAULTS}
        return _build_config(scalars, data.get("preset"), cells)


def _spec_to_dict(spec: ControllerSpec) -> dict:
    return {key: getattr(spec, key) for key in _CONTROLLER_KEYS}


def _spec_from_dict(data: dict) -> ControllerSpec:
    for key in data:
        if key not in _CONTROLLER_KEYS:
            raise ConfigError(f"unknown key 'controller.{key}'")
    try:
        return ControllerSpec(**data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"controller: {exc}") from exc


def _build_config(scalars: dict, preset, cells) -> RunConfig:
    try:
        cfg = RunConfig(rho=float(scalars["rho"]), ell=float(scalars["ell"]),
                        C=float(scalars["C"]), gamma=float(scalars["gamma"]),
                        b=float(scalars["b"]), N=int(scalars["N"]),
                        dt=float(scalars["dt"]), t_end=float(scalars["t_end"]),
                        record_every=int(scalars["record_every"]),
                        strain_target=float(scalars["strain_target"]),
                        preset=preset, cells=tuple(cells))
        cfg.scenarios()   # surface parameter/scenario violations now
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _parse_set_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(path: str | None = None, preset: str | None = None,
                 sets=()) -> RunConfig:
    """Resolve defaults, optional preset, optional JSON file and overrides."""
    scalars = dict(DEFAULTS)
    controller_data: dict | None = None

    if path is not None:
        try:
            with open(path) as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in data.items():
            if key == "controller":
                if not isinstance(value, dict):
                    raise ConfigError("'controller' must be an object")
                controller_data = dict(value)
            elif key in scalars:
                scalars[key] = value
            else:
                raise ConfigError(f"unknown key '{key}'")

    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        value = _parse_set_value(raw)
        if key.startswith("controller."):
            field = key[len("controller."):]
            if field not in _CONTROLLER_KEYS:
                raise ConfigError(f"unknown key 'controller.{field}'")
            controller_data = dict(controller_data or {})
            controller_data[field] = value
        elif key in scalars:
            scalars[key] = value
        else:
            raise ConfigError(f"unknown key '{key}'")

    if preset is not None:
        if controller_data is not None:
            raise ConfigError(f"preset {preset!r} already defines its controllers; "
                              "remove the 'controller' settings")
        cells = _preset_cells(preset)
    else:
        spec = (_spec_from_dict(controller_data) if controller_data
                else ControllerSpec(family="constant"))
        cells = [("run", spec)]
    return _build_config(scalars, preset, cells)


def _fmt(value: float) -> str:
    return "%.17g" % value


def write_timeseries(path: str, result: SimulationResult) -> None:
    """Lossless CSV of the recorded series, fixed column order."""
    series = (result.times, result.u, result.u_bar, result.f_b,
              result.strain_tip, result.strain_boundary, result.H_d,
              result.S_h, result.S_d, result.balance_residual,
              result.s_d_derivative)
    with open(path, "w") as handle:
        handle.write(",".join(CSV_COLUMNS) + "\n")
        for row in zip(*series):
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _metrics_entry(result: SimulationResult) -> dict:
    m = analysis.step_metrics(result.times, result.strain_tip,
                              result.scenario.strain_target)
    entry = m.as_dict()
    entry.update({
        "target": result.scenario.strain_target,
        "final_strain_tip": float(result.strain_tip[-1]),
        "cfl_warning": bool(result.cfl_warning),
        "n_steps": result.scenario.n_steps,
        "runtime_s": result.runtime_s,
    })
    return entry


def _json_default(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    raise TypeError(f"not JSON serializable: {value!r}")


def _write_json(path: str, payload: dict) -> None:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, float) and math.isnan(obj):
            return None
        if isinstance(obj, (np.floating, np.integer)):
            return clean(obj.item())
        return obj
    with open(path, "w") as handle:
        json.dump(clean(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def cmd_simulate(cfg: RunConfig, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    scenarios = cfg.scenarios()
    metrics = {}
    for name, scenario in scenarios:
        if scenario.cfl_warning:
            print(f"warning: dt={scenario.dt:g} exceeds the stability "
                  f"heuristic {scenario.cfl_limit:g}", file=sys.stderr)
        try:
            result = simulate(scenario)
        except NumericalInstabilityError as exc:
            print(f"error: run '{name}' aborted: {exc}", file=sys.stderr)
            return 3
        csv_name = ("timeseries.csv" if len(scenarios) == 1
                    else f"{name}_timeseries.csv")
        write_timeseries(os.path.join(out_dir, csv_name), result)
        metrics[name] = _metrics_entry(result)
    _write_json(os.path.join(out_dir, "metrics.json"),
                {"config": cfg.to_dict(), "runs": metrics})
    return 0


def cmd_sweep(cfg: RunConfig, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    cells = analysis.sweep(cfg.scenarios())
    summary_rows = []
    any_success = False
    for cell in cells:
        spec = cell.scenario.controller
        row = {"cell": cell.name, "family": spec.family, "Kp": spec.Kp,
               "Ki": spec.Ki, "gain_form": spec.gain_form,
               "reference_on": spec.reference_on}
        if cell.error is not None:
            row["error"] = cell.error
        else:
            any_success = True
            cell_dir = os.path.join(out_dir, cell.name)
            os.makedirs(cell_dir, exist_ok=True)
            write_timeseries(os.path.join(cell_dir, "timeseries.csv"), cell.result)
            _write_json(os.path.join(cell_dir, "metrics.json"),
                        {"runs": {cell.name: _metrics_entry(cell.result)}})
            row.update(cell.metrics.as_dict())
            row["error"] = ""
        summary_rows.append(row)

    columns = ("cell", "family", "Kp", "Ki", "gain_form", "reference_on",
               "rise_time_10_90", "overshoot_pct", "settling_time_2pct",
               "steady_state_error_pct", "vibration_index", "settled", "error")
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w") as handle:
        handle.write(",".join(columns) + "\n")
        for row in summary_rows:
            cellvals = []
            for col in columns:
                value = row.get(col, "")
                if isinstance(value, float):
                    value = _fmt(value)
                cellvals.append(str(value))
            handle.write(",".join(cellvals) + "\n")
    return 0 if any_success else 3


def _random_beam(rng, params: BeamParameters, N: int) -> DiscreteBeam:
    return DiscreteBeam(N=N, h=params.ell / N,
                        alpha_q=rng.standard_normal(N),
                        alpha_p=rng.standard_normal(N))


def _check(name, passed, margin, tolerance, detail=""):
    return {"name": name, "passed": bool(passed), "margin": float(margin),
            "tolerance": float(tolerance), "detail": detail}


def verify_checks(cfg: RunConfig) -> list:
    """Numerical certificate battery; every check should pass on the defaults."""
    checks = []
    params = cfg.params()
    rng = np.random.default_rng(2024)

    worst = 0.0
    for N in (2, 16, 64):
        for _ in range(1000 // 3 + 1):
            beam = _random_beam(rng, params, N)
            e_b = float(rng.standard_normal())
            res = power_balance_residual(beam, params, e_b)
            _, e_p = params.C * beam.alpha_q, beam.alpha_p / params.rho
            scale = 1.0 + abs(e_b * e_p[-1]) + params.b * beam.h * float(np.sum(e_p ** 2))
            worst = max(worst, abs(res) / scale)
    checks.append(_check("power_balance_identity", worst <= 1e-12, worst, 1e-12,
                         "max relative residual, 1000+ random states, N in {2,16,64}"))

    worst = 0.0
    for _ in range(200):
        beam = _random_beam(rng, params, cfg.N)
        e_b = float(rng.standard_normal())
        s_direct = discrete_storage(beam, params, e_b)
        s_quarter = storage_quarter_form(beam, params, e_b)
        worst = max(worst, abs(s_direct - s_quarter) / (1.0 + s_direct))
    checks.append(_check("storage_form_equivalence", worst <= 1e-12, worst, 1e-12,
                         "velocity storage vs state-based quarter form"))

    canonical = [("verify-os", ControllerSpec("output_shaping", Kp=1.35, Ki=0.3,
                                              gain_form="raw")),
                 ("verify-is", ControllerSpec("input_shaping", Kp=1.35, Ki=0.3,
                                              gain_form="raw"))]
    base = cfg.scenarios()[0][1]
    worst = 0.0
    for _, spec in list(cfg.cells) + canonical:
        scenario = replace(base, controller=spec)
        loop = analysis.assemble_closed_loop(scenario)
        for _ in range(100):
            x = rng.standard_normal(2 * cfg.N + 1)
            worst = max(worst, float(np.abs(loop.A @ x + loop.c
                                            - coupled_rhs(x, scenario)).max()))
    checks.append(_check("rhs_oracle_equivalence", worst <= 1e-13, worst, 1e-13,
                         "dense affine assembly vs stencil right-hand side"))

    worst = -np.inf
    open_loop = replace(base, controller=ControllerSpec(family="constant"))
    for scenario in [open_loop] + [replace(base, controller=spec)
                                   for _, spec in list(cfg.cells) + canonical]:
        worst = max(worst, analysis.spectral_abscissa(
            analysis.assemble_closed_loop(scenario)))
    checks.append(_check("spectral_abscissa", worst <= 1e-9, worst, 1e-9,
                         "open loop and every configured controller"))

    worst = 0.0
    n_eq = 0
    for _, spec in list(cfg.cells) + canonical:
        scenario = replace(base, controller=spec)
        try:
            x_eq = equilibrium_state(scenario)
        except ValueError:
            continue
        n_eq += 1
        loop = analysis.assemble_closed_loop(scenario)
        worst = max(worst, float(np.abs(loop.A @ x_eq + loop.c).max()),
                    float(np.abs(coupled_rhs(x_eq, scenario)).max()))
    checks.append(_check("fixed_point_exactness", worst <= 1e-12, worst, 1e-12,
                         f"operating point annihilates the dynamics ({n_eq} cases)"))

    for name, spec in canonical:
        run = simulate(replace(base, controller=spec))
        descent = analysis.shaped_storage_monotone(run)
        checks.append(_check(f"shaped_storage_descent[{name}]", descent.passed,
                             descent.margin, descent.tolerance, descent.detail))
        certificate = analysis.passivity_certificate(run)
        checks.append(_check(f"velocity_storage_passivity[{name}]",
                             certificate.passed, certificate.margin,
                             certificate.tolerance, certificate.detail))
        if spec.family == "output_shaping":
            traj = analysis.trajectory_sandwich(run)
            checks.append(_check("sandwich_bounds[trajectory]", traj.passed,
                                 traj.min_ratio - traj.gamma1,
                                 traj.gamma2 - traj.gamma1,
                                 f"ratio range [{traj.min_ratio:.6g}, "
                                 f"{traj.max_ratio:.6g}]"))

    rand = analysis.random_sandwich(params, cfg.N, ki_raw=0.3, n_samples=1000,
                                    seed=7)
    checks.append(_check("sandwich_bounds[random]", rand.passed,
                         rand.min_ratio - rand.gamma1, rand.gamma2 - rand.gamma1,
                         f"ratio range [{rand.min_ratio:.6g}, {rand.max_ratio:.6g}]"))

    rows = analysis.convergence_study(replace(base, controller=canonical[0][1]),
                                      (8, 16, 32))
    worst = max(row.equilibrium_residual for row in rows)
    checks.append(_check("mesh_equilibrium_exactness", worst <= 1e-12, worst, 1e-12,
                         "operating point residual across N in {8,16,32}"))

    order = analysis.rk4_order_study(replace(base, controller=canonical[0][1]))
    checks.append(_check("integrator_order", order.slope >= 3.8, order.slope, 3.8,
                         f"errors {['%.3e' % e for e in order.errors]}"))
    return checks


def cmd_verify(cfg: RunConfig, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    checks = verify_checks(cfg)
    all_passed = all(check["passed"] for check in checks)
    _write_json(os.path.join(out_dir, "verify.json"),
                {"all_passed": all_passed, "checks": checks})
    for check in checks:
        status = "pass" if check["passed"] else "FAIL"
        print(f"{status}  {check['name']}  margin={check['margin']:.3e}")
    return 0 if all_passed else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phbeam",
        description="Boundary passivity-based control of a damped "
                    "piezoelectric beam: simulation, sweeps, certificates.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--preset", choices=PRESETS,
                        help="named study configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config key (repeatable); controller "
                             "fields use controller.<field>")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common],
                   help="run the configured scenarios, write CSV + metrics")
    sub.add_parser("sweep", parents=[common],
                   help="run a gain sweep into per-cell directories")
    sub.add_parser("verify", parents=[common],
                   help="run the numerical certificate battery")

    args = parser.parse_args(argv)
    try:
        cfg = parse_config(path=args.config, preset=args.preset, sets=args.sets)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out)
        return cmd_verify(cfg, args.out)
    except NumericalInstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
