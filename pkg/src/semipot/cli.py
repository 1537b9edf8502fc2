"""Command-line front end.

Subcommands: generate, verify, evolve, compare, gauge.  Exit status
contract: 0 = pass, 1 = check/construction failure, 2 = usage or config
error, 3 = inconclusive (mask-heavy) report.

A scenario is described by a single JSON config; every output directory
embeds the effective config and its hash, so identical config + seed
reproduce identical artifacts byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dynamics, potentials, storage, verify
from .fields import Grid, PhysicalConstants, ScalarField
from .helmholtz import (
    HelmholtzMode,
    LambdaSchedule,
    ResonanceError,
    evaluate_mode,
    solve_inhomogeneous,
    time_derivative,
)
from .potentials import (
    ConstructionError,
    DegenerateAmplitudeError,
    GaugeShift,
    MaskMismatchError,
    gauge_shift,
)
from .report import STATUS_FAIL, STATUS_INCONCLUSIVE, VerificationReport, make_entry

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

_MODE_KEYS = {"kind", "lambda", "wavevectors", "amplitudes", "phases"}
_SCHEMA = {
    "grid": {"dim", "extents", "origin", "spacing", "boundary"},
    "constants": {"hbar", "mass"},
    "case": None,
    "modes": {"R", "S_tilde", "phi_tilde"},
    "lambda": None,
    "lambda_schedule": {"times", "values", "constant", "t0", "t1", "n"},
    "E": None,
    "eps_node": None,
    "tolerances": None,
    "dynamics": {"dt", "T", "snapshot_stride", "particles"},
    "gauge": {"f", "n_samples"},
    "seed": None,
}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _finite_number(value, where: str) -> float:
    _require(
        isinstance(value, (int, float)) and not isinstance(value, bool),
        f"{where} must be a number",
    )
    _require(np.isfinite(value), f"{where} must be finite")
    return float(value)


def validate_config(config: dict) -> dict:
    """Schema-check a scenario config; returns it unchanged on success."""
    _require(isinstance(config, dict), "config must be a JSON object")
    _reject_unknown(config, set(_SCHEMA), "config")
    for key in ("grid", "constants", "case", "modes", "dynamics"):
        _require(key in config, f"missing required section {key!r}")

    grid = config["grid"]
    _reject_unknown(grid, _SCHEMA["grid"], "grid")
    for key in ("extents", "origin", "spacing"):
        _require(
            isinstance(grid.get(key), list) and grid[key],
            f"grid.{key} must be a non-empty list",
        )
        for v in grid[key]:
            _finite_number(v, f"grid.{key}[]")
    for h in grid["spacing"]:
        _require(h > 0, "grid.spacing entries must be positive")
    if "dim" in grid:
        _require(grid["dim"] == len(grid["extents"]), "grid.dim disagrees with extents")

    constants = config["constants"]
    _reject_unknown(constants, _SCHEMA["constants"], "constants")
    for key in ("hbar", "mass"):
        _require(key in constants, f"constants.{key} is required")
        _require(_finite_number(constants[key], f"constants.{key}") > 0,
                 f"constants.{key} must be positive")

    case = config["case"]
    _require(case in (potentials.CASE_STATIONARY, potentials.CASE_TIME_DEPENDENT),
             f"case must be 'stationary' or 'time_dependent', got {case!r}")

    modes = config["modes"]
    _reject_unknown(modes, _SCHEMA["modes"], "modes")
    _require("R" in modes, "modes.R is required")
    if case == potentials.CASE_STATIONARY:
        _require("lambda" in config, "stationary configs need a lambda")
        _require("E" in config, "stationary configs need E")
        _finite_number(config["lambda"], "lambda")
        _finite_number(config["E"], "E")
        _require("S_tilde" in modes, "stationary configs need modes.S_tilde")
        _require("phi_tilde" not in modes, "phi_tilde belongs to time-dependent configs")
    else:
        _require("lambda_schedule" in config, "time-dependent configs need lambda_schedule")
        _require("phi_tilde" in modes, "time-dependent configs need modes.phi_tilde")
        _require("S_tilde" not in modes, "S_tilde belongs to stationary configs")
        sched = config["lambda_schedule"]
        _reject_unknown(sched, _SCHEMA["lambda_schedule"], "lambda_schedule")

    def check_mode_spec(spec, where):
        if spec == "solve":
            return
        _require(isinstance(spec, dict), f"{where} must be a mode object or 'solve'")
        if "restricted_ansatz" in spec:
            _require(set(spec) == {"restricted_ansatz"},
                     f"{where}.restricted_ansatz must stand alone")
            _reject_unknown(spec["restricted_ansatz"], {"constant"},
                            f"{where}.restricted_ansatz")
            _finite_number(spec["restricted_ansatz"].get("constant", 1.0),
                           f"{where}.restricted_ansatz.constant")
            return
        _reject_unknown(spec, _MODE_KEYS, where)
        _require("kind" in spec, f"{where}.kind is required")

    check_mode_spec(modes["R"], "modes.R")
    _require(modes["R"] != "solve", "modes.R cannot be a solve directive")
    if case == potentials.CASE_STATIONARY:
        check_mode_spec(modes["S_tilde"], "modes.S_tilde")
    else:
        check_mode_spec(modes["phi_tilde"], "modes.phi_tilde")
        _require(
            "restricted_ansatz" not in (modes["phi_tilde"] or {}),
            "the restricted ansatz is stationary-only",
        )

    dyn = config["dynamics"]
    _reject_unknown(dyn, _SCHEMA["dynamics"], "dynamics")
    for key in ("dt", "T"):
        _require(key in dyn, f"dynamics.{key} is required")
        _require(_finite_number(dyn[key], f"dynamics.{key}") > 0,
                 f"dynamics.{key} must be positive")
    if "snapshot_stride" in dyn:
        _require(isinstance(dyn["snapshot_stride"], int) and dyn["snapshot_stride"] >= 1,
                 "dynamics.snapshot_stride must be a positive integer")
    if "particles" in dyn:
        particles = dyn["particles"]
        if isinstance(particles, dict):
            _reject_unknown(particles, {"count"}, "dynamics.particles")
            _require(isinstance(particles.get("count"), int) and particles["count"] > 0,
                     "dynamics.particles.count must be a positive integer")
        else:
            _require(isinstance(particles, list) and particles,
                     "dynamics.particles must be a list or {'count': N}")
            for p in particles:
                if isinstance(p, dict):
                    _reject_unknown(p, {"x0", "v0"}, "dynamics.particles[]")
                    _require("x0" in p, "dynamics.particles[].x0 is required")

    if "gauge" in config:
        _reject_unknown(config["gauge"], _SCHEMA["gauge"], "gauge")
        _require("f" in config["gauge"], "gauge.f is required")
    if "eps_node" in config:
        _require(_finite_number(config["eps_node"], "eps_node") > 0,
                 "eps_node must be positive")
    if "tolerances" in config:
        _require(isinstance(config["tolerances"], dict), "tolerances must be an object")
        for key, value in config["tolerances"].items():
            _finite_number(value, f"tolerances.{key}")
    if "seed" in config:
        _require(isinstance(config["seed"], int), "seed must be an integer")
    return config


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply repeatable --override dotted.key=value pairs (JSON values)."""
    out = json.loads(json.dumps(config))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = value
    return out


# ---------------------------------------------------------------------------
# Config -> objects
# ---------------------------------------------------------------------------


def _grid_from_config(config: dict) -> Grid:
    g = config["grid"]
    return Grid(
        tuple(g["extents"]), tuple(g["origin"]), tuple(g["spacing"]),
        g.get("boundary", "dirichlet_zero"),
    )


def _mode_from_spec(spec: dict, lam: float) -> HelmholtzMode:
    d = dict(spec)
    d.setdefault("lambda", lam)
    d.setdefault("wavevectors", [])
    d.setdefault("amplitudes", [])
    d.setdefault("phases", [0.0] * len(d["amplitudes"]))
    return HelmholtzMode.from_dict(d)


def _schedule_from_config(config: dict) -> LambdaSchedule:
    sched = config["lambda_schedule"]
    if "constant" in sched:
        return LambdaSchedule.constant(
            sched["constant"], sched.get("t0", 0.0), sched.get("t1", 1.0),
            sched.get("n", 9),
        )
    return LambdaSchedule.from_dict(sched)


def build_scenario(config: dict) -> potentials.SemiclassicalScenario:
    """Construct the scenario a validated config describes."""
    grid = _grid_from_config(config)
    constants = PhysicalConstants.from_dict(config["constants"])
    eps_rel = config.get("eps_node", potentials.DEFAULT_EPS_NODE_REL)
    tolerances = config.get("tolerances", {})

    if config["case"] == potentials.CASE_STATIONARY:
        lam = float(config["lambda"])
        R = evaluate_mode(_mode_from_spec(config["modes"]["R"], lam), grid)
        spec = config["modes"]["S_tilde"]
        if spec == "solve":
            S_tilde = solve_inhomogeneous(grid, lam, ScalarField.full(grid, 0.0))
        elif isinstance(spec, dict) and "restricted_ansatz" in spec:
            S_tilde = potentials.restricted_ansatz_numerator(
                R, spec["restricted_ansatz"].get("constant", 1.0),
                eps_rel * R.max_abs(),
            )
        else:
            S_tilde = evaluate_mode(_mode_from_spec(spec, lam), grid)
        return potentials.construct_stationary(
            R, S_tilde, float(config["E"]), lam, constants,
            eps_node_rel=eps_rel, tolerances=tolerances,
        )

    schedule = _schedule_from_config(config)
    base_mode = _mode_from_spec(
        config["modes"]["R"], float(schedule.values[0])
    )
    R_seq = [
        evaluate_mode(base_mode.rescaled(float(schedule.value_at(t))), grid)
        for t in schedule.times
    ]
    spec = config["modes"]["phi_tilde"]
    if spec == "solve":
        dR = time_derivative(R_seq, schedule.dt)
        phi_seq = [
            solve_inhomogeneous(
                grid,
                float(schedule.value_at(t)),
                ScalarField(grid, -2.0 * constants.mass * dR[k].values),
            )
            for k, t in enumerate(schedule.times)
        ]
    else:
        mode = _mode_from_spec(spec, float(schedule.values[0]))
        phi_seq = [
            evaluate_mode(mode.rescaled(float(schedule.value_at(t))), grid)
            for t in schedule.times
        ]
    return potentials.construct_time_dependent(
        R_seq, phi_seq, schedule, constants,
        eps_node_rel=eps_rel, tolerances=tolerances,
    )


def _particle_positions(config: dict, scenario) -> tuple[np.ndarray, list]:
    """Positions from the config; seeded uniform placement for {'count': N}."""
    dyn = config["dynamics"]
    dim = scenario.grid.dim
    spec = dyn.get("particles", {"count": 8})
    v0_overrides: list = []
    if isinstance(spec, dict):
        count = spec["count"]
        rng = np.random.default_rng(config.get("seed", 0))
        box = scenario.grid.box
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        mask = scenario.node_masks[0]
        spacing = np.asarray(scenario.grid.spacing)
        origin = np.asarray(scenario.grid.origin)
        positions = []
        attempts = 0
        while len(positions) < count and attempts < 1000 * count:
            attempts += 1
            x = center + (rng.uniform(-0.6, 0.6, size=dim)) * half
            node = tuple(
                int(round(v)) for v in np.clip(
                    (x - origin) / spacing, 0, np.asarray(scenario.grid.extents) - 1
                )
            )
            if not mask[node]:
                positions.append(x)
        if len(positions) < count:
            raise ConfigError("could not place particles outside the nodal mask")
        x0 = np.asarray(positions)
        v0_overrides = [None] * count
    else:
        positions = []
        for p in spec:
            if isinstance(p, dict):
                positions.append(np.atleast_1d(np.asarray(p["x0"], dtype=float)))
                v0_overrides.append(
                    np.atleast_1d(np.asarray(p["v0"], dtype=float))
                    if "v0" in p
                    else None
                )
            else:
                positions.append(np.atleast_1d(np.asarray(p, dtype=float)))
                v0_overrides.append(None)
        x0 = np.stack(positions)
    if x0.shape[1] != dim:
        raise ConfigError(f"particle positions must have dimension {dim}")
    return x0, v0_overrides


def _gauge_from_config(config: dict, scenario) -> GaugeShift:
    spec = config["gauge"]
    dyn = config["dynamics"]
    n = spec.get("n_samples", 65)
    times = np.linspace(0.0, dyn["T"], n)
    f = spec["f"]
    if f == "quantum_offset":
        values = np.asarray([scenario.level_at(t) for t in times])
    elif isinstance(f, list):
        values = np.interp(times, np.linspace(0.0, dyn["T"], len(f)), f)
    else:
        values = np.full(n, float(f))
    return GaugeShift.from_samples(times, values)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_config(path: str, overrides: list[str]) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    config = apply_overrides(config, overrides)
    return validate_config(config)


def _emit(report: VerificationReport, out_dir: Path, name: str, quiet: bool) -> int:
    storage.write_report(report, out_dir / name)
    if not quiet:
        print(report.table())
    outcome = report.outcome
    if outcome == STATUS_FAIL:
        return EXIT_FAIL
    if outcome == STATUS_INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def cmd_generate(args) -> int:
    config = _load_config(args.config, args.override)
    scenario = build_scenario(config)
    out = Path(args.out)
    storage.write_scenario(scenario, out, config=config)
    report = verify.scenario_report(
        scenario,
        provenance={"config_hash": storage.config_hash(config), "stage": "generate"},
    )
    code = _emit(report, out, "construction_report.json", args.quiet)
    if not args.quiet:
        print(f"scenario written to {out}")
    return code


def cmd_verify(args) -> int:
    scenario = storage.read_scenario(args.scenario)
    header = storage.read_scenario_header(args.scenario)
    report = verify.scenario_report(
        scenario,
        provenance={
            "config_hash": header.get("config_hash"),
            "scenario": str(args.scenario),
            "stage": "verify",
        },
    )
    return _emit(report, Path(args.scenario), "verification_report.json", args.quiet)


def cmd_evolve(args) -> int:
    scenario = storage.read_scenario(args.scenario)
    header = storage.read_scenario_header(args.scenario)
    config = apply_overrides(header.get("config", {}), args.override)
    dyn = config.get("dynamics", {})
    dt = float(dyn.get("dt", 1e-3))
    T = float(dyn.get("T", 1.0))
    stride = int(dyn.get("snapshot_stride", 1))
    evolution = dynamics.evolve_scenario(scenario, dt, T, store_stride=stride)
    out = Path(args.out)
    storage.write_evolution(evolution, out, scenario_ref=str(args.scenario))

    report = VerificationReport(
        provenance={
            "config_hash": header.get("config_hash"),
            "scenario": str(args.scenario),
            "stage": "evolve",
            "finite_box_truncation": True,
        }
    )
    drift = evolution.max_norm_drift / evolution.norm_history[0]
    budget = dynamics.NORM_DRIFT_PER_UNIT_TIME * max(evolution.horizon, 1.0)
    report.add(make_entry("norm_drift", drift, budget, dt=dt, T=T))
    tolerances = scenario.tolerances
    if "stationarity" in tolerances:
        scale = evolution.metadata.get("amplitude_scale", 1.0)
        worst = 0.0
        mask = scenario.node_masks[0]
        for psi in evolution.psi_history:
            dev = np.abs(np.abs(psi.values) - scale * scenario.amplitude[0].values)
            worst = max(worst, float(np.max(dev[~mask])))
        report.add(
            make_entry(
                "stationary_amplitude_preservation",
                worst,
                tolerances["stationarity"],
                mask_fraction=scenario.mask_fraction,
            )
        )
    code = _emit(report, out, "evolution_report.json", args.quiet)
    if not args.quiet:
        print(f"evolution written to {out}")
    return code


def cmd_compare(args) -> int:
    scenario = storage.read_scenario(args.scenario)
    header = storage.read_scenario_header(args.scenario)
    evolution = storage.read_evolution(args.evolution)
    config = apply_overrides(header.get("config", {}), args.override)
    x0, v0_overrides = _particle_positions(config, scenario)

    bohmian = dynamics.integrate_bohmian(
        evolution, x0, scenario.constants, eps_node=scenario.eps_node
    )
    ics = dynamics.guidance_matched_ics(
        evolution, x0, scenario.constants, eps_node=scenario.eps_node
    )
    ics = [
        (x, v if v_over is None else v_over)
        for (x, v), v_over in zip(ics, v0_overrides)
    ]
    if scenario.is_stationary and scenario.gauge is None:
        potential = scenario.potential[0]
        potential_times = None
    else:
        times = (
            scenario.times
            if scenario.times is not None
            else np.linspace(0.0, evolution.horizon, 9)
        )
        potential = [
            ScalarField(scenario.grid, scenario.potential_values_at(float(t)))
            for t in times
        ]
        potential_times = times
    classical = dynamics.integrate_classical(
        potential,
        scenario.constants,
        ics,
        evolution.dt,
        evolution.horizon,
        potential_times=potential_times,
        node_mask=scenario.node_masks[0],
        t0=float(evolution.times[0]),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    storage.trajectories_to_csv(bohmian, out / "bohmian.csv")
    storage.trajectories_to_csv(classical, out / "classical.csv")
    tol = scenario.tolerances.get("trajectory", 1e-3)
    entry = dynamics.compare_trajectories(classical, bohmian, tol)
    report = VerificationReport(
        provenance={
            "config_hash": header.get("config_hash"),
            "scenario": str(args.scenario),
            "evolution": str(args.evolution),
            "stage": "compare",
            "finite_box_truncation": True,
        }
    )
    report.add(entry)
    return _emit(report, out, "comparison_report.json", args.quiet)


def cmd_gauge(args) -> int:
    scenario = storage.read_scenario(args.scenario)
    header = storage.read_scenario_header(args.scenario)
    config = apply_overrides(header.get("config", {}), args.override)
    if args.f_constant is not None:
        config.setdefault("gauge", {})["f"] = args.f_constant
    if args.f_quantum_offset:
        config.setdefault("gauge", {})["f"] = "quantum_offset"
    if "gauge" not in config:
        raise ConfigError(
            "no gauge specified: add a gauge section to the config or pass "
            "--f-constant/--f-quantum-offset"
        )
    shift = _gauge_from_config(config, scenario)
    gauged = gauge_shift(scenario, shift)
    out = Path(args.out)
    storage.write_scenario(gauged, out, config=config)

    report = VerificationReport(
        provenance={
            "config_hash": storage.config_hash(config),
            "scenario": str(args.scenario),
            "stage": "gauge",
            "zeta_final": float(shift.zeta_values[-1]),
            "finite_box_truncation": True,
        }
    )
    report.extend(verify.check_gauge_invariance(scenario, gauged))
    if config["gauge"]["f"] == "quantum_offset":
        # witnessing the equivalence with a zero effective quantum potential
        report.add(verify.check_q_constancy(scenario))
    code = _emit(report, out, "gauge_report.json", args.quiet)
    if not args.quiet:
        print(f"gauged scenario written to {out}")
    return code


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semipot",
        description="Construct, verify, and simulate semiclassical potentials.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=False, scenario=False, evolution=False, out=False):
        if config:
            p.add_argument("--config", required=True, help="scenario config JSON")
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario directory")
        if evolution:
            p.add_argument("--evolution", required=True, help="evolution directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="config override (dotted keys, JSON values); repeatable",
        )
        p.add_argument("--quiet", action="store_true", help="suppress tables")

    p = sub.add_parser("generate", help="build and store a scenario")
    common(p, config=True, out=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("verify", help="run the scenario checks")
    common(p, scenario=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("evolve", help="Crank-Nicolson evolution of a scenario")
    common(p, scenario=True, out=True)
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("compare", help="classical vs Bohmian trajectories")
    common(p, scenario=True, evolution=True, out=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("gauge", help="apply a time-dependent energy offset")
    common(p, scenario=True, out=True)
    p.add_argument("--f-constant", type=float, default=None,
                   help="constant offset value")
    p.add_argument("--f-quantum-offset", action="store_true",
                   help="use f(t) = K(t), the constant quantum-potential level")
    p.set_defaults(fn=cmd_gauge)
    return parser


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, matching the contract
        return int(exc.code) if exc.code else EXIT_PASS
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        ConstructionError,
        DegenerateAmplitudeError,
        MaskMismatchError,
        ResonanceError,
        dynamics.UnitarityError,
    ) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
