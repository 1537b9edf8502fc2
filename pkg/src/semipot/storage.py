"""On-disk formats: flat binary fields with JSON sidecars, scenario and
evolution directories, trajectory/field CSV exports, and config hashing.

Binary payloads are little-endian, row-major with axis order (x, y, z);
each carries a sidecar `<name>.json` describing the grid and dtype.  All
writers are deterministic: identical inputs produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dynamics import EvolutionResult, TrajectorySet
from .fields import ComplexField, Grid, PhysicalConstants, ScalarField
from .helmholtz import LambdaSchedule
from .potentials import (
    GaugeShift,
    SemiclassicalScenario,
    masked_ratio,
    quantum_potential,
    ratio_gradient,
)
from .report import VerificationReport

FORMAT_VERSION = 1

_DTYPES = {
    "float64": np.dtype("<f8"),
    "complex128": np.dtype("<c16"),
    "uint8": np.dtype("u1"),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text())


def write_field(directory, name: str, field, grid: Grid | None = None) -> None:
    """Write `<name>.bin` + `<name>.json` (ScalarField, ComplexField, or a
    raw boolean/uint8 mask array with an explicit grid)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(field, ScalarField):
        values, dtype, grid = field.values, "float64", field.grid
        extra = {}
    elif isinstance(field, ComplexField):
        values, dtype, grid = field.values, "complex128", field.grid
        extra = {"l2_norm": field.l2_norm}
    else:
        if grid is None:
            raise ValueError("raw arrays need an explicit grid")
        values, dtype = np.asarray(field).astype(np.uint8), "uint8"
        extra = {}
    sidecar = dict(grid.to_dict(), dtype=dtype, **extra)
    (directory / f"{name}.bin").write_bytes(
        np.ascontiguousarray(values).astype(_DTYPES[dtype]).tobytes()
    )
    _write_json(directory / f"{name}.json", sidecar)


def read_field(directory, name: str):
    """Inverse of write_field; returns ScalarField, ComplexField, or bool array."""
    directory = Path(directory)
    sidecar = _read_json(directory / f"{name}.json")
    grid = Grid.from_dict(sidecar)
    raw = (directory / f"{name}.bin").read_bytes()
    values = np.frombuffer(raw, dtype=_DTYPES[sidecar["dtype"]]).reshape(grid.extents)
    if sidecar["dtype"] == "float64":
        return ScalarField(grid, values.astype(np.float64))
    if sidecar["dtype"] == "complex128":
        return ComplexField(grid, values.astype(np.complex128))
    return values.astype(bool)


def field_to_csv(field, path) -> None:
    """Node coordinates plus value(s), one row per node in C order."""
    path = Path(path)
    grid = field.grid
    coords = [c.ravel() for c in grid.coords()]
    axis_names = ["x", "y", "z"][: grid.dim]
    complex_values = isinstance(field, ComplexField)
    header = axis_names + (
        ["value_re", "value_im"] if complex_values else ["value"]
    )
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        flat = field.values.ravel()
        for i in range(flat.size):
            row = [repr(float(c[i])) for c in coords]
            if complex_values:
                row += [repr(float(flat[i].real)), repr(float(flat[i].imag))]
            else:
                row.append(repr(float(flat[i])))
            fh.write(",".join(row) + "\n")


_FLAG_NAMES = {0: "ok", 1: "escaped", 2: "masked"}


def trajectories_to_csv(trajectories: TrajectorySet, path) -> None:
    """Rows (particle_id, t, x[, y, z], flag), truncated paths cut short."""
    path = Path(path)
    dim = trajectories.paths.shape[2]
    axis_names = ["x", "y", "z"][:dim]
    with path.open("w") as fh:
        fh.write(",".join(["particle_id", "t"] + axis_names + ["flag"]) + "\n")
        for p in range(trajectories.n_particles):
            flag = _FLAG_NAMES[int(trajectories.flags[p])]
            last = int(trajectories.valid_steps[p])
            for k in range(last + 1):
                row = [str(p), repr(float(trajectories.times[k]))]
                row += [repr(float(v)) for v in trajectories.paths[p, k]]
                row.append(flag)
                fh.write(",".join(row) + "\n")


def write_report(report: VerificationReport, path) -> None:
    _write_json(Path(path), report.to_dict())


def read_report(path) -> VerificationReport:
    return VerificationReport.from_dict(_read_json(Path(path)))


# ---------------------------------------------------------------------------
# Scenario directories
# ---------------------------------------------------------------------------


def write_scenario(
    scenario: SemiclassicalScenario, directory, config: dict | None = None
) -> Path:
    """Persist the authoritative payloads (R, phase numerator, V, masks)
    plus a header; derived fields are recomputed on load."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = scenario.n_slices
    for k in range(n):
        write_field(directory, f"amplitude_{k:04d}", scenario.amplitude[k])
        write_field(directory, f"phase_numerator_{k:04d}", scenario.phase_numerator[k])
        write_field(directory, f"potential_{k:04d}", scenario.potential[k])
        write_field(
            directory, f"node_mask_{k:04d}", scenario.node_masks[k], grid=scenario.grid
        )
    header = {
        "format_version": FORMAT_VERSION,
        "case": scenario.case,
        "constants": scenario.constants.to_dict(),
        "grid": scenario.grid.to_dict(),
        "n_slices": n,
        "energy": scenario.energy,
        "lambda": scenario.lam,
        "schedule": scenario.schedule.to_dict() if scenario.schedule else None,
        "times": scenario.times.tolist() if scenario.times is not None else None,
        "eps_node": scenario.eps_node,
        "eps_node_rel": scenario.eps_node_rel,
        "tolerances": scenario.tolerances,
        "gauge": scenario.gauge.to_dict() if scenario.gauge else None,
        "metadata": scenario.metadata,
    }
    if config is not None:
        header["config"] = config
        header["config_hash"] = config_hash(config)
    _write_json(directory / "scenario.json", header)
    return directory


def read_scenario(directory) -> SemiclassicalScenario:
    """Load a scenario directory; payloads are taken verbatim (the stored V
    is authoritative so corruption is detectable), derived fields
    (Q, phase, phase gradients) are recomputed from the payloads."""
    directory = Path(directory)
    header = _read_json(directory / "scenario.json")
    constants = PhysicalConstants.from_dict(header["constants"])
    n = header["n_slices"]
    amplitude, numerator, potential, masks = [], [], [], []
    for k in range(n):
        amplitude.append(read_field(directory, f"amplitude_{k:04d}"))
        numerator.append(read_field(directory, f"phase_numerator_{k:04d}"))
        potential.append(read_field(directory, f"potential_{k:04d}"))
        masks.append(read_field(directory, f"node_mask_{k:04d}"))
    grid = amplitude[0].grid

    q_fields, phases, gradients = [], [], []
    for k in range(n):
        Q, _ = quantum_potential(amplitude[k], constants, header["eps_node"])
        q_fields.append(Q)
        phases.append(
            ScalarField(
                grid,
                masked_ratio(numerator[k].values, amplitude[k].values, masks[k]),
            )
        )
        gradients.append(tuple(ratio_gradient(numerator[k], amplitude[k], masks[k])))

    schedule = (
        LambdaSchedule.from_dict(header["schedule"]) if header["schedule"] else None
    )
    gauge = None
    if header.get("gauge"):
        gauge = GaugeShift.from_samples(header["gauge"]["times"], header["gauge"]["f"])
    return SemiclassicalScenario(
        constants=constants,
        grid=grid,
        case=header["case"],
        amplitude=tuple(amplitude),
        phase_numerator=tuple(numerator),
        potential=tuple(potential),
        quantum_potential=tuple(q_fields),
        phase=tuple(phases),
        phase_gradient=tuple(gradients),
        node_masks=tuple(masks),
        eps_node=header["eps_node"],
        eps_node_rel=header["eps_node_rel"],
        tolerances=header["tolerances"],
        energy=header["energy"],
        lam=header["lambda"],
        schedule=schedule,
        times=np.asarray(header["times"]) if header["times"] is not None else None,
        gauge=gauge,
        metadata=header.get("metadata", {}),
    )


def read_scenario_header(directory) -> dict:
    return _read_json(Path(directory) / "scenario.json")


# ---------------------------------------------------------------------------
# Evolution directories
# ---------------------------------------------------------------------------


def write_evolution(
    evolution: EvolutionResult, directory, scenario_ref: str | None = None
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for j, psi in enumerate(evolution.psi_history):
        write_field(directory, f"psi_{j:04d}", psi)
    header = {
        "format_version": FORMAT_VERSION,
        "scheme": evolution.scheme,
        "constants": evolution.constants.to_dict(),
        "grid": evolution.grid.to_dict(),
        "dt": evolution.dt,
        "n_steps": evolution.n_steps,
        "store_stride": evolution.store_stride,
        "times": evolution.times.tolist(),
        "norm_times": evolution.norm_times.tolist(),
        "norm_history": evolution.norm_history.tolist(),
        "gauge": evolution.gauge.to_dict() if evolution.gauge else None,
        "metadata": evolution.metadata,
        "scenario_ref": scenario_ref,
    }
    _write_json(directory / "evolution.json", header)
    return directory


def read_evolution(directory) -> EvolutionResult:
    directory = Path(directory)
    header = _read_json(directory / "evolution.json")
    n_snapshots = len(header["times"])
    history = tuple(
        read_field(directory, f"psi_{j:04d}") for j in range(n_snapshots)
    )
    gauge = None
    if header.get("gauge"):
        gauge = GaugeShift.from_samples(header["gauge"]["times"], header["gauge"]["f"])
    return EvolutionResult(
        grid=history[0].grid,
        constants=PhysicalConstants.from_dict(header["constants"]),
        dt=header["dt"],
        n_steps=header["n_steps"],
        store_stride=header["store_stride"],
        times=np.asarray(header["times"]),
        psi_history=history,
        norm_times=np.asarray(header["norm_times"]),
        norm_history=np.asarray(header["norm_history"]),
        scheme=header["scheme"],
        gauge=gauge,
        metadata=header.get("metadata", {}),
    )


def read_evolution_header(directory) -> dict:
    return _read_json(Path(directory) / "evolution.json")
