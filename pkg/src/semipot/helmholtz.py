"""Closed-form Helmholtz modes, residual verification, and the sparse
inhomogeneous solve.

The amplitude and reduced-phase fields of a semiclassical scenario must
satisfy grad^2 u + lambda^2 u = 0; this module supplies a small catalog of
closed-form solutions, a residual check for arbitrary sampled fields, and
a direct solver for the driven problem grad^2 u + lambda^2 u = rhs on
dirichlet-zero grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import (
    BOUNDARY_DIRICHLET,
    Grid,
    PhysicalConstants,
    ScalarField,
    laplacian_values,
)
from .report import ReportEntry, make_entry

MODE_PLANE_WAVES = "plane_wave_superposition"
MODE_SEPARABLE = "separable_trig"
MODE_RADIAL_SINC = "radial_sinc"
MODE_HARMONIC = "harmonic"
MODE_KINDS = (MODE_PLANE_WAVES, MODE_SEPARABLE, MODE_RADIAL_SINC, MODE_HARMONIC)

WAVEVECTOR_NORM_TOL = 1e-12

#: Relative back-substitution residual above which a solve is declared resonant.
RESONANCE_RESIDUAL_LIMIT = 1e-8


class ResonanceError(ValueError):
    """lambda^2 collides with a discrete Laplacian eigenvalue of the grid."""

    def __init__(self, lam: float, detail: str):
        super().__init__(
            f"resonant wavenumber lambda={lam!r}: {detail}; the driven Helmholtz "
            "problem has no unique solution on this grid"
        )
        self.lam = lam


def quantum_level(lam: float, constants: PhysicalConstants) -> float:
    """Spatially constant quantum-potential value (hbar*lambda)^2 / (2m)."""
    return (constants.hbar * lam) ** 2 / (2.0 * constants.mass)


def wavenumber_from_level(level: float, constants: PhysicalConstants) -> float:
    """Invert quantum_level; negative levels (imaginary wavenumbers) rejected."""
    if level < 0:
        raise ValueError(
            f"negative quantum-potential level {level} would need an imaginary "
            "wavenumber, which is out of scope"
        )
    return float(np.sqrt(2.0 * constants.mass * level) / constants.hbar)


@dataclass(frozen=True)
class HelmholtzMode:
    """One closed-form solution family of grad^2 u + lambda^2 u = 0.

    kind:
      plane_wave_superposition  sum_j a_j cos(k_j . x + theta_j), |k_j| = lambda
      separable_trig            sum_j a_j prod_d cos(k_jd x_d + theta_j), |k_j| = lambda
      radial_sinc               a_0 sin(lambda r)/(lambda r), 3D only
      harmonic                  affine a_0 + sum_d a_d x_d, lambda = 0
    """

    kind: str
    lam: float
    wavevectors: tuple[tuple[float, ...], ...] = ()
    amplitudes: tuple[float, ...] = ()
    phases: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "wavevectors", tuple(tuple(float(c) for c in k) for k in self.wavevectors)
        )
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        object.__setattr__(self, "lam", float(self.lam))
        if self.kind not in MODE_KINDS:
            raise ValueError(f"unknown mode kind {self.kind!r}; expected one of {MODE_KINDS}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not self.amplitudes or not any(a != 0.0 for a in self.amplitudes):
            raise ValueError("mode needs at least one nonzero amplitude")
        if self.kind == MODE_HARMONIC and self.lam != 0.0:
            raise ValueError("harmonic modes require lambda = 0")
        if self.kind in (MODE_PLANE_WAVES, MODE_SEPARABLE):
            if len(self.wavevectors) != len(self.amplitudes):
                raise ValueError("one wavevector per amplitude required")
            if len(self.phases) != len(self.amplitudes):
                raise ValueError("one phase per amplitude required")
            tol = WAVEVECTOR_NORM_TOL * max(1.0, self.lam)
            for k in self.wavevectors:
                norm = float(np.sqrt(sum(c * c for c in k)))
                if abs(norm - self.lam) > tol:
                    raise ValueError(
                        f"wavevector {k} has |k|={norm!r}, expected lambda={self.lam!r}"
                    )

    @property
    def dim(self) -> int | None:
        """Spatial dimension implied by the wavevectors (None if unconstrained)."""
        if self.kind == MODE_RADIAL_SINC:
            return 3
        if self.wavevectors:
            return len(self.wavevectors[0])
        return None

    @classmethod
    def plane_waves(
        cls,
        lam: float,
        wavevectors: Sequence[Sequence[float]],
        amplitudes: Sequence[float],
        phases: Sequence[float] | None = None,
    ) -> "HelmholtzMode":
        phases = tuple(phases) if phases is not None else (0.0,) * len(tuple(amplitudes))
        return cls(MODE_PLANE_WAVES, lam, tuple(map(tuple, wavevectors)), tuple(amplitudes), phases)

    @classmethod
    def separable(
        cls,
        lam: float,
        wavevectors: Sequence[Sequence[float]],
        amplitudes: Sequence[float],
        phases: Sequence[float] | None = None,
    ) -> "HelmholtzMode":
        phases = tuple(phases) if phases is not None else (0.0,) * len(tuple(amplitudes))
        return cls(MODE_SEPARABLE, lam, tuple(map(tuple, wavevectors)), tuple(amplitudes), phases)

    @classmethod
    def radial_sinc(cls, lam: float, amplitude: float = 1.0) -> "HelmholtzMode":
        if lam <= 0:
            raise ValueError("radial_sinc requires lambda > 0")
        return cls(MODE_RADIAL_SINC, lam, (), (amplitude,), ())

    @classmethod
    def harmonic(cls, offset: float, slopes: Sequence[float] = ()) -> "HelmholtzMode":
        return cls(MODE_HARMONIC, 0.0, (), (offset, *slopes), ())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "wavevectors": [list(k) for k in self.wavevectors],
            "amplitudes": list(self.amplitudes),
            "phases": list(self.phases),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HelmholtzMode":
        return cls(
            d["kind"],
            d["lambda"],
            tuple(tuple(k) for k in d.get("wavevectors", [])),
            tuple(d.get("amplitudes", [])),
            tuple(d.get("phases", [])),
        )

    def rescaled(self, lam: float) -> "HelmholtzMode":
        """Same mode with wavevectors scaled to |k| = lam (directions kept)."""
        if self.kind in (MODE_HARMONIC,):
            if lam != 0.0:
                raise ValueError("harmonic modes only exist at lambda = 0")
            return self
        if self.kind == MODE_RADIAL_SINC:
            return HelmholtzMode(self.kind, lam, (), self.amplitudes, ())
        if self.lam == 0.0:
            raise ValueError("cannot rescale a lambda=0 trig mode")
        factor = lam / self.lam
        scaled = tuple(tuple(c * factor for c in k) for k in self.wavevectors)
        return HelmholtzMode(self.kind, lam, scaled, self.amplitudes, self.phases)


def _sinc_profile(scaled_r: np.ndarray) -> np.ndarray:
    """sin(r)/r with the removable singularity handled by series."""
    out = np.empty_like(scaled_r)
    small = np.abs(scaled_r) < 1e-4
    rs = scaled_r[small]
    out[small] = 1.0 - rs**2 / 6.0 + rs**4 / 120.0
    rl = scaled_r[~small]
    out[~small] = np.sin(rl) / rl
    return out


def evaluate_mode(mode: HelmholtzMode, grid: Grid) -> ScalarField:
    """Sample a catalog mode on a grid."""
    if mode.dim is not None and mode.dim != grid.dim:
        raise ValueError(
            f"mode dimension {mode.dim} does not match grid dimension {grid.dim}"
        )
    coords = grid.coords()
    out = np.zeros(grid.extents)
    if mode.kind == MODE_HARMONIC:
        if len(mode.amplitudes) > 1 + grid.dim:
            raise ValueError(
                f"harmonic mode has {len(mode.amplitudes)} coefficients, "
                f"at most {1 + grid.dim} allowed on a {grid.dim}D grid"
            )
        out += mode.amplitudes[0]
        for d, slope in enumerate(mode.amplitudes[1:]):
            out += slope * coords[d]
    elif mode.kind == MODE_RADIAL_SINC:
        r2 = sum(c**2 for c in coords)
        out = mode.amplitudes[0] * _sinc_profile(mode.lam * np.sqrt(r2))
    elif mode.kind == MODE_PLANE_WAVES:
        for k, a, theta in zip(mode.wavevectors, mode.amplitudes, mode.phases):
            phase = sum(kc * c for kc, c in zip(k, coords)) + theta
            out += a * np.cos(phase)
    else:  # separable_trig
        for k, a, theta in zip(mode.wavevectors, mode.amplitudes, mode.phases):
            term = np.full(grid.extents, a)
            for kc, c in zip(k, coords):
                term = term * np.cos(kc * c + theta)
            out += term
    return ScalarField(grid, out)


def helmholtz_residual_values(f: ScalarField, lam: float) -> np.ndarray:
    return laplacian_values(f.values, f.grid) + lam**2 * f.values


def verify_helmholtz(
    f: ScalarField, lam: float, tol: float, name: str = "helmholtz_residual"
) -> ReportEntry:
    """Max interior |grad^2 f + lambda^2 f| against tol.

    Interior means nodes with full stencil support; a report entry is always
    produced (never raises).
    """
    residual = helmholtz_residual_values(f, lam)
    interior = f.grid.interior_mask()
    measured = float(np.max(np.abs(residual[interior])))
    return make_entry(
        name,
        measured,
        tol,
        lam=lam,
        h_max=max(f.grid.spacing),
        interior_fraction=float(interior.mean()),
    )


def dirichlet_interior_operator(grid: Grid, lam: float) -> sp.csc_matrix:
    """Sparse (grad^2 + lambda^2) on the interior nodes of a dirichlet grid.

    Boundary nodes are clamped to zero, so the matrix is the symmetric
    Kronecker-sum stencil restricted to interior unknowns (C-order flattening
    of values[1:-1, ...]).
    """
    ops = []
    for n, h in zip(grid.extents, grid.spacing):
        n_int = n - 2
        ops.append(
            sp.diags(
                [np.ones(n_int - 1), -2.0 * np.ones(n_int), np.ones(n_int - 1)],
                [-1, 0, 1],
            )
            / h**2
        )
    lap = ops[0]
    for op in ops[1:]:
        lap = sp.kronsum(op, lap)  # kronsum(B, A) = A (x) I + I (x) B, C-order
    n_total = lap.shape[0]
    return (lap + lam**2 * sp.identity(n_total)).tocsc()


def solve_inhomogeneous(grid: Grid, lam: float, rhs: ScalarField) -> ScalarField:
    """Solve (grad^2 + lambda^2) u = rhs with u = 0 on the grid boundary.

    Sparse direct factorization; raises ResonanceError when the system is
    (numerically) singular, i.e. lambda^2 sits on a discrete eigenvalue.
    """
    if grid.boundary != BOUNDARY_DIRICHLET:
        raise ValueError("solve_inhomogeneous requires a dirichlet_zero grid")
    if rhs.grid != grid:
        raise ValueError("rhs is sampled on a different grid")
    interior = tuple(slice(1, -1) for _ in range(grid.dim))
    b = rhs.values[interior].ravel()
    A = dirichlet_interior_operator(grid, lam)
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as exc:  # exactly singular factorization
        raise ResonanceError(lam, f"sparse factorization failed ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise ResonanceError(lam, "solve produced non-finite values")
    b_scale = float(np.max(np.abs(b))) if b.size else 0.0
    residual = float(np.max(np.abs(A @ x - b))) if b.size else 0.0
    rel = residual / b_scale if b_scale > 0 else residual
    if rel > RESONANCE_RESIDUAL_LIMIT:
        raise ResonanceError(
            lam, f"back-substitution residual {rel:.3e} above {RESONANCE_RESIDUAL_LIMIT:.0e}"
        )
    out = np.zeros(grid.extents)
    out[interior] = x.reshape(tuple(n - 2 for n in grid.extents))
    return ScalarField(grid, out)


def time_derivative(fields: Sequence[ScalarField], dt: float) -> list[ScalarField]:
    """Second-order time derivative of a uniformly sampled field sequence."""
    if len(fields) < 3:
        raise ValueError(f"need at least 3 time samples, got {len(fields)}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ValueError("all time samples must share one grid")
    stack = np.stack([f.values for f in fields])
    return [ScalarField(grid, d) for d in time_derivative_values(stack, dt)]


def time_derivative_values(stack: np.ndarray, dt: float) -> np.ndarray:
    """Same stencil on a raw (n_times, ...) array."""
    out = np.empty_like(stack)
    out[1:-1] = (stack[2:] - stack[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * stack[0] + 4.0 * stack[1] - stack[2]) / (2.0 * dt)
    out[-1] = (3.0 * stack[-1] - 4.0 * stack[-2] + stack[-3]) / (2.0 * dt)
    return out


@dataclass(frozen=True, eq=False)
class LambdaSchedule:
    """Piecewise-linear lambda(t) >= 0 on a uniform, strictly increasing mesh."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        values = np.array(self.values, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("schedule needs at least two time samples")
        if values.shape != times.shape:
            raise ValueError("times and values must have matching shape")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("schedule times must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("schedule times must be uniformly spaced")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise ValueError("lambda(t) must be finite and >= 0")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def value_at(self, t) -> np.ndarray | float:
        return np.interp(t, self.times, self.values)

    def level_at(self, t, constants: PhysicalConstants):
        """K(t) = (hbar*lambda(t))^2 / (2m)."""
        lam = self.value_at(t)
        return (constants.hbar * lam) ** 2 / (2.0 * constants.mass)

    @classmethod
    def constant(cls, lam: float, t0: float, t1: float, n: int) -> "LambdaSchedule":
        return cls(np.linspace(t0, t1, n), np.full(n, float(lam)))

    @classmethod
    def from_levels(
        cls, times: Sequence[float], levels: Sequence[float], constants: PhysicalConstants
    ) -> "LambdaSchedule":
        lam = [wavenumber_from_level(level, constants) for level in levels]
        return cls(np.asarray(times, dtype=float), np.asarray(lam))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LambdaSchedule":
        return cls(np.asarray(d["times"], dtype=float), np.asarray(d["values"], dtype=float))
