"""Quantum potential, semiclassical potential construction, and gauge shifts.

The construction pairs an amplitude R with a reduced phase (S-tilde in the
stationary case, phi-tilde in the time-dependent case), both Helmholtz
solutions for the same wavenumber, and assembles the classical potential
that makes the quantum dynamics classical:

    stationary      V = E - Q - (grad(S_tilde/R))^2 / 2m
    time-dependent  V = -d/dt(phi_tilde/R) - Q - (grad(phi_tilde/R))^2 / 2m

Q here is the *discrete* quantum potential -hbar^2 grad^2_h R / (2 m R);
since R satisfies the Helmholtz constraint, Q equals (hbar*lambda)^2/2m up
to O(h^2), and using the discrete value makes the assembled discrete
Hamilton-Jacobi identity exact (and R an exact eigenvector of the discrete
Hamiltonian).

Ratios against R are never differenced directly: gradients of S_tilde/R
use the quotient rule on the smooth fields, which stays accurate near
nodal sets and at the domain edges.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import (
    ComplexField,
    Grid,
    PhysicalConstants,
    ScalarField,
    divergence_values,
    gradient_values,
    laplacian_values,
)
from .helmholtz import (
    LambdaSchedule,
    helmholtz_residual_values,
    quantum_level,
    time_derivative_values,
    verify_helmholtz,
)

CASE_STATIONARY = "stationary"
CASE_TIME_DEPENDENT = "time_dependent"

#: Default nodal threshold, relative to max |R|.
DEFAULT_EPS_NODE_REL = 1e-6

#: Fraction of nodes whose mask may flip between adjacent time slices.
MASK_MISMATCH_LIMIT = 0.05


class DegenerateAmplitudeError(ValueError):
    """Every node fell below the nodal threshold."""


class ConstructionError(ValueError):
    """A scenario precondition failed (names the offending field)."""


class MaskMismatchError(ValueError):
    """Nodal masks of adjacent time slices disagree on too many nodes."""


def node_mask_for(values: np.ndarray, eps_node: float) -> np.ndarray:
    """True where |values| < eps_node (the nodal set to exclude)."""
    return np.abs(values) < eps_node


def quantum_potential(
    R: ScalarField, constants: PhysicalConstants, eps_node: float | None = None
) -> tuple[ScalarField, np.ndarray]:
    """Q = -hbar^2 grad^2 R / (2 m R) away from the nodal set.

    Returns (Q, node_mask); masked nodes are zero-filled in Q and marked
    True in the mask.  eps_node defaults to 1e-6 * max|R|.
    """
    if eps_node is None:
        eps_node = DEFAULT_EPS_NODE_REL * R.max_abs()
    mask = node_mask_for(R.values, eps_node)
    if mask.all():
        raise DegenerateAmplitudeError(
            f"all {mask.size} nodes have |R| < {eps_node!r}; "
            "the amplitude is degenerate"
        )
    lap = laplacian_values(R.values, R.grid)
    q = np.zeros_like(R.values)
    np.divide(
        -(constants.hbar**2) * lap,
        2.0 * constants.mass * R.values,
        out=q,
        where=~mask,
    )
    return ScalarField(R.grid, q), mask


def masked_ratio(num: np.ndarray, den: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """num/den where unmasked, 0 elsewhere."""
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=~mask)
    return out


def ratio_gradient(
    num: ScalarField, den: ScalarField, mask: np.ndarray
) -> list[np.ndarray]:
    """grad(num/den) by the quotient rule (den*grad num - num*grad den)/den^2.

    Differencing only the smooth inputs keeps the result second-order
    accurate up to the nodal mask and at one-sided boundaries.
    """
    grid = num.grid
    g_num = gradient_values(num.values, grid)
    g_den = gradient_values(den.values, grid)
    den2 = den.values**2
    out = []
    for a in range(grid.dim):
        comp = np.zeros_like(num.values)
        np.divide(
            den.values * g_num[a] - num.values * g_den[a],
            den2,
            out=comp,
            where=~mask,
        )
        out.append(comp)
    return out


def ratio_time_derivative(
    num_stack: np.ndarray, den_stack: np.ndarray, dt: float, mask_stack: np.ndarray
) -> np.ndarray:
    """d/dt(num/den) by the quotient rule with the shared time stencil."""
    dnum = time_derivative_values(num_stack, dt)
    dden = time_derivative_values(den_stack, dt)
    out = np.zeros_like(num_stack)
    np.divide(
        den_stack * dnum - num_stack * dden,
        den_stack**2,
        out=out,
        where=~mask_stack,
    )
    return out


@dataclass(frozen=True, eq=False)
class GaugeShift:
    """Time-dependent energy offset f(t) and its phase zeta(t) = -int_0^t f."""

    times: np.ndarray
    f_values: np.ndarray
    zeta_values: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        f_values = np.array(self.f_values, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("gauge shift needs at least two time samples")
        if f_values.shape != times.shape:
            raise ValueError("times and f samples must have matching shape")
        if np.any(np.diff(times) <= 0):
            raise ValueError("gauge times must be strictly increasing")
        if not np.all(np.isfinite(f_values)):
            raise ValueError("f samples must be finite")
        zeta = np.concatenate(
            ([0.0], cumulative_trapezoid(-f_values, times))
        )
        for arr in (times, f_values, zeta):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "f_values", f_values)
        object.__setattr__(self, "zeta_values", zeta)

    def f_at(self, t):
        return np.interp(t, self.times, self.f_values)

    def zeta_at(self, t):
        return np.interp(t, self.times, self.zeta_values)

    @classmethod
    def constant(cls, value: float, t0: float, t1: float, n: int = 2) -> "GaugeShift":
        return cls(np.linspace(t0, t1, n), np.full(n, float(value)))

    @classmethod
    def from_samples(cls, times, f_values) -> "GaugeShift":
        return cls(np.asarray(times, dtype=float), np.asarray(f_values, dtype=float))

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "f": self.f_values.tolist(),
            "zeta": self.zeta_values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SemiclassicalScenario:
    """A constructed (R, phase numerator, V) bundle ready for simulation.

    Field tuples hold one entry for stationary scenarios and one per time
    sample otherwise.  Masked nodes are zero-filled in every derived field;
    `node_masks` is authoritative.
    """

    constants: PhysicalConstants
    grid: Grid
    case: str
    amplitude: tuple[ScalarField, ...]
    phase_numerator: tuple[ScalarField, ...]
    potential: tuple[ScalarField, ...]
    quantum_potential: tuple[ScalarField, ...]
    phase: tuple[ScalarField, ...]
    phase_gradient: tuple[tuple[np.ndarray, ...], ...]
    node_masks: tuple[np.ndarray, ...]
    eps_node: float
    eps_node_rel: float
    tolerances: dict
    energy: float | None = None
    lam: float | None = None
    schedule: LambdaSchedule | None = None
    times: np.ndarray | None = None
    gauge: GaugeShift | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def is_stationary(self) -> bool:
        return self.case == CASE_STATIONARY

    @property
    def n_slices(self) -> int:
        return len(self.amplitude)

    @property
    def mask_fraction(self) -> float:
        return float(np.mean([m.mean() for m in self.node_masks]))

    def lambda_at(self, t: float) -> float:
        if self.schedule is not None:
            return float(self.schedule.value_at(t))
        return float(self.lam)

    def level_at(self, t: float = 0.0) -> float:
        """K(t) = (hbar lambda(t))^2 / 2m, the constant quantum-potential value."""
        return quantum_level(self.lambda_at(t), self.constants)

    def slice_index(self, t: float) -> int:
        if self.is_stationary:
            return 0
        return int(np.argmin(np.abs(self.times - t)))

    def phase_at(self, t: float) -> ScalarField:
        """Total phase phi(x, t) (action units), including any gauge term."""
        if self.is_stationary:
            values = self.phase[0].values - self.energy * t
        else:
            values = self.phase[self.slice_index(t)].values
        if self.gauge is not None:
            values = values + self.constants.hbar * self.gauge.zeta_at(t)
        return ScalarField(self.grid, values)

    def potential_values_at(self, t: float) -> np.ndarray:
        """V(x, t) with linear interpolation between slices plus gauge offset."""
        if self.is_stationary:
            values = self.potential[0].values
        else:
            times = self.times
            k = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
            w = (t - times[k]) / (times[k + 1] - times[k])
            w = min(max(w, 0.0), 1.0)
            values = (1.0 - w) * self.potential[k].values + w * self.potential[
                k + 1
            ].values
        if self.gauge is not None:
            values = values + self.gauge.f_at(t)
        return values

    def initial_wavefunction(self) -> ComplexField:
        """Box-normalized R exp(i phi(0)/hbar)."""
        psi = ComplexField.from_polar(
            self.amplitude[0], self.phase_at(0.0), self.constants.hbar
        )
        return psi.normalized()

    def start_time(self) -> float:
        return 0.0 if self.is_stationary else float(self.times[0])


def _tolerance_defaults(
    grid: Grid,
    lam_max: float,
    amp_scale: float,
    num_scale: float,
    amp_ratio: float,
    constants: PhysicalConstants,
    dt: float | None,
) -> dict:
    """h^2-scaled budgets with a uniform safety factor of 10.

    Leading stencil-error constants: laplacian error h^2/12 * sum d^4f,
    |d^4 (mode)| <= lambda^4 |f| per axis; the Q budget is amplified by
    max|R| / min unmasked |R|.
    """
    h2 = max(grid.spacing) ** 2
    lam4 = max(lam_max, 1.0) ** 4
    dt2 = dt**2 if dt is not None else 0.0
    level_scale = constants.hbar**2 * lam4 / (2.0 * constants.mass)
    tol = {
        "helmholtz_amplitude": 10.0 * h2 * lam4 * amp_scale * grid.dim / 12.0 + 1e-9,
        "helmholtz_phase": 10.0 * h2 * lam4 * num_scale * grid.dim / 12.0 + 1e-9,
        "q_constancy": 10.0 * h2 * level_scale * amp_ratio / 12.0 + 1e-12,
        "continuity": 10.0 * (h2 + dt2) * lam4 * amp_scale * num_scale + 1e-10,
        "qhj": 1e-12,
        "inhomogeneous": 10.0
        * (h2 + dt2)
        * lam4
        * max(amp_scale * 2.0 * constants.mass, num_scale, 1.0)
        + 1e-9,
        "gauge": 1e-12,
        "trajectory": 1e-3,
    }
    return tol


def _require_helmholtz(f: ScalarField, lam: float, tol: float, label: str):
    entry = verify_helmholtz(f, lam, tol, name=f"helmholtz_{label}")
    if not entry.passed:
        raise ConstructionError(
            f"{label} field fails the Helmholtz constraint for lambda={lam}: "
            f"max interior residual {entry.measured:.3e} > {tol:.3e}"
        )
    return entry


def construct_stationary(
    R: ScalarField,
    S_tilde: ScalarField,
    E: float,
    lam: float,
    constants: PhysicalConstants,
    *,
    eps_node_rel: float = DEFAULT_EPS_NODE_REL,
    tolerances: dict | None = None,
    metadata: dict | None = None,
) -> SemiclassicalScenario:
    """Build the most general stationary scenario from a Helmholtz pair.

    Stores S = S_tilde/R, V = E - Q - (grad S)^2/2m on unmasked nodes, and
    the phase convention phi(x, t) = S(x) - E t.
    """
    if R.grid != S_tilde.grid:
        raise ConstructionError("amplitude and phase numerator grids differ")
    grid = R.grid
    eps_node = eps_node_rel * R.max_abs()
    mask = node_mask_for(R.values, eps_node)
    if mask.all():
        raise DegenerateAmplitudeError("all nodes masked; amplitude is degenerate")

    interior = grid.interior_mask() & ~mask
    if not interior.any():
        raise DegenerateAmplitudeError("no unmasked interior nodes")
    amp_ratio = float(R.max_abs() / np.min(np.abs(R.values[interior])))
    tol = _tolerance_defaults(
        grid, lam, R.max_abs(), S_tilde.max_abs(), amp_ratio, constants, None
    )
    if tolerances:
        tol.update(tolerances)

    _require_helmholtz(R, lam, tol["helmholtz_amplitude"], "amplitude")
    _require_helmholtz(S_tilde, lam, tol["helmholtz_phase"], "phase_numerator")

    Q, _ = quantum_potential(R, constants, eps_node)
    g_phase = ratio_gradient(S_tilde, R, mask)
    grad_sq = sum(g * g for g in g_phase)
    v = np.where(
        mask, 0.0, E - Q.values - grad_sq / (2.0 * constants.mass)
    )
    phase = masked_ratio(S_tilde.values, R.values, mask)

    meta = {"finite_box_truncation": True, "phase_form": "S(x) - E*t"}
    if metadata:
        meta.update(metadata)
    return SemiclassicalScenario(
        constants=constants,
        grid=grid,
        case=CASE_STATIONARY,
        amplitude=(R,),
        phase_numerator=(S_tilde,),
        potential=(ScalarField(grid, v),),
        quantum_potential=(Q,),
        phase=(ScalarField(grid, phase),),
        phase_gradient=(tuple(g_phase),),
        node_masks=(mask,),
        eps_node=eps_node,
        eps_node_rel=eps_node_rel,
        tolerances=tol,
        energy=float(E),
        lam=float(lam),
        metadata=meta,
    )


def construct_time_dependent(
    R_seq: Sequence[ScalarField],
    phi_tilde_seq: Sequence[ScalarField],
    schedule: LambdaSchedule,
    constants: PhysicalConstants,
    *,
    eps_node_rel: float = DEFAULT_EPS_NODE_REL,
    tolerances: dict | None = None,
    metadata: dict | None = None,
) -> SemiclassicalScenario:
    """Time-dependent construction from per-slice Helmholtz amplitudes and
    the driven-phase solutions phi_tilde of (grad^2 + lambda^2) phi_tilde =
    -2m dR/dt."""
    n = len(R_seq)
    if n < 3:
        raise ConstructionError("need at least 3 time samples")
    if len(phi_tilde_seq) != n:
        raise ConstructionError("amplitude and phase sequences differ in length")
    if len(schedule.times) != n:
        raise ConstructionError("schedule length does not match field sequences")
    grid = R_seq[0].grid
    for f in list(R_seq) + list(phi_tilde_seq):
        if f.grid != grid:
            raise ConstructionError("all slices must share one grid")
    dt = schedule.dt
    times = np.array(schedule.times)

    R_stack = np.stack([f.values for f in R_seq])
    phi_stack = np.stack([f.values for f in phi_tilde_seq])
    eps_node = eps_node_rel * float(np.max(np.abs(R_stack)))
    mask_stack = node_mask_for(R_stack, eps_node)
    if mask_stack.all():
        raise DegenerateAmplitudeError("all nodes masked in every slice")
    for k in range(n - 1):
        flipped = float(np.mean(mask_stack[k] ^ mask_stack[k + 1]))
        if flipped > MASK_MISMATCH_LIMIT:
            raise MaskMismatchError(
                f"nodal mask changes on {flipped:.1%} of nodes between slices "
                f"{k} and {k + 1} (limit {MASK_MISMATCH_LIMIT:.0%})"
            )

    interior = grid.interior_mask()
    unmasked_interior = interior[None, ...] & ~mask_stack
    if not unmasked_interior.any():
        raise DegenerateAmplitudeError("no unmasked interior nodes in any slice")
    amp_ratio = float(
        np.max(np.abs(R_stack)) / np.min(np.abs(R_stack[unmasked_interior]))
    )
    lam_max = float(np.max(schedule.values))
    num_scale = float(np.max(np.abs(phi_stack)))
    tol = _tolerance_defaults(
        grid, lam_max, float(np.max(np.abs(R_stack))), num_scale, amp_ratio, constants, dt
    )
    if tolerances:
        tol.update(tolerances)

    lam_k = [float(schedule.value_at(t)) for t in times]
    for k in range(n):
        _require_helmholtz(
            R_seq[k], lam_k[k], tol["helmholtz_amplitude"], f"amplitude[{k}]"
        )

    # driven-phase residual: grad^2 phi~ + lambda^2 phi~ + 2m dR/dt = 0
    dR = time_derivative_values(R_stack, dt)
    for k in range(n):
        res = (
            helmholtz_residual_values(phi_tilde_seq[k], lam_k[k])
            + 2.0 * constants.mass * dR[k]
        )
        measured = float(np.max(np.abs(res[interior])))
        if measured > tol["inhomogeneous"]:
            raise ConstructionError(
                f"phase_numerator[{k}] violates the driven Helmholtz equation: "
                f"max interior residual {measured:.3e} > {tol['inhomogeneous']:.3e}"
            )

    phase_stack = masked_ratio(phi_stack, R_stack, mask_stack)
    dphase = ratio_time_derivative(phi_stack, R_stack, dt, mask_stack)

    amplitudes, numerators, potentials, q_fields, phases, gradients, masks = (
        [], [], [], [], [], [], []
    )
    for k in range(n):
        Q, _ = quantum_potential(R_seq[k], constants, eps_node)
        g_phase = ratio_gradient(phi_tilde_seq[k], R_seq[k], mask_stack[k])
        grad_sq = sum(g * g for g in g_phase)
        v = np.where(
            mask_stack[k],
            0.0,
            -dphase[k] - Q.values - grad_sq / (2.0 * constants.mass),
        )
        amplitudes.append(R_seq[k])
        numerators.append(phi_tilde_seq[k])
        potentials.append(ScalarField(grid, v))
        q_fields.append(Q)
        phases.append(ScalarField(grid, phase_stack[k]))
        gradients.append(tuple(g_phase))
        masks.append(mask_stack[k])

    meta = {"finite_box_truncation": True, "phase_form": "phi_tilde/R per slice"}
    if metadata:
        meta.update(metadata)
    return SemiclassicalScenario(
        constants=constants,
        grid=grid,
        case=CASE_TIME_DEPENDENT,
        amplitude=tuple(amplitudes),
        phase_numerator=tuple(numerators),
        potential=tuple(potentials),
        quantum_potential=tuple(q_fields),
        phase=tuple(phases),
        phase_gradient=tuple(gradients),
        node_masks=tuple(masks),
        eps_node=eps_node,
        eps_node_rel=eps_node_rel,
        tolerances=tol,
        schedule=schedule,
        times=times,
        metadata=meta,
    )


def restricted_ansatz_numerator(
    R: ScalarField, flux_constant: float, eps_node: float | None = None
) -> ScalarField:
    """Reduced phase for the restricted 1D family R^2 dS/dx = const.

    Integrates dS/dx = c / R^2 by cumulative trapezoid and returns
    S_tilde = R * S, which satisfies the Helmholtz constraint whenever R
    does.  Requires a 1D amplitude with no nodal points (the family breaks
    down at nodes of R).
    """
    grid = R.grid
    if grid.dim != 1:
        raise ValueError("the restricted ansatz is one-dimensional")
    if eps_node is None:
        eps_node = DEFAULT_EPS_NODE_REL * R.max_abs()
    if node_mask_for(R.values, eps_node).any():
        raise ValueError(
            "amplitude has nodal points; the restricted family R^2 S' = const "
            "is singular there"
        )
    x = grid.axes()[0]
    dS = flux_constant / R.values**2
    S = np.concatenate(([0.0], cumulative_trapezoid(dS, x)))
    return ScalarField(grid, R.values * S)


def gauge_shift(obj, shift: GaugeShift):
    """Apply a time-dependent Hamiltonian offset f(t).

    Scenarios keep their payload fields and gain the gauge block (the
    effective potential becomes V + f(t), the phase gains hbar*zeta(t), the
    amplitude and quantum potential are untouched).  Evolution results get
    their stored slices multiplied by exp(i zeta(t_k)).
    """
    if isinstance(obj, SemiclassicalScenario):
        if obj.gauge is not None:
            if obj.gauge.times.shape != shift.times.shape or not np.allclose(
                obj.gauge.times, shift.times
            ):
                raise ValueError("time-mesh mismatch between existing and new gauge")
            shift = GaugeShift(shift.times, obj.gauge.f_values + shift.f_values)
        if not obj.is_stationary:
            if obj.times.shape != shift.times.shape or not np.allclose(
                obj.times, shift.times
            ):
                raise ValueError("time-mesh mismatch between scenario and gauge")
        return dataclasses.replace(obj, gauge=shift)
    if hasattr(obj, "psi_history") and hasattr(obj, "times"):
        zeta = shift.zeta_at(obj.times)
        history = tuple(
            ComplexField(psi.grid, psi.values * np.exp(1j * z))
            for psi, z in zip(obj.psi_history, zeta)
        )
        return dataclasses.replace(obj, psi_history=history, gauge=shift)
    raise TypeError(f"cannot gauge-shift a {type(obj).__name__}")
