"""Verification checks: Q-constancy, Madelung residuals, Helmholtz
residuals, gauge invariance, and convergence-order fits.

Residual maxima are taken over unmasked nodes with full stencil support
(depth 2 where stencils compose, e.g. divergence of a gradient).  Every
entry records the mask fraction; entries with more than 20% of nodes
masked are reported inconclusive rather than passed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import EvolutionResult, bohmian_velocity, polar_decompose
from .fields import divergence_values, gradient_values
from .helmholtz import helmholtz_residual_values, verify_helmholtz
from .potentials import (
    SemiclassicalScenario,
    quantum_potential,
    ratio_gradient,
    ratio_time_derivative,
)
from .report import (
    MASK_FRACTION_LIMIT,
    ReportEntry,
    VerificationReport,
    make_entry,
)
from .helmholtz import time_derivative_values

__all__ = [
    "VerificationReport",
    "ReportEntry",
    "ConvergenceFit",
    "check_q_constancy",
    "check_madelung",
    "check_madelung_evolution",
    "check_helmholtz_entries",
    "check_gauge_invariance",
    "fit_convergence",
    "scenario_report",
    "MASK_FRACTION_LIMIT",
]


def _masked_max(values: np.ndarray, keep: np.ndarray) -> float:
    if not keep.any():
        return float("nan")
    return float(np.max(np.abs(values[keep])))


def check_q_constancy(
    scenario: SemiclassicalScenario, tolerance: float | None = None
) -> ReportEntry:
    """Max over unmasked interior nodes (and slices) of |Q - K(t)|."""
    tol = tolerance if tolerance is not None else scenario.tolerances["q_constancy"]
    interior = scenario.grid.interior_mask()
    worst = 0.0
    times = [0.0] if scenario.is_stationary else list(scenario.times)
    for k, t in enumerate(times):
        Q, mask = quantum_potential(
            scenario.amplitude[k], scenario.constants, scenario.eps_node
        )
        level = scenario.level_at(t)
        dev = _masked_max(Q.values - level, interior & ~mask)
        worst = max(worst, dev)
    return make_entry(
        "q_constancy",
        worst,
        tol,
        mask_fraction=scenario.mask_fraction,
        h_max=max(scenario.grid.spacing),
    )


def check_madelung(
    scenario: SemiclassicalScenario,
    continuity_tolerance: float | None = None,
    qhj_tolerance: float | None = None,
) -> list[ReportEntry]:
    """Continuity and quantum-Hamilton-Jacobi residuals of a scenario.

    All discrete operators match the construction, so the QHJ residual is
    an exactness check of the assembly (1e-12); the continuity residual
    measures the genuine O(h^2) stencil error of div(R^2 grad(phase)).
    """
    tol_c = (
        continuity_tolerance
        if continuity_tolerance is not None
        else scenario.tolerances["continuity"]
    )
    tol_q = (
        qhj_tolerance if qhj_tolerance is not None else scenario.tolerances["qhj"]
    )
    grid = scenario.grid
    constants = scenario.constants
    deep_interior = grid.interior_mask(depth=2)
    m = constants.mass

    worst_c = 0.0
    worst_q = 0.0
    if scenario.is_stationary:
        R = scenario.amplitude[0]
        St = scenario.phase_numerator[0]
        mask = scenario.node_masks[0]
        # continuity, flux form: R^2 grad S = R grad S~ - S~ grad R (smooth)
        gR = gradient_values(R.values, grid)
        gS = gradient_values(St.values, grid)
        flux = [R.values * gS[a] - St.values * gR[a] for a in range(grid.dim)]
        residual_c = divergence_values(flux, grid)
        worst_c = _masked_max(residual_c, deep_interior & ~mask)
        # QHJ: -E + (grad S)^2/2m + V + Q, recomputed from the payloads
        Q, _ = quantum_potential(R, constants, scenario.eps_node)
        g_phase = ratio_gradient(St, R, mask)
        grad_sq = sum(g * g for g in g_phase)
        residual_q = (
            -scenario.energy
            + grad_sq / (2.0 * m)
            + scenario.potential[0].values
            + Q.values
        )
        worst_q = _masked_max(residual_q, ~mask)
    else:
        dt = scenario.schedule.dt
        R_stack = np.stack([f.values for f in scenario.amplitude])
        phi_stack = np.stack([f.values for f in scenario.phase_numerator])
        mask_stack = np.stack(scenario.node_masks)
        dR2 = time_derivative_values(R_stack**2, dt)
        dphase = ratio_time_derivative(phi_stack, R_stack, dt, mask_stack)
        for k, t in enumerate(scenario.times):
            R = scenario.amplitude[k]
            Pt = scenario.phase_numerator[k]
            mask = scenario.node_masks[k]
            gR = gradient_values(R.values, grid)
            gP = gradient_values(Pt.values, grid)
            flux = [
                (R.values * gP[a] - Pt.values * gR[a]) / m for a in range(grid.dim)
            ]
            residual_c = dR2[k] + divergence_values(flux, grid)
            worst_c = max(worst_c, _masked_max(residual_c, deep_interior & ~mask))
            Q, _ = quantum_potential(R, constants, scenario.eps_node)
            g_phase = ratio_gradient(Pt, R, mask)
            grad_sq = sum(g * g for g in g_phase)
            residual_q = (
                dphase[k]
                + grad_sq / (2.0 * m)
                + scenario.potential[k].values
                + Q.values
            )
            worst_q = max(worst_q, _masked_max(residual_q, ~mask))

    frac = scenario.mask_fraction
    return [
        make_entry("continuity_residual", worst_c, tol_c, mask_fraction=frac),
        make_entry("qhj_residual", worst_q, tol_q, mask_fraction=frac),
    ]


def check_madelung_evolution(
    evolution: EvolutionResult,
    scenario: SemiclassicalScenario,
    continuity_tolerance: float,
    qhj_tolerance: float,
    eps_node: float | None = None,
) -> list[ReportEntry]:
    """Madelung residuals measured on an evolved wavefunction history.

    Continuity uses the probability current (no unwrapping); the QHJ check
    unwraps each snapshot and aligns the branch choice at the initial
    max-amplitude node so the time derivative is meaningful.
    """
    grid = evolution.grid
    constants = evolution.constants
    if len(evolution.psi_history) < 3:
        raise ValueError("need at least 3 stored snapshots")
    dt_slices = float(evolution.times[1] - evolution.times[0])
    steps = np.diff(evolution.times)
    if not np.allclose(steps, dt_slices, rtol=1e-9, atol=0.0):
        raise ValueError("snapshot times must be uniform for residual checks")
    m = constants.mass
    hbar = constants.hbar
    deep_interior = grid.interior_mask(depth=2)
    interior = grid.interior_mask()

    rho, currents, masks, phases, q_fields = [], [], [], [], []
    anchor = int(np.argmax(np.abs(evolution.psi_history[0].values)))
    prev_anchor_phi = None
    two_pi_hbar = 2.0 * np.pi * hbar
    for psi in evolution.psi_history:
        dens = np.abs(psi.values) ** 2
        rho.append(dens)
        comps, mask = bohmian_velocity(psi, constants, eps_node)
        currents.append([dens * c for c in comps])
        masks.append(mask)
        polar = polar_decompose(psi, constants, eps_node)
        phi = polar.phase.values.copy()
        anchor_phi = phi.ravel()[anchor]
        if prev_anchor_phi is not None:
            shift = two_pi_hbar * np.floor(
                (prev_anchor_phi - anchor_phi) / two_pi_hbar + 0.5
            )
            phi += shift
            anchor_phi += shift
        prev_anchor_phi = anchor_phi
        phases.append(phi)
        Q, _ = quantum_potential(polar.amplitude, constants, eps_node)
        q_fields.append(Q.values)

    rho_stack = np.stack(rho)
    drho = time_derivative_values(rho_stack, dt_slices)
    phi_stack = np.stack(phases)
    dphi = time_derivative_values(phi_stack, dt_slices)

    worst_c = 0.0
    worst_q = 0.0
    for k, t in enumerate(evolution.times):
        mask = masks[k]
        residual_c = drho[k] + divergence_values(currents[k], grid)
        worst_c = max(worst_c, _masked_max(residual_c, deep_interior & ~mask))
        g_phi = gradient_values(phi_stack[k], grid)
        grad_sq = sum(g * g for g in g_phi)
        v_values = scenario.potential_values_at(float(t))
        residual_q = dphi[k] + grad_sq / (2.0 * m) + v_values + q_fields[k]
        worst_q = max(worst_q, _masked_max(residual_q, interior & ~mask))

    frac = float(np.mean([m_.mean() for m_ in masks]))
    return [
        make_entry(
            "evolution_continuity_residual", worst_c, continuity_tolerance,
            mask_fraction=frac, dt_slices=dt_slices,
        ),
        make_entry(
            "evolution_qhj_residual", worst_q, qhj_tolerance,
            mask_fraction=frac, dt_slices=dt_slices,
        ),
    ]


def check_helmholtz_entries(scenario: SemiclassicalScenario) -> list[ReportEntry]:
    """Helmholtz residual entries for the amplitude and phase numerator."""
    entries = []
    if scenario.is_stationary:
        entries.append(
            verify_helmholtz(
                scenario.amplitude[0],
                scenario.lam,
                scenario.tolerances["helmholtz_amplitude"],
                name="helmholtz_amplitude",
            )
        )
        entries.append(
            verify_helmholtz(
                scenario.phase_numerator[0],
                scenario.lam,
                scenario.tolerances["helmholtz_phase"],
                name="helmholtz_phase_numerator",
            )
        )
        return entries
    interior = scenario.grid.interior_mask()
    dt = scenario.schedule.dt
    R_stack = np.stack([f.values for f in scenario.amplitude])
    dR = time_derivative_values(R_stack, dt)
    worst_amp = 0.0
    worst_drive = 0.0
    for k, t in enumerate(scenario.times):
        lam_k = scenario.lambda_at(float(t))
        res_amp = helmholtz_residual_values(scenario.amplitude[k], lam_k)
        worst_amp = max(worst_amp, _masked_max(res_amp, interior))
        res_drive = (
            helmholtz_residual_values(scenario.phase_numerator[k], lam_k)
            + 2.0 * scenario.constants.mass * dR[k]
        )
        worst_drive = max(worst_drive, _masked_max(res_drive, interior))
    entries.append(
        make_entry(
            "helmholtz_amplitude",
            worst_amp,
            scenario.tolerances["helmholtz_amplitude"],
            mask_fraction=scenario.mask_fraction,
        )
    )
    entries.append(
        make_entry(
            "driven_phase_residual",
            worst_drive,
            scenario.tolerances["inhomogeneous"],
            mask_fraction=scenario.mask_fraction,
        )
    )
    return entries


def check_gauge_invariance(
    base: SemiclassicalScenario,
    gauged: SemiclassicalScenario,
    sample_times=None,
) -> list[ReportEntry]:
    """Mechanical gauge facts: R and Q unchanged, V shifted by exactly f(t),
    phase shifted by exactly hbar*zeta(t)."""
    if gauged.gauge is None:
        raise ValueError("second scenario carries no gauge block")
    shift = gauged.gauge
    if sample_times is None:
        sample_times = shift.times
    tol = base.tolerances["gauge"]
    frac = base.mask_fraction
    entries = []

    amp_dev = max(
        float(np.max(np.abs(a.values - b.values)))
        for a, b in zip(base.amplitude, gauged.amplitude)
    )
    entries.append(
        make_entry("gauge_amplitude_unchanged", amp_dev, 0.0, mask_fraction=frac)
    )

    q_dev = 0.0
    for k in range(base.n_slices):
        q_base, _ = quantum_potential(
            base.amplitude[k], base.constants, base.eps_node
        )
        q_gauged, _ = quantum_potential(
            gauged.amplitude[k], gauged.constants, gauged.eps_node
        )
        q_dev = max(q_dev, float(np.max(np.abs(q_base.values - q_gauged.values))))
    entries.append(
        make_entry("gauge_quantum_potential_unchanged", q_dev, tol, mask_fraction=frac)
    )

    v_dev = 0.0
    phi_dev = 0.0
    hbar = base.constants.hbar
    for t in np.asarray(sample_times, dtype=float):
        expected = base.potential_values_at(t) + shift.f_at(t)
        v_dev = max(v_dev, float(np.max(np.abs(gauged.potential_values_at(t) - expected))))
        expected_phi = base.phase_at(t).values + hbar * shift.zeta_at(t)
        phi_dev = max(
            phi_dev, float(np.max(np.abs(gauged.phase_at(t).values - expected_phi)))
        )
    entries.append(
        make_entry("gauge_potential_shift", v_dev, tol, mask_fraction=frac)
    )
    entries.append(make_entry("gauge_phase_shift", phi_dev, tol, mask_fraction=frac))
    return entries


@dataclass
class ConvergenceFit:
    """Log-log least-squares order fit over >= 3 refinement levels."""

    resolutions: np.ndarray
    errors: np.ndarray
    fitted_order: float
    r_squared: float
    monotone: bool

    @property
    def flagged(self) -> bool:
        return not self.monotone

    def to_dict(self) -> dict:
        return {
            "resolutions": self.resolutions.tolist(),
            "errors": self.errors.tolist(),
            "fitted_order": self.fitted_order,
            "r_squared": self.r_squared,
            "monotone": self.monotone,
        }


def fit_convergence(resolutions, errors) -> ConvergenceFit:
    """Fit error ~ C * resolution^order on a log-log scale.

    `resolutions` (h or dt values) must be strictly decreasing with at
    least 3 levels.  A non-monotone error sequence (or an exact zero) is
    flagged but still reported.
    """
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    if res.size < 3:
        raise ValueError("need at least 3 refinement levels")
    if res.shape != err.shape:
        raise ValueError("resolutions and errors must have matching length")
    if np.any(np.diff(res) >= 0):
        raise ValueError("resolutions must be strictly decreasing")
    monotone = bool(np.all(np.diff(err) < 0)) and bool(np.all(err > 0))
    if np.any(err <= 0):
        return ConvergenceFit(res, err, float("nan"), float("nan"), False)
    log_r = np.log(res)
    log_e = np.log(err)
    slope, intercept = np.polyfit(log_r, log_e, 1)
    fit = slope * log_r + intercept
    ss_res = float(np.sum((log_e - fit) ** 2))
    ss_tot = float(np.sum((log_e - np.mean(log_e)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceFit(res, err, float(slope), r2, monotone)


def scenario_report(
    scenario: SemiclassicalScenario,
    provenance: dict | None = None,
) -> VerificationReport:
    """Assemble the standard scenario checks into one report."""
    report = VerificationReport(provenance=dict(provenance or {}))
    report.provenance.setdefault("finite_box_truncation", True)
    report.provenance.setdefault("mask_fraction", scenario.mask_fraction)
    report.extend(check_helmholtz_entries(scenario))
    report.add(check_q_constancy(scenario))
    report.extend(check_madelung(scenario))
    return report
