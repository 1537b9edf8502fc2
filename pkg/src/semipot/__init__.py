"""semipot: build classical potentials whose quantum dynamics is classical.

The construction pairs Helmholtz amplitudes with reduced phases, assembles
the matching classical potential, and verifies the claim by evolving the
Schrodinger equation and comparing Bohmian against Newtonian trajectories.
"""
from .fields import (
    BOUNDARY_DIRICHLET,
    BOUNDARY_PERIODIC,
    ComplexField,
    Grid,
    PhysicalConstants,
    ScalarField,
    divergence,
    gradient,
    laplacian,
)
from .helmholtz import (
    HelmholtzMode,
    LambdaSchedule,
    ResonanceError,
    evaluate_mode,
    quantum_level,
    solve_inhomogeneous,
    time_derivative,
    verify_helmholtz,
    wavenumber_from_level,
)
from .potentials import (
    ConstructionError,
    DegenerateAmplitudeError,
    GaugeShift,
    MaskMismatchError,
    SemiclassicalScenario,
    construct_stationary,
    construct_time_dependent,
    gauge_shift,
    quantum_potential,
    restricted_ansatz_numerator,
)
from .dynamics import (
    EvolutionResult,
    TrajectorySet,
    UnitarityError,
    bohmian_velocity,
    compare_trajectories,
    evolve_scenario,
    evolve_schrodinger,
    guidance_matched_ics,
    integrate_bohmian,
    integrate_classical,
    polar_decompose,
)
from .verify import (
    ConvergenceFit,
    ReportEntry,
    VerificationReport,
    check_madelung,
    check_madelung_evolution,
    check_q_constancy,
    fit_convergence,
    scenario_report,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
