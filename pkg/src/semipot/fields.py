"""Rectangular grids, sampled fields, and finite-difference operators.

Everything downstream (Helmholtz checks, potential construction, the
Crank-Nicolson stepper) consumes the types and operators defined here.
All types are immutable snapshots; operators allocate fresh arrays.

Conventions:
  * arrays are C-ordered with axis order (x, y, z), so z varies fastest;
  * second-order central stencils in the interior;
  * "dirichlet_zero" grids use one-sided second-order stencils for first
    derivatives at the boundary and ghost-zero values for the Laplacian
    (the latter keeps the assembled stencil matrix symmetric);
  * "periodic" grids wrap, with period extent * spacing along each axis.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

BOUNDARY_DIRICHLET = "dirichlet_zero"
BOUNDARY_PERIODIC = "periodic"
BOUNDARIES = (BOUNDARY_DIRICHLET, BOUNDARY_PERIODIC)

#: Environment variable selecting the desk-scale node cap.
NODE_CAP_ENV = "SEMIPOT_NODE_CAP"
DEFAULT_NODE_CAP = 4_000_000

MIN_EXTENT = 4  # stencil width requirement


def node_cap() -> int:
    """Maximum total node count a Grid may carry (desk-scale guard)."""
    raw = os.environ.get(NODE_CAP_ENV)
    if raw is None:
        return DEFAULT_NODE_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"{NODE_CAP_ENV} must be an integer, got {raw!r}") from exc
    if cap <= 0:
        raise ValueError(f"{NODE_CAP_ENV} must be positive, got {cap}")
    return cap


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular sampling domain in 1, 2, or 3 dimensions."""

    extents: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    boundary: str = BOUNDARY_DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        dim = len(self.extents)
        if dim not in (1, 2, 3):
            raise ValueError(f"grid dimension must be 1, 2, or 3, got {dim}")
        if len(self.origin) != dim or len(self.spacing) != dim:
            raise ValueError("extents, origin, and spacing must have equal length")
        if any(n < MIN_EXTENT for n in self.extents):
            raise ValueError(
                f"grid too small: every extent must be >= {MIN_EXTENT} "
                f"(stencil width), got {self.extents}"
            )
        if any(not np.isfinite(h) or h <= 0 for h in self.spacing):
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if any(not np.isfinite(v) for v in self.origin):
            raise ValueError(f"grid origin must be finite, got {self.origin}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(
                f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}"
            )
        cap = node_cap()
        if self.n_nodes > cap:
            raise ValueError(
                f"grid has {self.n_nodes} nodes, above the desk-scale cap {cap} "
                f"(override via {NODE_CAP_ENV})"
            )

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def n_nodes(self) -> int:
        n = 1
        for e in self.extents:
            n *= e
        return n

    @property
    def periodic(self) -> bool:
        return self.boundary == BOUNDARY_PERIODIC

    @property
    def cell_volume(self) -> float:
        v = 1.0
        for h in self.spacing:
            v *= h
        return v

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        """Per-axis (low, high) node coordinates.

        For periodic grids the period is extent * spacing; `high` is still
        the last *node*, one spacing short of the wrap point.
        """
        return tuple(
            (o, o + (n - 1) * h)
            for o, n, h in zip(self.origin, self.extents, self.spacing)
        )

    def axes(self) -> list[np.ndarray]:
        return [
            o + h * np.arange(n)
            for o, n, h in zip(self.origin, self.extents, self.spacing)
        ]

    def coords(self) -> list[np.ndarray]:
        """Meshgrid ('ij') coordinate arrays, one per axis, shaped `extents`."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def interior_mask(self, depth: int = 1) -> np.ndarray:
        """True at nodes with full stencil support.

        All nodes for periodic grids; dirichlet grids exclude the outermost
        `depth` layers along every axis (depth 2 for composed stencils such
        as divergence-of-gradient).
        """
        if self.periodic:
            return np.ones(self.extents, dtype=bool)
        mask = np.ones(self.extents, dtype=bool)
        for axis in range(self.dim):
            idx_lo = [slice(None)] * self.dim
            idx_hi = [slice(None)] * self.dim
            idx_lo[axis] = slice(0, depth)
            idx_hi[axis] = slice(-depth, None)
            mask[tuple(idx_lo)] = False
            mask[tuple(idx_hi)] = False
        return mask

    def refined(self, factor: int = 2) -> "Grid":
        """Same box, spacing divided by `factor` (for convergence studies)."""
        if factor < 2:
            raise ValueError("refinement factor must be >= 2")
        if self.periodic:
            extents = tuple(n * factor for n in self.extents)
        else:
            extents = tuple((n - 1) * factor + 1 for n in self.extents)
        spacing = tuple(h / factor for h in self.spacing)
        return Grid(extents, self.origin, spacing, self.boundary)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "extents": list(self.extents),
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "boundary": self.boundary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(
            tuple(d["extents"]), tuple(d["origin"]), tuple(d["spacing"]), d["boundary"]
        )


def _freeze(values: np.ndarray) -> np.ndarray:
    # value-semantic snapshot: always copy, then lock
    values = np.array(values, order="C")
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples on a Grid (amplitudes, actions, energies, ...)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.extents:
            raise ValueError(
                f"field shape {values.shape} does not match grid extents "
                f"{self.grid.extents}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite (no NaN/Inf)")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.coords()), dtype=np.float64))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.extents, float(value)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples on a Grid (wavefunction); tracks its discrete L2 norm."""

    grid: Grid
    values: np.ndarray
    l2_norm: float = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.extents:
            raise ValueError(
                f"field shape {values.shape} does not match grid extents "
                f"{self.grid.extents}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite (no NaN/Inf)")
        object.__setattr__(self, "values", _freeze(values))
        norm = float(
            np.sqrt(np.sum(np.abs(values) ** 2) * self.grid.cell_volume)
        )
        object.__setattr__(self, "l2_norm", norm)

    @classmethod
    def from_polar(
        cls, amplitude: ScalarField, phase: ScalarField, hbar: float
    ) -> "ComplexField":
        return cls(
            amplitude.grid,
            amplitude.values * np.exp(1j * phase.values / hbar),
        )

    def normalized(self) -> "ComplexField":
        if self.l2_norm == 0.0:
            raise ValueError("cannot normalize a zero field")
        return ComplexField(self.grid, self.values / self.l2_norm)

    def abs_field(self) -> ScalarField:
        return ScalarField(self.grid, np.abs(self.values))


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"mass must be positive, got {self.mass}")

    def to_dict(self) -> dict:
        return {"hbar": self.hbar, "mass": self.mass}

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalConstants":
        return cls(float(d["hbar"]), float(d["mass"]))


# ---------------------------------------------------------------------------
# Finite-difference operators (value-level helpers work on raw arrays so the
# same code serves real and complex data).
# ---------------------------------------------------------------------------


def axis_gradient(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """d/dx_axis, second order: central interior, wrap or one-sided at ends."""
    h = grid.spacing[axis]
    out = np.empty_like(values)
    if grid.periodic:
        out[...] = (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h)
        return out

    def sl(*parts):
        idx = [slice(None)] * values.ndim
        idx[axis] = slice(*parts) if len(parts) > 1 else parts[0]
        return tuple(idx)

    out[sl(1, -1)] = (values[sl(2, None)] - values[sl(None, -2)]) / (2.0 * h)
    out[sl(0)] = (
        -3.0 * values[sl(0)] + 4.0 * values[sl(1)] - values[sl(2)]
    ) / (2.0 * h)
    out[sl(-1)] = (
        3.0 * values[sl(-1)] - 4.0 * values[sl(-2)] + values[sl(-3)]
    ) / (2.0 * h)
    return out


def axis_second_derivative(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """d2/dx_axis2, second order; ghost-zero beyond dirichlet boundaries."""
    h = grid.spacing[axis]
    inv_h2 = 1.0 / (h * h)
    if grid.periodic:
        return (
            np.roll(values, -1, axis) - 2.0 * values + np.roll(values, 1, axis)
        ) * inv_h2

    out = np.empty_like(values)

    def sl(*parts):
        idx = [slice(None)] * values.ndim
        idx[axis] = slice(*parts) if len(parts) > 1 else parts[0]
        return tuple(idx)

    out[sl(1, -1)] = (
        values[sl(2, None)] - 2.0 * values[sl(1, -1)] + values[sl(None, -2)]
    ) * inv_h2
    # ghost value 0 outside the boundary
    out[sl(0)] = (values[sl(1)] - 2.0 * values[sl(0)]) * inv_h2
    out[sl(-1)] = (values[sl(-2)] - 2.0 * values[sl(-1)]) * inv_h2
    return out


def gradient_values(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    return [axis_gradient(values, grid, a) for a in range(grid.dim)]


def laplacian_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    out = axis_second_derivative(values, grid, 0)
    for a in range(1, grid.dim):
        out += axis_second_derivative(values, grid, a)
    return out


def gradient(f: ScalarField) -> tuple[ScalarField, ...]:
    """Per-axis first derivatives of a scalar field."""
    return tuple(
        ScalarField(f.grid, g) for g in gradient_values(f.values, f.grid)
    )


def laplacian(f: ScalarField) -> ScalarField:
    """Sum of per-axis second derivatives ((2n+1)-point stencil)."""
    return ScalarField(f.grid, laplacian_values(f.values, f.grid))


def divergence(v: Sequence[ScalarField]) -> ScalarField:
    """Divergence of a vector field given as one ScalarField per axis."""
    if len(v) == 0:
        raise ValueError("divergence needs at least one component")
    grid = v[0].grid
    if len(v) != grid.dim:
        raise ValueError(
            f"expected {grid.dim} components for a {grid.dim}D grid, got {len(v)}"
        )
    out = axis_gradient(v[0].values, grid, 0)
    for a in range(1, grid.dim):
        if v[a].grid != grid:
            raise ValueError("all components must share one grid")
        out += axis_gradient(v[a].values, grid, a)
    return ScalarField(grid, out)


def divergence_values(components: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    out = axis_gradient(components[0], grid, 0)
    for a in range(1, grid.dim):
        out += axis_gradient(components[a], grid, a)
    return out
