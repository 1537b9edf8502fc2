"""Pure-numpy reference implementation of the hot kernels.

The compiled backend (`semipot.kernels._core`) implements the same three
entry points with identical operation ordering, so results agree bitwise.
Particles are vectorized here; the compiled core loops per particle.

Shared conventions:
  * fields arrive flattened C-order, one row per stored time slice;
  * masks use 1 = excluded;
  * trajectory flags: 0 = completed, 1 = escaped the box, 2 = entered a
    masked region.  Truncated particles keep their last valid position in
    the remaining path rows (never extrapolated) and `valid_steps` records
    the index of the last valid sample.
"""
from __future__ import annotations

import itertools
from collections import deque

import numpy as np

FLAG_OK = 0
FLAG_ESCAPED = 1
FLAG_MASKED = 2

is_compiled = False


def _sample(field_rows, masks_row_a, masks_row_b, points, extents, origin, spacing, periodic):
    """Multilinear sample of dim field components at P points.

    field_rows: (dim, n_flat) values of one time-blended field (already
    blended outside); masks_row_*: (n_flat,) uint8 for the two bracketing
    slices (either may be None).  Returns (values (dim, P), ok (P,) bool).
    """
    dim = len(extents)
    P = points.shape[0]
    ok = np.ones(P, dtype=bool)
    idx0 = np.empty((dim, P), dtype=np.int64)
    frac = np.empty((dim, P))
    for d in range(dim):
        s = (points[:, d] - origin[d]) / spacing[d]
        if periodic:
            # same expression as the compiled core (not np.mod), for parity
            s = s - np.floor(s / extents[d]) * extents[d]
        else:
            bad = (s < 0.0) | (s > extents[d] - 1)
            ok &= ~bad
            s = np.clip(s, 0.0, extents[d] - 1)
        i = np.floor(s).astype(np.int64)
        i = np.minimum(i, extents[d] - 1 if periodic else extents[d] - 2)
        idx0[d] = i
        frac[d] = s - i
    # flat strides, C order
    strides = np.empty(dim, dtype=np.int64)
    acc = 1
    for d in range(dim - 1, -1, -1):
        strides[d] = acc
        acc *= extents[d]
    values = np.zeros((field_rows.shape[0], P))
    masked = np.zeros(P, dtype=bool)
    for corner in range(1 << dim):
        flat = np.zeros(P, dtype=np.int64)
        weight = np.ones(P)
        for d in range(dim):
            if (corner >> d) & 1:
                i = idx0[d] + 1
                if periodic:
                    i = np.where(i >= extents[d], i - extents[d], i)
                weight = weight * frac[d]
            else:
                i = idx0[d]
                weight = weight * (1.0 - frac[d])
            flat = flat + i * strides[d]
        for c in range(field_rows.shape[0]):
            values[c] += field_rows[c, flat] * weight
        if masks_row_a is not None:
            masked |= masks_row_a[flat] != 0
        if masks_row_b is not None:
            masked |= masks_row_b[flat] != 0
    return values, ok, masked


def _slice_bracket(t, slice_t0, slice_dt, n_slices):
    """Index and weight of the slice pair bracketing time t."""
    if n_slices == 1:
        return 0, 0, 0.0
    s = (t - slice_t0) / slice_dt
    j = int(np.floor(s))
    j = max(0, min(j, n_slices - 2))
    w = s - j
    w = min(max(w, 0.0), 1.0)
    return j, j + 1, w


def _blend(field_slices, j0, j1, w):
    if w == 0.0:
        return field_slices[j0]
    return field_slices[j0] * (1.0 - w) + field_slices[j1] * w


def integrate_velocity_paths(
    v_slices: np.ndarray,      # (S, dim, n_flat)
    mask_slices: np.ndarray,   # (S, n_flat) uint8
    slice_t0: float,
    slice_dt: float,
    extents: np.ndarray,
    origin: np.ndarray,
    spacing: np.ndarray,
    periodic: int,
    x0: np.ndarray,            # (P, dim)
    t0: float,
    dt: float,
    n_steps: int,
):
    """RK4 integration of xdot = v(x, t) with multilinear space and linear
    time interpolation between stored slices."""
    S, dim, _ = v_slices.shape
    P = x0.shape[0]
    paths = np.empty((P, n_steps + 1, dim))
    paths[:, 0, :] = x0
    valid = np.full(P, n_steps, dtype=np.int64)
    flags = np.zeros(P, dtype=np.uint8)
    active = np.ones(P, dtype=bool)
    x = np.array(x0, dtype=np.float64)

    def eval_v(points, t):
        j0, j1, w = _slice_bracket(t, slice_t0, slice_dt, S)
        rows = _blend(v_slices, j0, j1, w)
        vals, ok, masked = _sample(
            rows, mask_slices[j0], mask_slices[j1], points,
            extents, origin, spacing, periodic,
        )
        return vals.T, ok, masked

    # flag particles starting outside/masked at step 0
    _, ok0, masked0 = eval_v(x, t0)
    flags[~ok0] = FLAG_ESCAPED
    flags[ok0 & masked0] = FLAG_MASKED
    newly = ~ok0 | masked0
    valid[newly] = 0
    active &= ~newly

    for k in range(n_steps):
        t = t0 + k * dt
        k1, ok1, m1 = eval_v(x, t)
        k2, ok2, m2 = eval_v(x + (dt / 2.0) * k1, t + dt / 2.0)
        k3, ok3, m3 = eval_v(x + (dt / 2.0) * k2, t + dt / 2.0)
        k4, ok4, m4 = eval_v(x + dt * k3, t + dt)
        x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok = ok1 & ok2 & ok3 & ok4
        masked = m1 | m2 | m3 | m4
        # final position must itself be inside and unmasked
        _, ok_end, m_end = eval_v(x_new, t + dt)
        ok &= ok_end
        masked |= m_end
        stops = active & (~ok | masked)
        flags[stops & ~ok] = FLAG_ESCAPED
        flags[stops & ok & masked] = FLAG_MASKED
        valid[stops] = k
        active &= ~stops
        x = np.where(active[:, None], x_new, x)
        paths[:, k + 1, :] = x
    return paths, valid, flags


def integrate_force_paths(
    f_slices: np.ndarray,      # (S, dim, n_flat) force field
    mask_slices: np.ndarray,   # (S, n_flat) uint8
    slice_t0: float,
    slice_dt: float,
    extents: np.ndarray,
    origin: np.ndarray,
    spacing: np.ndarray,
    periodic: int,
    x0: np.ndarray,            # (P, dim)
    v0: np.ndarray,            # (P, dim)
    inv_mass: float,
    t0: float,
    dt: float,
    n_steps: int,
):
    """RK4 integration of m xddot = F(x, t) (state (x, v))."""
    S, dim, _ = f_slices.shape
    P = x0.shape[0]
    paths = np.empty((P, n_steps + 1, dim))
    paths[:, 0, :] = x0
    valid = np.full(P, n_steps, dtype=np.int64)
    flags = np.zeros(P, dtype=np.uint8)
    active = np.ones(P, dtype=bool)
    x = np.array(x0, dtype=np.float64)
    v = np.array(v0, dtype=np.float64)

    def eval_a(points, t):
        j0, j1, w = _slice_bracket(t, slice_t0, slice_dt, S)
        rows = _blend(f_slices, j0, j1, w)
        vals, ok, masked = _sample(
            rows, mask_slices[j0], mask_slices[j1], points,
            extents, origin, spacing, periodic,
        )
        return vals.T * inv_mass, ok, masked

    _, ok0, masked0 = eval_a(x, t0)
    flags[~ok0] = FLAG_ESCAPED
    flags[ok0 & masked0] = FLAG_MASKED
    newly = ~ok0 | masked0
    valid[newly] = 0
    active &= ~newly

    for k in range(n_steps):
        t = t0 + k * dt
        a1, ok1, m1 = eval_a(x, t)
        k1x, k1v = v, a1
        a2, ok2, m2 = eval_a(x + (dt / 2.0) * k1x, t + dt / 2.0)
        k2x, k2v = v + (dt / 2.0) * k1v, a2
        a3, ok3, m3 = eval_a(x + (dt / 2.0) * k2x, t + dt / 2.0)
        k3x, k3v = v + (dt / 2.0) * k2v, a3
        a4, ok4, m4 = eval_a(x + dt * k3x, t + dt)
        k4x, k4v = v + dt * k3v, a4
        x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ok = ok1 & ok2 & ok3 & ok4
        masked = m1 | m2 | m3 | m4
        _, ok_end, m_end = eval_a(x_new, t + dt)
        ok &= ok_end
        masked |= m_end
        stops = active & (~ok | masked)
        flags[stops & ~ok] = FLAG_ESCAPED
        flags[stops & ok & masked] = FLAG_MASKED
        valid[stops] = k
        active &= ~stops
        x = np.where(active[:, None], x_new, x)
        v = np.where(active[:, None], v_new, v)
        paths[:, k + 1, :] = x
    return paths, valid, flags


def floodfill_unwrap(
    angles: np.ndarray,   # (n_flat,) wrapped phase in (-pi, pi]
    mask: np.ndarray,     # (n_flat,) uint8, 1 = excluded
    extents: np.ndarray,
    periodic: int,
    start: int,
):
    """Breadth-first unwrap: returns integer 2*pi turn counts per node.

    Unmasked nodes are visited from `start` (then from the lowest-index
    unvisited node per extra component); each neighbor's turn count is
    chosen to keep the phase jump below pi.  Returns
    (turns int64, component int32, n_components).
    """
    dim = len(extents)
    n = angles.shape[0]
    strides = np.empty(dim, dtype=np.int64)
    acc = 1
    for d in range(dim - 1, -1, -1):
        strides[d] = acc
        acc *= extents[d]
    turns = np.zeros(n, dtype=np.int64)
    comp = np.full(n, -1, dtype=np.int32)
    two_pi = 2.0 * np.pi

    def neighbors(flat):
        coords = []
        rem = flat
        for d in range(dim):
            coords.append(rem // strides[d])
            rem = rem % strides[d]
        for d in range(dim):
            for step in (-1, 1):
                c = coords[d] + step
                if periodic:
                    if c < 0:
                        c += extents[d]
                    elif c >= extents[d]:
                        c -= extents[d]
                elif c < 0 or c >= extents[d]:
                    continue
                yield flat + (c - coords[d]) * strides[d]

    n_components = 0
    seeds = itertools.chain((int(start),), range(n))
    queue = deque()
    for seed in seeds:
        if mask[seed] or comp[seed] >= 0:
            continue
        comp[seed] = n_components
        n_components += 1
        queue.append(seed)
        while queue:
            cur = queue.popleft()
            phi_cur = angles[cur] + two_pi * turns[cur]
            for nb in neighbors(cur):
                if mask[nb] or comp[nb] >= 0:
                    continue
                diff = (phi_cur - angles[nb]) / two_pi
                turns[nb] = int(np.floor(diff + 0.5))
                comp[nb] = comp[cur]
                queue.append(nb)
    return turns, comp, n_components
