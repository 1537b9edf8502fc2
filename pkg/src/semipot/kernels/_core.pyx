# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the hot kernels.

Operation ordering mirrors semipot.kernels._ref exactly (including the
w == 0 blend short-circuit and the floor(x + 0.5) rounding), so results
agree bitwise with the pure-numpy fallback; the build disables FP
contraction to keep it that way.
"""
import numpy as np

cimport cython
from libc.math cimport floor

FLAG_OK = 0
FLAG_ESCAPED = 1
FLAG_MASKED = 2

cdef unsigned char C_FLAG_ESCAPED = 1
cdef unsigned char C_FLAG_MASKED = 2

is_compiled = True


cdef inline int _locate(
    double* point, long* extents, double* origin, double* spacing,
    int periodic, int dim, long* idx0, double* frac,
) noexcept nogil:
    """Cell index + fraction per axis; returns 0 if the point left the box."""
    cdef int d, ok = 1
    cdef double s
    cdef long n, i
    for d in range(dim):
        n = extents[d]
        s = (point[d] - origin[d]) / spacing[d]
        if periodic:
            s = s - floor(s / n) * n
        else:
            if s < 0.0 or s > n - 1:
                ok = 0
            if s < 0.0:
                s = 0.0
            elif s > n - 1:
                s = <double>(n - 1)
        i = <long>floor(s)
        if periodic:
            if i > n - 1:
                i = n - 1
        else:
            if i > n - 2:
                i = n - 2
        idx0[d] = i
        frac[d] = s - i
    return ok


cdef inline void _corner_weights(
    long* idx0, double* frac, long* extents, long* strides,
    int periodic, int dim, long* flats, double* weights,
) noexcept nogil:
    """Flat index and multilinear weight of each of the 2^dim cell corners."""
    cdef int corner, d
    cdef long flat, i
    cdef double weight
    for corner in range(1 << dim):
        flat = 0
        weight = 1.0
        for d in range(dim):
            if (corner >> d) & 1:
                i = idx0[d] + 1
                if periodic and i >= extents[d]:
                    i -= extents[d]
                weight = weight * frac[d]
            else:
                i = idx0[d]
                weight = weight * (1.0 - frac[d])
            flat = flat + i * strides[d]
        flats[corner] = flat
        weights[corner] = weight


cdef inline int _sample_point(
    double[:, :, ::1] slices, unsigned char[:, ::1] masks,
    long j0, long j1, double w,
    double* point, long* extents, double* origin, double* spacing,
    long* strides, int periodic, int dim, int n_comp,
    double* out, int* masked,
) noexcept nogil:
    """Blend slices j0/j1 at weight w and sample at point. Returns ok."""
    cdef long idx0[3]
    cdef double frac[3]
    cdef long flats[8]
    cdef double weights[8]
    cdef int ok, corner, c
    cdef long flat
    cdef double value
    ok = _locate(point, extents, origin, spacing, periodic, dim, idx0, frac)
    _corner_weights(idx0, frac, extents, strides, periodic, dim, flats, weights)
    masked[0] = 0
    for c in range(n_comp):
        out[c] = 0.0
    for corner in range(1 << dim):
        flat = flats[corner]
        for c in range(n_comp):
            if w == 0.0:
                value = slices[j0, c, flat]
            else:
                value = slices[j0, c, flat] * (1.0 - w) + slices[j1, c, flat] * w
            out[c] = out[c] + value * weights[corner]
        if masks[j0, flat] != 0 or masks[j1, flat] != 0:
            masked[0] = 1
    return ok


cdef inline void _bracket(
    double t, double slice_t0, double slice_dt, long n_slices,
    long* j0, long* j1, double* w,
) noexcept nogil:
    cdef double s
    cdef long j
    if n_slices == 1:
        j0[0] = 0
        j1[0] = 0
        w[0] = 0.0
        return
    s = (t - slice_t0) / slice_dt
    j = <long>floor(s)
    if j < 0:
        j = 0
    if j > n_slices - 2:
        j = n_slices - 2
    j0[0] = j
    j1[0] = j + 1
    w[0] = s - j
    if w[0] < 0.0:
        w[0] = 0.0
    elif w[0] > 1.0:
        w[0] = 1.0


def integrate_velocity_paths(
    double[:, :, ::1] v_slices,
    unsigned char[:, ::1] mask_slices,
    double slice_t0,
    double slice_dt,
    extents_in,
    origin_in,
    spacing_in,
    int periodic,
    double[:, ::1] x0,
    double t0,
    double dt,
    long n_steps,
):
    cdef long S = v_slices.shape[0]
    cdef int dim = <int>v_slices.shape[1]
    cdef long P = x0.shape[0]
    extents_arr = np.ascontiguousarray(extents_in, dtype=np.int64)
    origin_arr = np.ascontiguousarray(origin_in, dtype=np.float64)
    spacing_arr = np.ascontiguousarray(spacing_in, dtype=np.float64)
    cdef long[::1] extents = extents_arr
    cdef double[::1] origin = origin_arr
    cdef double[::1] spacing = spacing_arr

    paths_arr = np.empty((P, n_steps + 1, dim), dtype=np.float64)
    valid_arr = np.full(P, n_steps, dtype=np.int64)
    flags_arr = np.zeros(P, dtype=np.uint8)
    cdef double[:, :, ::1] paths = paths_arr
    cdef long[::1] valid = valid_arr
    cdef unsigned char[::1] flags = flags_arr

    cdef long strides[3]
    cdef long acc = 1
    cdef int d
    for d in range(dim - 1, -1, -1):
        strides[d] = acc
        acc *= extents[d]

    cdef double x[3]
    cdef double xt[3]
    cdef double xn[3]
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double t, w
    cdef long p, k, j0, j1
    cdef int ok, ok_all, masked, masked_any, mflag
    cdef double tmp[3]

    with nogil:
        for p in range(P):
            for d in range(dim):
                x[d] = x0[p, d]
                paths[p, 0, d] = x[d]
            _bracket(t0, slice_t0, slice_dt, S, &j0, &j1, &w)
            ok = _sample_point(v_slices, mask_slices, j0, j1, w, x,
                               &extents[0], &origin[0], &spacing[0], strides,
                               periodic, dim, dim, tmp, &mflag)
            if not ok or mflag:
                flags[p] = C_FLAG_ESCAPED if not ok else C_FLAG_MASKED
                valid[p] = 0
                for k in range(n_steps):
                    for d in range(dim):
                        paths[p, k + 1, d] = x[d]
                continue
            for k in range(n_steps):
                t = t0 + k * dt
                ok_all = 1
                masked_any = 0

                _bracket(t, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(v_slices, mask_slices, j0, j1, w, x,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, k1, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for d in range(dim):
                    xt[d] = x[d] + (dt / 2.0) * k1[d]
                _bracket(t + dt / 2.0, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(v_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, k2, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for d in range(dim):
                    xt[d] = x[d] + (dt / 2.0) * k2[d]
                ok = _sample_point(v_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, k3, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for d in range(dim):
                    xt[d] = x[d] + dt * k3[d]
                _bracket(t + dt, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(v_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, k4, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag

                for d in range(dim):
                    xn[d] = x[d] + (dt / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                ok = _sample_point(v_slices, mask_slices, j0, j1, w, xn,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, tmp, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag

                if not ok_all or masked_any:
                    flags[p] = C_FLAG_ESCAPED if not ok_all else C_FLAG_MASKED
                    valid[p] = k
                    while k < n_steps:
                        for d in range(dim):
                            paths[p, k + 1, d] = x[d]
                        k += 1
                    break
                for d in range(dim):
                    x[d] = xn[d]
                    paths[p, k + 1, d] = x[d]
    return paths_arr, valid_arr, flags_arr


def integrate_force_paths(
    double[:, :, ::1] f_slices,
    unsigned char[:, ::1] mask_slices,
    double slice_t0,
    double slice_dt,
    extents_in,
    origin_in,
    spacing_in,
    int periodic,
    double[:, ::1] x0,
    double[:, ::1] v0,
    double inv_mass,
    double t0,
    double dt,
    long n_steps,
):
    cdef long S = f_slices.shape[0]
    cdef int dim = <int>f_slices.shape[1]
    cdef long P = x0.shape[0]
    extents_arr = np.ascontiguousarray(extents_in, dtype=np.int64)
    origin_arr = np.ascontiguousarray(origin_in, dtype=np.float64)
    spacing_arr = np.ascontiguousarray(spacing_in, dtype=np.float64)
    cdef long[::1] extents = extents_arr
    cdef double[::1] origin = origin_arr
    cdef double[::1] spacing = spacing_arr

    paths_arr = np.empty((P, n_steps + 1, dim), dtype=np.float64)
    valid_arr = np.full(P, n_steps, dtype=np.int64)
    flags_arr = np.zeros(P, dtype=np.uint8)
    cdef double[:, :, ::1] paths = paths_arr
    cdef long[::1] valid = valid_arr
    cdef unsigned char[::1] flags = flags_arr

    cdef long strides[3]
    cdef long acc = 1
    cdef int d
    for d in range(dim - 1, -1, -1):
        strides[d] = acc
        acc *= extents[d]

    cdef double x[3]
    cdef double v[3]
    cdef double xt[3]
    cdef double xn[3]
    cdef double vn[3]
    cdef double a1[3]
    cdef double a2[3]
    cdef double a3[3]
    cdef double a4[3]
    cdef double k1x[3]
    cdef double k2x[3]
    cdef double k3x[3]
    cdef double k4x[3]
    cdef double tmp[3]
    cdef double t, w
    cdef long p, k, j0, j1
    cdef int ok, ok_all, masked_any, mflag, c

    with nogil:
        for p in range(P):
            for d in range(dim):
                x[d] = x0[p, d]
                v[d] = v0[p, d]
                paths[p, 0, d] = x[d]
            _bracket(t0, slice_t0, slice_dt, S, &j0, &j1, &w)
            ok = _sample_point(f_slices, mask_slices, j0, j1, w, x,
                               &extents[0], &origin[0], &spacing[0], strides,
                               periodic, dim, dim, tmp, &mflag)
            if not ok or mflag:
                flags[p] = C_FLAG_ESCAPED if not ok else C_FLAG_MASKED
                valid[p] = 0
                for k in range(n_steps):
                    for d in range(dim):
                        paths[p, k + 1, d] = x[d]
                continue
            for k in range(n_steps):
                t = t0 + k * dt
                ok_all = 1
                masked_any = 0

                _bracket(t, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(f_slices, mask_slices, j0, j1, w, x,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, a1, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for c in range(dim):
                    a1[c] = a1[c] * inv_mass
                    k1x[c] = v[c]
                    xt[c] = x[c] + (dt / 2.0) * k1x[c]
                _bracket(t + dt / 2.0, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(f_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, a2, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for c in range(dim):
                    a2[c] = a2[c] * inv_mass
                    k2x[c] = v[c] + (dt / 2.0) * a1[c]
                    xt[c] = x[c] + (dt / 2.0) * k2x[c]
                ok = _sample_point(f_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, a3, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for c in range(dim):
                    a3[c] = a3[c] * inv_mass
                    k3x[c] = v[c] + (dt / 2.0) * a2[c]
                    xt[c] = x[c] + dt * k3x[c]
                _bracket(t + dt, slice_t0, slice_dt, S, &j0, &j1, &w)
                ok = _sample_point(f_slices, mask_slices, j0, j1, w, xt,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, a4, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag
                for c in range(dim):
                    a4[c] = a4[c] * inv_mass
                    k4x[c] = v[c] + dt * a3[c]

                for c in range(dim):
                    xn[c] = x[c] + (dt / 6.0) * (k1x[c] + 2.0 * k2x[c] + 2.0 * k3x[c] + k4x[c])
                    vn[c] = v[c] + (dt / 6.0) * (a1[c] + 2.0 * a2[c] + 2.0 * a3[c] + a4[c])
                ok = _sample_point(f_slices, mask_slices, j0, j1, w, xn,
                                   &extents[0], &origin[0], &spacing[0], strides,
                                   periodic, dim, dim, tmp, &mflag)
                ok_all = ok_all and ok
                masked_any = masked_any or mflag

                if not ok_all or masked_any:
                    flags[p] = C_FLAG_ESCAPED if not ok_all else C_FLAG_MASKED
                    valid[p] = k
                    while k < n_steps:
                        for d in range(dim):
                            paths[p, k + 1, d] = x[d]
                        k += 1
                    break
                for d in range(dim):
                    x[d] = xn[d]
                    v[d] = vn[d]
                    paths[p, k + 1, d] = x[d]
    return paths_arr, valid_arr, flags_arr


def floodfill_unwrap(
    double[::1] angles,
    unsigned char[::1] mask,
    extents_in,
    int periodic,
    long start,
):
    cdef long n = angles.shape[0]
    extents_arr = np.ascontiguousarray(extents_in, dtype=np.int64)
    cdef long[::1] extents = extents_arr
    cdef int dim = <int>extents.shape[0]

    turns_arr = np.zeros(n, dtype=np.int64)
    comp_arr = np.full(n, -1, dtype=np.int32)
    queue_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] turns = turns_arr
    cdef int[::1] comp = comp_arr
    cdef long[::1] queue = queue_arr

    cdef long strides[3]
    cdef long acc = 1
    cdef int d
    for d in range(dim - 1, -1, -1):
        strides[d] = acc
        acc *= extents[d]

    cdef double two_pi = 2.0 * np.pi
    cdef long head, tail, cur, nb, seed_idx, seed, c0, c1
    cdef long coords[3]
    cdef long rem
    cdef int n_components = 0, step_dir
    cdef double phi_cur, diff

    with nogil:
        for seed_idx in range(-1, n):
            seed = start if seed_idx < 0 else seed_idx
            if mask[seed] != 0 or comp[seed] >= 0:
                continue
            comp[seed] = n_components
            n_components += 1
            head = 0
            tail = 0
            queue[tail] = seed
            tail += 1
            while head < tail:
                cur = queue[head]
                head += 1
                phi_cur = angles[cur] + two_pi * turns[cur]
                rem = cur
                for d in range(dim):
                    coords[d] = rem // strides[d]
                    rem = rem % strides[d]
                for d in range(dim):
                    for step_dir in range(-1, 2, 2):
                        c0 = coords[d]
                        c1 = c0 + step_dir
                        if periodic:
                            if c1 < 0:
                                c1 += extents[d]
                            elif c1 >= extents[d]:
                                c1 -= extents[d]
                        elif c1 < 0 or c1 >= extents[d]:
                            continue
                        nb = cur + (c1 - c0) * strides[d]
                        if mask[nb] != 0 or comp[nb] >= 0:
                            continue
                        diff = (phi_cur - angles[nb]) / two_pi
                        turns[nb] = <long>floor(diff + 0.5)
                        comp[nb] = comp[cur]
                        queue[tail] = nb
                        tail += 1
    return turns_arr, comp_arr, n_components
