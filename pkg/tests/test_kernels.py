"""Backend parity and behavior of the trajectory/unwrap kernels."""
import numpy as np
import pytest

from semipot.kernels import available_backends, backend_name, FLAG_ESCAPED, FLAG_MASKED, FLAG_OK

BACKENDS = available_backends()
HAS_COMPILED = "compiled" in BACKENDS

needs_compiled = pytest.mark.skipif(
    not HAS_COMPILED, reason="compiled kernel extension not built"
)


def _velocity_problem(dim, periodic, seed=0, n_slices=4, masked_band=False):
    rng = np.random.default_rng(seed)
    extents = np.array([24, 17, 12][:dim], dtype=np.int64)
    origin = np.zeros(dim)
    spacing = np.full(dim, 0.1)
    n_flat = int(np.prod(extents))
    v = 0.3 * rng.standard_normal((n_slices, dim, n_flat))
    masks = np.zeros((n_slices, n_flat), dtype=np.uint8)
    if masked_band:
        masks[:, n_flat // 2 : n_flat // 2 + max(1, n_flat // 20)] = 1
    box_hi = (extents - 1) * spacing
    P = 9
    x0 = np.stack(
        [rng.uniform(0.25 * hi, 0.75 * hi, size=P) for hi in box_hi], axis=1
    )
    return dict(
        v_slices=np.ascontiguousarray(v),
        mask_slices=np.ascontiguousarray(masks),
        slice_t0=0.0,
        slice_dt=0.25,
        extents=extents,
        origin=origin,
        spacing=spacing,
        periodic=int(periodic),
        x0=np.ascontiguousarray(x0),
        t0=0.0,
        dt=0.01,
        n_steps=70,
    )


@needs_compiled
@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("periodic", [False, True])
def test_velocity_paths_bitwise_parity(dim, periodic):
    kw = _velocity_problem(dim, periodic, seed=dim + 10 * periodic, masked_band=True)
    ref = BACKENDS["python"].integrate_velocity_paths(**kw)
    core = BACKENDS["compiled"].integrate_velocity_paths(**kw)
    for a, b in zip(ref, core):
        np.testing.assert_array_equal(a, b)


@needs_compiled
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_force_paths_bitwise_parity(dim):
    kw = _velocity_problem(dim, periodic=False, seed=dim + 40)
    kw["f_slices"] = kw.pop("v_slices")
    rng = np.random.default_rng(99)
    kw["v0"] = np.ascontiguousarray(0.1 * rng.standard_normal(kw["x0"].shape))
    kw["inv_mass"] = 0.5
    ref = BACKENDS["python"].integrate_force_paths(**kw)
    core = BACKENDS["compiled"].integrate_force_paths(**kw)
    for a, b in zip(ref, core):
        np.testing.assert_array_equal(a, b)


@needs_compiled
@pytest.mark.parametrize("periodic", [False, True])
def test_unwrap_bitwise_parity(periodic):
    rng = np.random.default_rng(3)
    extents = np.array([31, 23], dtype=np.int64)
    x, y = np.meshgrid(
        np.linspace(0, 4 * np.pi, extents[0]),
        np.linspace(0, 3 * np.pi, extents[1]),
        indexing="ij",
    )
    phase = 1.3 * x - 0.7 * y + 0.05 * rng.standard_normal(x.shape)
    angles = np.ascontiguousarray(np.angle(np.exp(1j * phase)).ravel())
    mask = np.zeros(angles.size, dtype=np.uint8)
    mask[rng.choice(angles.size, size=30, replace=False)] = 1
    start = int(np.argmin(mask))
    args = (angles, mask, extents, int(periodic), start)
    ref = BACKENDS["python"].floodfill_unwrap(*args)
    core = BACKENDS["compiled"].floodfill_unwrap(*args)
    np.testing.assert_array_equal(ref[0], core[0])
    np.testing.assert_array_equal(ref[1], core[1])
    assert ref[2] == core[2]


def _active_backend_objects():
    return [BACKENDS[name] for name in sorted(BACKENDS)]


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_straight_line_motion(backend):
    # constant velocity field -> x(t) = x0 + v t
    extents = np.array([64], dtype=np.int64)
    v = np.full((1, 1, 64), 0.5)
    masks = np.zeros((1, 64), dtype=np.uint8)
    x0 = np.array([[1.0]])
    paths, valid, flags = backend.integrate_velocity_paths(
        v, masks, 0.0, 1.0, extents, np.zeros(1), np.full(1, 0.1), 0,
        x0, 0.0, 0.01, 100,
    )
    assert flags[0] == FLAG_OK and valid[0] == 100
    np.testing.assert_allclose(paths[0, -1, 0], 1.5, atol=1e-12)


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_escape_truncates_with_flag(backend):
    extents = np.array([32], dtype=np.int64)
    v = np.full((1, 1, 32), 1.0)
    masks = np.zeros((1, 32), dtype=np.uint8)
    x0 = np.array([[2.9]])  # box is [0, 3.1]
    paths, valid, flags = backend.integrate_velocity_paths(
        v, masks, 0.0, 1.0, extents, np.zeros(1), np.full(1, 0.1), 0,
        x0, 0.0, 0.01, 100,
    )
    assert flags[0] == FLAG_ESCAPED
    assert valid[0] < 100
    # the path is frozen, never extrapolated
    np.testing.assert_array_equal(
        paths[0, valid[0] :, 0], paths[0, valid[0], 0]
    )
    assert paths[0, valid[0], 0] <= 3.1


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_masked_region_truncates_with_flag(backend):
    extents = np.array([32], dtype=np.int64)
    v = np.full((1, 1, 32), 1.0)
    masks = np.zeros((1, 32), dtype=np.uint8)
    masks[0, 20:23] = 1  # band at x in [2.0, 2.2]
    x0 = np.array([[1.0]])
    paths, valid, flags = backend.integrate_velocity_paths(
        v, masks, 0.0, 1.0, extents, np.zeros(1), np.full(1, 0.1), 0,
        x0, 0.0, 0.01, 150,
    )
    assert flags[0] == FLAG_MASKED
    assert paths[0, valid[0], 0] < 2.0


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_periodic_wrap_continues(backend):
    extents = np.array([32], dtype=np.int64)
    v = np.full((1, 1, 32), 1.0)
    masks = np.zeros((1, 32), dtype=np.uint8)
    x0 = np.array([[3.0]])  # period is 3.2
    paths, valid, flags = backend.integrate_velocity_paths(
        v, masks, 0.0, 1.0, extents, np.zeros(1), np.full(1, 0.1), 1,
        x0, 0.0, 0.01, 100,
    )
    assert flags[0] == FLAG_OK
    np.testing.assert_allclose(paths[0, -1, 0], 4.0, atol=1e-12)


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_unwrap_recovers_linear_ramp(backend):
    n = 200
    x = np.linspace(0.0, 6 * np.pi, n)
    true_phase = 2.0 * x
    angles = np.ascontiguousarray(np.angle(np.exp(1j * true_phase)))
    mask = np.zeros(n, dtype=np.uint8)
    start = 0
    turns, comp, n_components = backend.floodfill_unwrap(
        angles, mask, np.array([n], dtype=np.int64), 0, start
    )
    assert n_components == 1
    unwrapped = angles + 2 * np.pi * turns
    np.testing.assert_allclose(
        unwrapped - unwrapped[0], true_phase - true_phase[0], atol=1e-10
    )


@pytest.mark.parametrize("backend", _active_backend_objects(), ids=sorted(BACKENDS))
def test_unwrap_components_split_at_mask(backend):
    n = 101
    angles = np.zeros(n)
    mask = np.zeros(n, dtype=np.uint8)
    mask[50] = 1
    turns, comp, n_components = backend.floodfill_unwrap(
        angles, mask, np.array([n], dtype=np.int64), 0, 10
    )
    assert n_components == 2
    assert comp[50] == -1
    assert comp[10] != comp[80]


def test_selected_backend_reported():
    assert backend_name() in ("python", "compiled")
