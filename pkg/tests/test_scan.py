import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helisparse.geometry import ray
from helisparse.lattice import efficient_sampling_matrix, enumerate_lattice, scan_box
from helisparse.phantom import Ellipsoid, Phantom, shepp_logan_3d
from helisparse.scan import (
    Sinogram,
    add_noise,
    grid_axes_from_lattice,
    read_sinogram,
    simulate,
    simulate_grid,
    uniform_axis,
    write_sinogram,
    write_sinogram_csv,
)
from helisparse.spectral import SupportParams

from helpers import marched_line_integral

SL = shepp_logan_3d(0.49)


def _random_points(rng, geom, n, alpha_scale=1.0):
    a = rng.uniform(-1, 1, n) * geom.fan_half_angle * alpha_scale
    b = rng.uniform(-geom.B, geom.B, n)
    v = rng.uniform(-0.15, 0.15, n)
    return np.column_stack([a, b, v])


def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def test_empty_phantom_gives_zeros(geom, rng):
    sino = simulate(Phantom(()), geom, _random_points(rng, geom, 100))
    assert np.all(sino.values == 0.0)


def test_rays_outside_fan_are_zero(geom, rng):
    n = 500
    a = np.sign(rng.uniform(-1, 1, n)) * rng.uniform(geom.fan_half_angle * 1.0001, 1.5, n)
    pts = np.column_stack([a, rng.uniform(-geom.B, geom.B, n), rng.uniform(-0.5, 0.5, n)])
    assert np.all(simulate(SL, geom, pts).values == 0.0)


def test_simulate_matches_marching(geom, rng):
    pts = _random_points(rng, geom, 400)
    sino = simulate(SL, geom, pts, lattice_tag="test")
    line = ray(pts[:, 0], pts[:, 1], pts[:, 2], geom).unit()
    marched = marched_line_integral(SL, line.origin, line.direction)
    assert np.abs(sino.values - marched).max() < 1e-6
    assert np.count_nonzero(sino.values) > 200
    assert sino.lattice_tag == "test"
    np.testing.assert_array_equal(sino.points, pts)


def test_simulate_grid_matches_scattered(geom):
    axes = (np.linspace(-0.2, 0.2, 5), np.linspace(-3, 3, 7), np.linspace(-0.1, 0.1, 4))
    grid = simulate_grid(SL, geom, axes, views_per_chunk=2)
    flat = simulate(SL, geom, grid.points)
    np.testing.assert_array_equal(grid.flat_values, flat.values)
    np.testing.assert_allclose(grid.spacing, [0.1, 1.0, 0.2 / 3])


@given(st.lists(st.floats(-2, 2), min_size=10, max_size=10))
def test_simulate_linear(dens):
    from helisparse.geometry import HelixGeometry

    geom = HelixGeometry(2.0, 0.2, 0.4, 0.5)
    pts = _random_points(np.random.default_rng(9), geom, 200)
    a = SL.with_densities(dens)
    lhs = simulate(a + SL, geom, pts).values
    rhs = (simulate(a, geom, pts) + simulate(SL, geom, pts)).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())


@pytest.mark.parametrize("delta", [2 * np.pi, 0.9])
def test_helix_shift_symmetry(geom, rng, delta):
    # rotating by delta and lifting by h delta / 2 pi moves the object along with the helix
    rot = _rz(delta)
    lift = np.array([0, 0, geom.h * delta / (2 * np.pi)])
    small = SL.scaled(0.6)
    moved = Phantom(tuple(Ellipsoid(rot @ e.center + lift, e.semiaxes, rot @ e.rotation, e.density) for e in small.ellipsoids))
    pts = _random_points(rng, geom, 300)
    pts[:, 1] = rng.uniform(-2 * np.pi, 2 * np.pi, 300)
    shifted = pts + [0, delta, 0]
    a = simulate(small, geom, pts).values
    b = simulate(moved, geom, shifted).values
    assert np.abs(a - b).max() < 1e-12
    assert np.count_nonzero(a) > 100


def test_simulate_rejects_out_of_range(geom):
    with pytest.raises(ValueError):
        simulate(SL, geom, [[0.0, geom.B * 1.1, 0.0]])
    with pytest.raises(ValueError):
        simulate(SL, geom, [[np.pi / 2, 0.0, 0.0]])


def test_noise(geom, rng):
    pts = _random_points(rng, geom, 100000)
    clean = Sinogram(np.zeros(len(pts)), geom, coords=pts)
    np.testing.assert_array_equal(add_noise(clean, 0.0).values, clean.values)
    a = add_noise(clean, 0.3, seed=4)
    b = add_noise(clean, 0.3, seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, add_noise(clean, 0.3, seed=5).values)
    assert np.var(a.values - clean.values) == pytest.approx(0.09, rel=0.05)
    with pytest.raises(ValueError):
        add_noise(clean, -1.0)


def test_uniform_axis():
    np.testing.assert_allclose(uniform_axis(-1.0, 1.0, 0.5), [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(uniform_axis(-0.9, 0.9, 0.5), [-0.5, 0, 0.5])
    with pytest.raises(ValueError):
        uniform_axis(0, 1, 0)


def test_grid_axes_full_alpha_period():
    from helisparse.lattice import LatticeSpec

    spec = LatticeSpec(np.diag([2 * np.pi / 8, 0.5, 0.25]))
    axes = grid_axes_from_lattice(spec, [[-np.pi, np.pi], [-1, 1], [-0.25, 0.25]])
    assert len(axes[0]) == 8
    assert len(axes[1]) == 5 and len(axes[2]) == 3
    with pytest.raises(ValueError):
        grid_axes_from_lattice(LatticeSpec(np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]])), [[0, 1]] * 3)


def test_sinogram_validation(geom):
    with pytest.raises(ValueError):
        Sinogram(np.zeros(3), geom)
    with pytest.raises(ValueError):
        Sinogram(np.zeros(3), geom, coords=np.zeros((4, 3)))
    with pytest.raises(ValueError):
        Sinogram(np.zeros((2, 2, 2)), geom, axes=(np.zeros(2), np.zeros(3), np.zeros(2)))
    with pytest.raises(ValueError):
        Sinogram(np.zeros(2), geom, coords=np.zeros((2, 3))).spacing


def test_scattered_file_round_trip(tmp_path, geom):
    spec = efficient_sampling_matrix(SupportParams.from_geometry(geom, 66.0))
    box = scan_box(geom, "fan")
    box[1] = [-0.5, 0.5]
    pts = enumerate_lattice(spec, box)
    sino = simulate(SL, geom, pts, lattice_tag=spec.tag)
    path = tmp_path / "s.sino"
    write_sinogram(path, sino, spec.matrix)
    back, matrix = read_sinogram(path)
    np.testing.assert_array_equal(back.values, sino.values)
    np.testing.assert_array_equal(back.points, sino.points)
    np.testing.assert_array_equal(matrix, spec.matrix)
    assert back.lattice_tag == spec.tag
    assert back.geometry.as_dict() == geom.as_dict()
    csv = tmp_path / "s.csv"
    write_sinogram_csv(csv, sino)
    data = np.loadtxt(csv, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 3], sino.values)


def test_grid_file_round_trip(tmp_path, geom):
    axes = (np.linspace(-0.2, 0.2, 3), np.linspace(-1, 1, 4), np.linspace(-0.1, 0.1, 2))
    sino = simulate_grid(SL, geom, axes)
    path = tmp_path / "g.sino"
    write_sinogram(path, sino)
    back, matrix = read_sinogram(path)
    assert matrix is None and back.is_grid
    np.testing.assert_array_equal(back.values, sino.values)
    for x, y in zip(back.axes, axes):
        np.testing.assert_array_equal(x, y)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_sinogram(path)
