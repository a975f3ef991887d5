import numpy as np
import pytest

from helisparse.filterbank import (
    ResamplingError,
    _assign_bins,
    _candidate_offsets,
    _support_par,
    lattice_to_uniform,
    lowpass_filter,
    spectral_mask,
    write_mask_csv,
)
from helisparse.config import load_preset
from helisparse.geometry import HelixGeometry
from helisparse.lattice import LatticeSpec, efficient_sampling_matrix, enumerate_lattice, uniform_sampling_matrix
from helisparse.pipeline import acquire_standard, build_phantom, design
from helisparse.scan import Sinogram, grid_axes_from_lattice
from helisparse.spectral import FrequencySupportSet

from helpers import bandlimited_lattice_case

GEOM = HelixGeometry(2.0, 0.2, 0.4, 0.5)
SUPPORT10 = FrequencySupportSet.from_geometry(GEOM, 10.0)

# periodic test grid: full alpha turn, beta and v handled circularly (pad 0)
NA, NB, NV = 64, 48, 32
DB, DV = 0.05, 0.05


def _periodic_grid(values_fn):
    a = np.arange(NA) * 2 * np.pi / NA - np.pi
    b = (np.arange(NB) - NB // 2) * DB
    v = (np.arange(NV) - NV // 2) * DV
    A, B, V = np.meshgrid(a, b, v, indexing="ij")
    return Sinogram(values_fn(A, B, V), GEOM, axes=(a, b, v))


def _tone(m, kb, kv):
    wb = 2 * np.pi * kb / (NB * DB)
    wv = 2 * np.pi * kv / (NV * DV)
    return (m, wb, wv), _periodic_grid(lambda A, B, V: np.cos(m * A + wb * B + wv * V + 0.3))


def test_in_band_tone_passes():
    w, sino = _tone(2, 1, 1)
    assert SUPPORT10.contains(*w) and SUPPORT10.contains(*(-np.array(w)))
    out = lowpass_filter(sino, SUPPORT10, pad=0.0, rolloff=0.0)
    assert np.abs(out.values - sino.values).max() < 1e-9


def test_out_of_band_tone_removed():
    w, sino = _tone(0, 20, 1)
    assert not SUPPORT10.contains(*w)
    out = lowpass_filter(sino, SUPPORT10, pad=0.0, rolloff=0.0)
    assert np.abs(out.values).max() < 1e-9


def test_lowpass_idempotent(rng):
    sino = _periodic_grid(lambda A, B, V: rng.normal(size=A.shape))
    once = lowpass_filter(sino, SUPPORT10, pad=0.0, rolloff=0.0)
    twice = lowpass_filter(once, SUPPORT10, pad=0.0, rolloff=0.0)
    assert np.abs(twice.values - once.values).max() < 1e-12 * np.abs(once.values).max()
    assert np.abs(once.values - sino.values).max() > 0.1


def test_parseval_and_real_output(rng):
    sino = _periodic_grid(lambda A, B, V: rng.normal(size=A.shape))
    mask = spectral_mask(sino.values.shape, sino.spacing, SUPPORT10)
    spec = np.fft.fftn(sino.values) * mask.weights
    full = np.fft.ifftn(spec)
    assert np.abs(full.imag).max() < 1e-10 * np.abs(full.real).max()
    out = lowpass_filter(sino, SUPPORT10, pad=0.0, rolloff=0.0)
    e_spec = np.sum(np.abs(spec) ** 2) / spec.size
    assert np.sum(out.values**2) == pytest.approx(e_spec, rel=1e-9)


def test_mask_properties():
    mask = spectral_mask((NA, NB, NV), (2 * np.pi / NA, DB, DV), SUPPORT10)
    w = mask.weights
    assert set(np.unique(w)) <= {0.0, 1.0}
    neg = np.roll(w[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
    np.testing.assert_array_equal(w, neg)
    f = mask.frequencies()
    np.testing.assert_allclose(f[0][:5], [0, 1, 2, 3, 4], atol=1e-12)
    soft = spectral_mask((NA, NB, NV), (2 * np.pi / NA, DB, DV), SUPPORT10, rolloff=0.05)
    assert np.all((soft.weights >= 0) & (soft.weights <= w))
    assert np.any((soft.weights > 0) & (soft.weights < 1))
    np.testing.assert_allclose(soft.weights, np.roll(soft.weights[::-1, ::-1, ::-1], 1, axis=(0, 1, 2)), atol=1e-12)


def test_mask_csv(tmp_path):
    mask = spectral_mask((8, 8, 4), (2 * np.pi / 8, 0.5, 0.5), SUPPORT10)
    path = tmp_path / "mask.csv"
    write_mask_csv(path, mask)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    assert len(rows) == np.count_nonzero(mask.weights)
    assert np.all(SUPPORT10.contains(rows[:, 0], rows[:, 1], rows[:, 2]))


def test_lowpass_keeps_energy_of_simulated_scan():
    # the standard scan of the reconstruction experiment, as the pipeline acquires it
    cfg = load_preset("exp2")
    dsg = design(cfg)
    sino = acquire_standard(build_phantom(cfg), cfg.geom(), dsg)
    out = lowpass_filter(sino, dsg.support, rolloff=0.0)
    assert np.sum(out.values**2) >= 0.98 * np.sum(sino.values**2)


def test_lowpass_rejects_scattered():
    sino = Sinogram(np.zeros(2), GEOM, coords=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        lowpass_filter(sino, SUPPORT10)


@pytest.fixture(scope="module")
def synthetic():
    support = FrequencySupportSet.from_geometry(GEOM, 20.0)
    t = efficient_sampling_matrix(support.params)
    u = uniform_sampling_matrix(support.params)
    pts, vals, axes, ref = bandlimited_lattice_case(support, t, u)
    sparse = Sinogram(vals, GEOM, t.tag, coords=pts)
    return support, t, sparse, axes, ref


def _rel_rms(a, b):
    return np.sqrt(np.mean((a - b) ** 2) / np.mean(b**2))


def test_lattice_to_uniform_recovers_bandlimited(synthetic):
    support, t, sparse, axes, ref = synthetic
    out, info = lattice_to_uniform(sparse, t, support, axes, return_info=True)
    err = _rel_rms(out.values, ref)
    assert err < 1e-2
    assert info.n_samples == len(sparse)
    assert info.kept_energy_fraction > 0.999
    allpass = lattice_to_uniform(sparse, t, support, axes, mode="allpass")
    assert _rel_rms(allpass.values, ref) >= 10 * err


def test_constant_recovered_away_from_edges():
    support = FrequencySupportSet.from_geometry(GEOM, 20.0)
    t = efficient_sampling_matrix(support.params)
    u = uniform_sampling_matrix(support.params)
    box = np.outer([0.78, 20.8, 5.2], [-1, 1])
    pts = enumerate_lattice(t, box)
    sparse = Sinogram(np.ones(len(pts)), GEOM, t.tag, coords=pts)
    errs = []
    for frac in (0.9, 0.3):
        out = lattice_to_uniform(sparse, t, support, grid_axes_from_lattice(u, box * frac))
        errs.append(np.abs(out.values - 1).max())
    # truncation at the data box edge rings inward (Gibbs); the interior converges
    assert errs[1] < errs[0]
    assert errs[1] < 0.1


def test_assigned_bins_lie_in_support():
    support = FrequencySupportSet.from_geometry(GEOM, 20.0)
    t = efficient_sampling_matrix(support.params)
    dual = 2 * np.pi * np.linalg.inv(t.matrix).T
    d = np.array([4, 8, 64], dtype=np.int64)
    s_t = np.eye(3, dtype=np.int64)
    cands = _candidate_offsets(dual, support.bounding_box(), "support")
    omega = np.empty((int(np.prod(d)), 3))
    keep = np.empty(len(omega), dtype=np.bool_)
    _assign_bins(d, s_t, dual, cands, _support_par(support, False), omega, keep)
    assert keep.mean() > 0.5
    assert np.all(support.contains(*omega[keep].T))


def test_lattice_to_uniform_errors():
    support = FrequencySupportSet.from_geometry(GEOM, 20.0)
    t = efficient_sampling_matrix(support.params)
    u = uniform_sampling_matrix(support.params)
    box = np.outer([0.3, 4.0, 1.0], [-1, 1])
    pts = enumerate_lattice(t, box)
    sparse = Sinogram(np.ones(len(pts)), GEOM, t.tag, coords=pts)
    axes = grid_axes_from_lattice(u, box * 0.5)
    with pytest.raises(ValueError):
        lattice_to_uniform(sparse, t, support, axes, mode="nearest")
    with pytest.raises(ResamplingError):
        lattice_to_uniform(sparse, t, support, grid_axes_from_lattice(u, box * 2))
    with pytest.raises(ResamplingError):
        off = Sinogram(np.ones(len(pts)), GEOM, coords=pts + t.matrix[:, 0] * 0.37)
        lattice_to_uniform(off, t, support, axes)
    with pytest.raises(ResamplingError):
        bent = (axes[0], axes[1] ** 3, axes[2])
        lattice_to_uniform(sparse, t, support, bent)
    coarse = grid_axes_from_lattice(LatticeSpec(u.matrix * 3), box * 0.5)
    with pytest.raises(ResamplingError):
        lattice_to_uniform(sparse, t, support, coarse)
