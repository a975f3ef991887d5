"""Standard versus interlaced acquisition, end to end.

Both paths image the same phantom over the same acquisition box:

* standard: samples on the rectangular Nyquist lattice ``U``;
* sparse: samples on the interlaced lattice ``T``, then resampled onto
  the ``U`` grid through the support-set filter.

Each grid sinogram is then interpolated onto the reconstruction detector
and reconstructed with the same filtered backprojection.
"""

from dataclasses import dataclass

import numpy as np

from .config import parse_region
from .filterbank import lattice_to_uniform
from .geometry import pi_v_range
from .lattice import (
    LatticeSpec,
    count_lattice_points,
    efficient_sampling_matrix,
    enumerate_lattice,
    uniform_sampling_matrix,
)
from .metrics import mse, ssim
from .phantom import read_phantom, shepp_logan_3d
from .recon import DetectorSpec, VolumeSpec, ground_truth_volume, katsevich_reconstruct
from .scan import add_noise, simulate, simulate_grid, uniform_axis
from .spectral import FrequencySupportSet, SupportParams

__all__ = [
    "Design",
    "build_phantom",
    "data_v_extent",
    "acquisition_box",
    "design",
    "acquire_standard",
    "acquire_sparse",
    "sparse_to_grid",
    "volume_spec",
    "detector_spec",
    "reconstruct",
    "slice_metrics",
    "compare_paths",
]


@dataclass(frozen=True)
class Design:
    """Support set, both lattices and the acquisition box."""

    support: FrequencySupportSet
    interlaced: LatticeSpec
    uniform: LatticeSpec
    box: np.ndarray

    @property
    def uniform_axes(self):
        u = self.uniform.matrix
        return tuple(uniform_axis(self.box[i, 0], self.box[i, 1], u[i, i]) for i in range(3))

    @property
    def counts(self):
        """Sample counts ``(interlaced, uniform)`` inside the box."""
        return count_lattice_points(self.interlaced), count_lattice_points(self.uniform)

    @property
    def density_reduction(self):
        return 1 - self.uniform.density_det / self.interlaced.density_det


def build_phantom(cfg):
    """Phantom named by the ``[phantom]`` section."""
    table = cfg.phantom.table
    if table == "shepp_logan":
        return shepp_logan_3d(cfg.phantom.scale)
    return read_phantom(table).scaled(cfg.phantom.scale)


def data_v_extent(geom, phantom):
    """Largest ``|v|`` of any ray meeting the phantom while the source is in ``[-B, B]``."""
    zs = geom.h * geom.B / (2 * np.pi)
    return 2 * geom.R * (phantom.support_halflength + zs) / (geom.R - phantom.support_radius)


def acquisition_box(geom, phantom, alpha_margin=1.0, v_margin=1.1):
    """Sampling box ``[[a_lo, a_hi], [-B, B], [-v_max, v_max]]`` holding all nonzero data.

    ``alpha`` spans the fan of the object cylinder; ``v`` spans every ray
    that meets the phantom (the data vanish outside), which lets the
    resampler treat the box as zero-padded.
    """
    if phantom.support_radius > geom.rho * (1 + 1e-12):
        raise ValueError("phantom is wider than the object cylinder")
    a = geom.fan_half_angle * alpha_margin
    v = max(data_v_extent(geom, phantom), pi_v_range(geom, 1.0)) * v_margin
    return np.array([[-a, a], [-geom.B, geom.B], [-v, v]])


def design(cfg, phantom=None):
    """Support set, lattices and box for a configuration."""
    geom = cfg.geom()
    params = SupportParams.from_geometry(geom, cfg.sampling.omega)
    support = FrequencySupportSet(params)
    if phantom is None:
        phantom = build_phantom(cfg)
    box = acquisition_box(geom, phantom, cfg.sampling.alpha_margin, cfg.sampling.v_margin)
    t = efficient_sampling_matrix(params).with_ranges(box)
    u = uniform_sampling_matrix(params).with_ranges(box)
    return Design(support, t, u, box)


def acquire_standard(phantom, geom, dsg, sigma=0.0, seed=0):
    """Uniform-lattice scan as a grid sinogram."""
    sino = simulate_grid(phantom, geom, dsg.uniform_axes, lattice_tag="uniform")
    return add_noise(sino, sigma, seed) if sigma > 0 else sino


def acquire_sparse(phantom, geom, dsg, sigma=0.0, seed=0):
    """Interlaced-lattice scan as scattered samples."""
    sino = simulate(phantom, geom, enumerate_lattice(dsg.interlaced), lattice_tag="interlaced")
    return add_noise(sino, sigma, seed + 1) if sigma > 0 else sino


def sparse_to_grid(sparse, dsg, pad=0.1, return_info=False):
    """Support-filtered resampling of interlaced samples onto the uniform grid."""
    return lattice_to_uniform(sparse, dsg.interlaced, dsg.support, dsg.uniform_axes, pad=pad, return_info=return_info)


def volume_spec(cfg):
    return VolumeSpec.centered(cfg.recon.volume_dims, cfg.recon.half_extent)


def detector_spec(cfg, geom):
    return DetectorSpec.for_geometry(geom, cfg.recon.detector_cols, cfg.recon.detector_rows)


def reconstruct(sino, cfg, vspec=None):
    """Filtered backprojection of a grid sinogram onto the configured volume."""
    geom = sino.geometry
    return katsevich_reconstruct(sino, geom, vspec or volume_spec(cfg), detector=detector_spec(cfg, geom))


def _crop(mask):
    ii = np.flatnonzero(mask.any(axis=1))
    jj = np.flatnonzero(mask.any(axis=0))
    if ii.size == 0:
        raise ValueError("metric region contains no voxels")
    return slice(ii[0], ii[-1] + 1), slice(jj[0], jj[-1] + 1)


def slice_metrics(volume, truth, region="full"):
    """MSE and SSIM of the central axial slice, over the full slice and a region.

    The SSIM dynamic range is that of the ground-truth volume. The region
    SSIM is computed on the region's bounding rectangle.
    """
    k = volume.dims[2] // 2
    a = volume.voxels[:, :, k]
    b = truth.voxels[:, :, k]
    rng = float(truth.voxels.max() - truth.voxels.min()) or 1.0
    xs, ys = volume.spec.axes()[:2]
    mask = parse_region(region)(xs[:, None], ys[None, :])
    sx, sy = _crop(mask)
    return {
        "mse_slice": mse(a, b),
        "ssim_slice": ssim(b, a, data_range=rng),
        "mse_region": mse(a, b, mask=mask),
        "ssim_region": ssim(b[sx, sy], a[sx, sy], data_range=rng),
    }


def compare_paths(cfg, seed=0, keep=False):
    """Run both acquisition paths and score them against the phantom.

    Returns
    -------
    dict
        Sample counts, reduction, resampling diagnostics and per-path metrics
        (``standard_*``, ``sparse_*``); with ``keep`` also the volumes.
    """
    geom = cfg.geom()
    phantom = build_phantom(cfg)
    dsg = design(cfg, phantom)
    vspec = volume_spec(cfg)
    truth = ground_truth_volume(phantom, vspec)
    out = {}
    sigma = cfg.sampling.noise_sigma

    std = acquire_standard(phantom, geom, dsg, sigma, seed)
    out["standard_samples"] = len(std)
    vol_std = reconstruct(std, cfg, vspec)
    del std

    sparse = acquire_sparse(phantom, geom, dsg, sigma, seed)
    out["sparse_samples"] = len(sparse)
    grid, info = sparse_to_grid(sparse, dsg, cfg.sampling.resample_pad, return_info=True)
    del sparse
    out["kept_energy_fraction"] = info.kept_energy_fraction
    vol_sp = reconstruct(grid, cfg, vspec)
    del grid

    out["sample_reduction"] = 1 - out["sparse_samples"] / out["standard_samples"]
    out["density_reduction"] = dsg.density_reduction
    for name, vol in (("standard", vol_std), ("sparse", vol_sp)):
        for key, val in slice_metrics(vol, truth, cfg.recon.region).items():
            out[f"{name}_{key}"] = val
    if keep:
        out["volumes"] = {"standard": vol_std, "sparse": vol_sp, "truth": truth}
    return out
