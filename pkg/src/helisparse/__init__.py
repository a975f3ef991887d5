"""Sparse sampling and reconstruction for helical cone-beam CT.

Modules
-------
geometry    helix, rays, PI-lines
phantom     analytic ellipsoid phantoms and exact line integrals
spectral    essential-support bounds and the frequency support set
lattice     interlaced and uniform sampling lattices
scan        simulated projection data
filterbank  support-set filtering and lattice-to-grid resampling
recon       Katsevich-type filtered backprojection
metrics     MSE and SSIM
pipeline    standard versus sparse acquisition, end to end
cli         command-line front end
"""

from .geometry import HelixGeometry, helix_point, pi_line_solve, pi_v_range, ray
from .lattice import (
    LatticeSpec,
    efficient_sampling_matrix,
    enumerate_lattice,
    gain_ratio,
    tiling_disjointness,
    uniform_sampling_matrix,
)
from .metrics import mse, ssim
from .phantom import Ellipsoid, Phantom, estimate_bandlimit, shepp_logan_3d
from .recon import Volume, VolumeSpec, ground_truth_volume, katsevich_reconstruct
from .scan import Sinogram, simulate, simulate_grid
from .spectral import FrequencySupportSet, SupportParams

__version__ = "0.1.0"

__all__ = [
    "HelixGeometry",
    "helix_point",
    "ray",
    "pi_line_solve",
    "pi_v_range",
    "Ellipsoid",
    "Phantom",
    "shepp_logan_3d",
    "estimate_bandlimit",
    "SupportParams",
    "FrequencySupportSet",
    "LatticeSpec",
    "efficient_sampling_matrix",
    "uniform_sampling_matrix",
    "gain_ratio",
    "enumerate_lattice",
    "tiling_disjointness",
    "Sinogram",
    "simulate",
    "simulate_grid",
    "Volume",
    "VolumeSpec",
    "katsevich_reconstruct",
    "ground_truth_volume",
    "mse",
    "ssim",
]
