"""Image-quality metrics for reconstructed volumes and slices."""

import csv

import numpy as np
from scipy import ndimage

__all__ = ["mse", "ssim", "ssim_map", "format_table", "write_metrics_csv"]

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _values(x):
    return np.asarray(getattr(x, "voxels", x), dtype=float)


def _same_shape(a, b):
    a = _values(a)
    b = _values(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b, mask=None):
    """Mean squared difference, optionally over ``mask``.

    Parameters
    ----------
    a, b : ndarray or Volume
        Same shape.
    mask : ndarray of bool, optional
        Restrict the mean to these elements.
    """
    a, b = _same_shape(a, b)
    d2 = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError("mask shape mismatch")
        if not mask.any():
            raise ValueError("empty mask")
        return float(d2[mask].mean())
    return float(d2.mean())


def _blur(x):
    return ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA, mode="reflect")


def ssim_map(a, b, data_range):
    """Local SSIM with an 11x11 Gaussian window (sigma 1.5).

    Returns the full map; borders narrower than the window radius are
    influenced by reflection padding.
    """
    a, b = _same_shape(a, b)
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D images")
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _blur(a)
    mu_b = _blur(b)
    saa = _blur(a * a) - mu_a**2
    sbb = _blur(b * b) - mu_b**2
    sab = _blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b, data_range=None):
    """Mean structural similarity of two 2-D images.

    Parameters
    ----------
    a, b : ndarray, shape (ny, nx)
        ``a`` is the reference; with ``data_range`` omitted its
        peak-to-peak value is used.
    data_range : float, optional

    Returns
    -------
    float
        Mean of the local SSIM map after cropping a border of the window
        radius.
    """
    a, b = _same_shape(a, b)
    if data_range is None:
        data_range = float(a.max() - a.min())
    smap = ssim_map(a, b, data_range)
    r = SSIM_RADIUS
    if min(smap.shape) <= 2 * r:
        raise ValueError("image smaller than the SSIM window")
    return float(smap[r:-r, r:-r].mean())


def format_table(rows, header=("metric", "value")):
    """Two-column plain-text table from ``(name, value)`` pairs."""
    rows = [(str(k), f"{v:.6g}" if isinstance(v, float) else str(v)) for k, v in rows]
    w = max([len(header[0])] + [len(k) for k, _ in rows])
    lines = [f"{header[0]:<{w}}  {header[1]}", f"{'-' * w}  {'-' * max(5, len(header[1]))}"]
    lines += [f"{k:<{w}}  {v}" for k, v in rows]
    return "\n".join(lines)


def write_metrics_csv(path, rows, header=("metric", "value")):
    """CSV with one ``name,value`` row per metric."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, v in rows:
            w.writerow([k, repr(v) if isinstance(v, float) else v])
