"""Support-based filtering and resampling of projection data.

``lowpass_filter`` applies the support set as a frequency mask to data on
a regular grid. ``lattice_to_uniform`` turns samples taken on a
(non-rectangular) sampling lattice into values on a regular grid: the
samples are treated as one period of a periodic lattice signal, its
discrete spectrum is computed with an FFT over the lattice index group,
every spectral bin is moved to its alias inside the support set, and the
resulting trigonometric polynomial is evaluated on the grid with a
non-uniform FFT.
"""

from dataclasses import dataclass

import finufft
import numba
import numpy as np
import scipy.fft
from sympy import Matrix
from sympy.matrices.normalforms import smith_normal_decomp
from sympy.polys.domains import ZZ

from .scan import Sinogram

__all__ = [
    "SpectralMask",
    "ResamplingError",
    "ResampleInfo",
    "spectral_mask",
    "lowpass_filter",
    "lattice_to_uniform",
    "sinc_matrix",
    "resample_grid",
    "write_mask_csv",
]


class ResamplingError(ValueError):
    """Samples and target grid cannot be reconciled with the lattice."""


@dataclass(frozen=True, eq=False)
class SpectralMask:
    """Mask weights on the DFT grid of a regular sinogram (full, unshifted layout)."""

    spacing: np.ndarray
    shape: tuple
    weights: np.ndarray

    def frequencies(self):
        return tuple(2 * np.pi * np.fft.fftfreq(n, d) for n, d in zip(self.shape, self.spacing))


def _raised_cosine(t):
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * (1 - np.cos(np.pi * t))


def _mask_weights(m, wb, wv, support, rolloff):
    """Mask values for broadcastable frequency arrays; hard 0/1 when rolloff is 0."""
    inside = support.contains(m, wb, wv)
    if rolloff <= 0:
        return inside.astype(float)
    p = support.params
    g = p.geometry
    from .spectral import _bowtie_bounds, d_bound

    mmax = (g.R + g.rho) * p.Omega
    lo, hi = _bowtie_bounds(m, g.R, g.rho, p.Omega)
    d = d_bound(wv, p)
    bscale = g.rho * p.Omega + d
    e_m = (mmax - np.abs(m)) / mmax
    e_v = (p.Wv - np.abs(wv)) / p.Wv
    e_b = np.minimum(wb - (lo - d), (hi + d) - wb) / bscale
    w = _raised_cosine(e_m / rolloff) * _raised_cosine(e_v / rolloff) * _raised_cosine(e_b / rolloff)
    return np.where(inside, w, 0.0)


def spectral_mask(shape, spacing, support, rolloff=0.0):
    """Support-set mask on the full DFT grid of a regular sinogram.

    Nyquist bins of even-length axes are zeroed so that the mask is
    symmetric under frequency negation and real data stay real.

    Parameters
    ----------
    shape : tuple of 3 ints
    spacing : array_like
        Grid steps ``(d_alpha, d_beta, d_v)``.
    support : FrequencySupportSet
    rolloff : float
        Width of a raised-cosine edge inside the set, as a fraction of the
        band half-extent along each axis (0 gives a hard 0/1 mask).
    """
    spacing = np.asarray(spacing, dtype=float)
    f = [2 * np.pi * np.fft.fftfreq(n, d) for n, d in zip(shape, spacing)]
    w = _mask_weights(f[0][:, None, None], f[1][None, :, None], f[2][None, None, :], support, rolloff)
    w = np.broadcast_to(w, tuple(shape)).copy()
    for ax, n in enumerate(shape):
        if n % 2 == 0:
            idx = [slice(None)] * 3
            idx[ax] = n // 2
            w[tuple(idx)] = 0.0
    return SpectralMask(spacing, tuple(shape), w)


def lowpass_filter(sinogram, support, pad=0.1, rolloff=0.05, alpha_periodic=None):
    """Keep only the spectral content of a grid sinogram inside the support set.

    Parameters
    ----------
    sinogram : Sinogram
        Regular grid data.
    support : FrequencySupportSet
    pad : float
        Zero padding appended to each non-periodic axis, as a fraction of
        its length.
    rolloff : float
        Raised-cosine edge width (see :func:`spectral_mask`); 0 for a hard mask.
    alpha_periodic : bool, optional
        Treat ``alpha`` as circular. Defaults to true when the axis covers a
        full turn, in which case the frequencies are the integers ``m``.

    Returns
    -------
    Sinogram
        Same grid, filtered values.
    """
    if not sinogram.is_grid:
        raise ValueError("lowpass_filter needs a regular grid sinogram")
    x = sinogram.values
    spacing = sinogram.spacing
    na = x.shape[0]
    if alpha_periodic is None:
        alpha_periodic = abs(na * spacing[0] - 2 * np.pi) < 1e-9
    padded = []
    for ax, n in enumerate(x.shape):
        if ax == 0 and alpha_periodic:
            padded.append(n)
        else:
            padded.append(n + int(np.ceil(pad * n)))
    mask = spectral_mask(padded, spacing, support, rolloff)
    # real transform along v; the mask is symmetric so the half spectrum suffices
    spec = scipy.fft.rfftn(x, s=padded)
    spec *= mask.weights[:, :, : spec.shape[2]]
    y = scipy.fft.irfftn(spec, s=padded)
    y = y[: x.shape[0], : x.shape[1], : x.shape[2]]
    return sinogram.replace(np.ascontiguousarray(y))


def write_mask_csv(path, mask):
    """Dump nonzero mask bins as ``m,omega_beta,omega_v,weight``."""
    f = mask.frequencies()
    idx = np.nonzero(mask.weights)
    rows = np.column_stack([f[0][idx[0]], f[1][idx[1]], f[2][idx[2]], mask.weights[idx]])
    np.savetxt(path, rows, delimiter=",", header="m,omega_beta,omega_v,weight", comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# lattice resampling


@dataclass(frozen=True)
class ResampleInfo:
    """Diagnostics of a lattice-to-grid resampling."""

    period_matrix: np.ndarray
    group_shape: tuple
    n_samples: int
    n_bins: int
    n_kept: int
    kept_energy_fraction: float


def _lattice_indices(points, t, tol=1e-6):
    k = np.linalg.solve(t, points.T).T
    kr = np.rint(k)
    if len(k) and np.abs(k - kr).max() > tol:
        raise ResamplingError("samples do not lie on the sampling lattice")
    return kr.astype(np.int64)


def _period_matrix(t, extent, pad):
    """Integer matrix M such that the columns of T M are near-axis periods longer than the data."""
    tinv = np.linalg.inv(t)
    grow = 1.0 + pad
    for _ in range(20):
        lengths = extent * grow
        m = np.rint(tinv @ np.diag(lengths)).astype(np.int64)
        if round(abs(np.linalg.det(m.astype(float)))) == 0:
            grow *= 1.05
            continue
        p = t @ m
        n = np.arange(-2, 3)
        combos = np.array(np.meshgrid(n, n, n, indexing="ij")).reshape(3, -1).T
        combos = combos[np.any(combos != 0, axis=1)]
        vecs = combos @ p.T
        # no period may fit inside the padded data box
        if np.all(np.any(np.abs(vecs) >= extent * (1 + 0.5 * pad), axis=1)):
            return m
        grow *= 1.05
    raise ResamplingError("could not find a period lattice enclosing the data")


def _smith(m):
    dmat, s, _ = smith_normal_decomp(Matrix(m.tolist()), domain=ZZ)
    d = np.array([abs(int(dmat[i, i])) for i in range(3)], dtype=np.int64)
    s = np.array(s.tolist(), dtype=object)
    if np.any(np.abs(s.astype(float)) > 2**52):
        raise ResamplingError("index transform too large for exact integer arithmetic")
    return d, s.astype(np.int64)


def _candidate_offsets(dual, box, mode):
    if mode == "allpass":
        return np.zeros((1, 3))
    ginv = np.linalg.inv(dual)
    corners = np.array(np.meshgrid(*[[-b, b] for b in box], indexing="ij")).reshape(3, -1)
    c = ginv @ corners
    lo = np.floor(c.min(axis=1) - 0.5).astype(int)
    hi = np.ceil(c.max(axis=1) + 0.5).astype(int)
    grid = np.array(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij")).reshape(3, -1).T
    centers = grid @ dual.T
    half = 0.5 * np.abs(dual).sum(axis=1)
    near = np.all(np.abs(centers) <= box + half, axis=1)
    grid, centers = grid[near], centers[near]
    order = np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], np.max(np.abs(centers) / box, axis=1)))
    return grid[order].astype(float)


@numba.njit(cache=True)
def _assign_bins(d, s_t, dual, cands, par, out_w, keep):
    """Move every DFT bin of the index group to its alias inside the support set.

    For the bin with multi-index q the base frequency in dual-basis
    coordinates is ``s^T (q / d)``, reduced to ``[-1/2, 1/2)``; candidate
    integer offsets are tried in order until the frequency lands inside the
    set. Bins without a representative are dropped.
    """
    R, rho, Om, Wv, K, wI, wL, cz = par[0], par[1], par[2], par[3], par[4], par[5], par[6], par[7]
    d1, d2, d3 = d[0], d[1], d[2]
    n = d1 * d2 * d3
    mmax = (R + rho) * Om
    for flat in range(n):
        q3 = flat % d3
        r = flat // d3
        q2 = r % d2
        q1 = r // d2
        # exact rational coordinates: numerators over d3 (d1 | d2 | d3)
        a1 = q1 * (d3 // d1)
        a2 = q2 * (d3 // d2)
        a3 = q3
        u = np.empty(3)
        for i in range(3):
            num = s_t[i, 0] * a1 + s_t[i, 1] * a2 + s_t[i, 2] * a3
            num = num % d3
            f = num / d3
            if f >= 0.5:
                f -= 1.0
            u[i] = f
        keep[flat] = False
        for c in range(cands.shape[0]):
            w0 = 0.0
            w1 = 0.0
            w2 = 0.0
            for j in range(3):
                cj = u[j] + cands[c, j]
                w0 += dual[0, j] * cj
                w1 += dual[1, j] * cj
                w2 += dual[2, j] * cj
            if par[8] > 0.5:
                out_w[flat, 0] = w0
                out_w[flat, 1] = w1
                out_w[flat, 2] = w2
                keep[flat] = True
                break
            if abs(w2) > Wv or abs(w0) > mmax:
                continue
            dd = K + wI + (K + wL) * (1.0 + cz * abs(w2))
            if w0 >= (R - rho) * Om:
                lo = w0 - Om * R
            elif w0 >= 0:
                lo = rho * w0 / (rho - R)
            else:
                lo = rho * w0 / (rho + R)
            if w0 <= (rho - R) * Om:
                hi = w0 + Om * R
            elif w0 <= 0:
                hi = rho * w0 / (rho - R)
            else:
                hi = rho * w0 / (rho + R)
            if w1 >= lo - dd and w1 <= hi + dd:
                out_w[flat, 0] = w0
                out_w[flat, 1] = w1
                out_w[flat, 2] = w2
                keep[flat] = True
                break


def _support_par(support, allpass):
    p = support.params
    g = p.geometry
    from .spectral import indicator_width, linear_width

    cz = 2.0 / (1 - p.rbar_max) * (g.Z + g.h * g.B / (2 * np.pi))
    return np.array(
        [g.R, g.rho, p.Omega, p.Wv, float(p.K), indicator_width(g.B), linear_width(g.B), cz, 1.0 if allpass else 0.0]
    )


def lattice_to_uniform(sparse, spec, support, target_axes, mode="support", pad=0.1, eps=1e-9, return_info=False):
    """Resample lattice samples onto a regular grid, keeping only the support set.

    The samples are taken as one period of a signal periodic on a coarse
    sub-lattice ``P`` of the sampling lattice (zero where no sample was
    taken), with ``P`` chosen nearly rectangular and larger than the data
    box by ``pad``. The quotient group of the two lattices is cyclic-product
    ``Z_d1 x Z_d2 x Z_d3`` (Smith normal form), so its DFT is an ordinary
    FFT. Each bin is a frequency known only modulo the dual lattice; it is
    assigned the representative lying in the support set (``mode="support"``)
    or the one in the fundamental cell of the dual basis
    (``mode="allpass"``, no spectral knowledge). The trigonometric
    polynomial is then evaluated on the target grid by a type-1 NUFFT.

    Parameters
    ----------
    sparse : Sinogram
        Scattered samples on the lattice of ``spec``.
    spec : LatticeSpec
    support : FrequencySupportSet
    target_axes : tuple of three 1-D arrays
        Regular output grid; must lie inside the sampled box and resolve
        the support set's bounding box.
    mode : {"support", "allpass"}
    pad : float
        Relative zero margin of the period box.
    eps : float
        NUFFT precision.
    return_info : bool

    Returns
    -------
    Sinogram
        Grid sinogram on ``target_axes`` (and a :class:`ResampleInfo`).
    """
    if mode not in ("support", "allpass"):
        raise ValueError(f"unknown mode {mode!r}")
    t = np.asarray(spec.matrix, dtype=float)
    pts = sparse.points
    vals = sparse.flat_values
    axes = tuple(np.asarray(a, dtype=float) for a in target_axes)
    steps = []
    for a in axes:
        if len(a) > 1 and np.abs(np.diff(a, 2)).max(initial=0) > 1e-9 * max(1.0, np.abs(a).max()):
            raise ResamplingError("target axes must be uniformly spaced")
        steps.append(a[1] - a[0] if len(a) > 1 else 1.0)
    steps = np.array(steps)
    k = _lattice_indices(pts, t)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    tlo = np.array([a[0] for a in axes])
    thi = np.array([a[-1] for a in axes])
    cell = np.abs(t).sum(axis=1)
    if np.any(tlo < lo - cell) or np.any(thi > hi + cell):
        raise ResamplingError("target grid extends beyond the sampled box")
    extent = hi - lo + cell
    m = _period_matrix(t, extent, pad)
    d, s = _smith(m)
    kk = k @ s.T
    idx = np.mod(kk, d)
    flat = np.ravel_multi_index(idx.T, tuple(d))
    if np.unique(flat).size != flat.size:
        raise ResamplingError("two samples fall in the same period class")
    n_bins = int(np.prod(d))
    buf = np.zeros(n_bins, dtype=complex)
    buf[flat] = vals
    spec_vals = scipy.fft.fftn(buf.reshape(tuple(d))).ravel()
    del buf
    dual = 2 * np.pi * np.linalg.inv(t).T
    box = support.bounding_box()
    cands = _candidate_offsets(dual, box, mode)
    omega = np.empty((n_bins, 3))
    keep = np.empty(n_bins, dtype=np.bool_)
    _assign_bins(d, s.T.copy(), dual, cands, _support_par(support, mode == "allpass"), omega, keep)
    energy = np.abs(spec_vals) ** 2
    total = energy.sum()
    kept_frac = float(energy[keep].sum() / total) if total > 0 else 1.0
    omega = omega[keep]
    coef = spec_vals[keep] / n_bins
    del spec_vals, energy
    if mode == "support" and np.any(np.abs(omega * steps) > np.pi * (1 + 1e-9)):
        raise ResamplingError("target grid is coarser than the support set requires")
    n_modes = tuple(len(a) for a in axes)
    center = np.array([a[0] + (len(a) // 2) * st for a, st in zip(axes, steps)])
    coef = coef * np.exp(1j * (omega @ center))
    xs = [np.ascontiguousarray(np.angle(np.exp(1j * omega[:, i] * steps[i]))) for i in range(3)]
    if len(coef):
        out = finufft.nufft3d1(
            xs[0], xs[1], xs[2], coef, n_modes=n_modes, eps=eps, isign=1, nthreads=1, upsampfac=1.25
        )
        out = np.ascontiguousarray(out.real)
    else:
        out = np.zeros(n_modes)
    result = Sinogram(out, sparse.geometry, f"{sparse.lattice_tag}->grid", axes=axes)
    if return_info:
        info = ResampleInfo(t @ m, tuple(int(x) for x in d), len(vals), n_bins, int(keep.sum()), kept_frac)
        return result, info
    return result


def sinc_matrix(old_axis, new_axis):
    """Band-limited (sinc) interpolation weights from a uniform axis to arbitrary points."""
    old_axis = np.asarray(old_axis, dtype=float)
    new_axis = np.asarray(new_axis, dtype=float)
    if len(old_axis) == 1:
        return np.ones((len(new_axis), 1))
    step = old_axis[1] - old_axis[0]
    return np.sinc((new_axis[:, None] - old_axis[None, :]) / step)


def resample_grid(sinogram, new_axes):
    """Band-limited interpolation of a grid sinogram onto new ``alpha`` and ``v`` axes.

    The ``beta`` axis must be unchanged. Samples outside the old grid are
    taken as zero, which is exact for data that vanish there.
    """
    if not sinogram.is_grid:
        raise ValueError("resample_grid needs a regular grid sinogram")
    a_old, b_old, v_old = sinogram.axes
    a_new, b_new, v_new = (np.asarray(x, dtype=float) for x in new_axes)
    if len(b_new) != len(b_old) or np.abs(b_new - b_old).max() > 1e-12 * max(1.0, np.abs(b_old).max()):
        raise ValueError("resample_grid keeps the beta axis")
    ma = sinc_matrix(a_old, a_new)
    mv = sinc_matrix(v_old, v_new)
    out = np.einsum("ia,abv,jv->ibj", ma, sinogram.values, mv, optimize=True)
    return Sinogram(out, sinogram.geometry, sinogram.lattice_tag, axes=(a_new, b_old, v_new))
