"""Filtered backprojection for helical cone-beam data on a curved detector.

Detector pixels are addressed by the fan angle ``alpha`` (columns) and the
axial coordinate ``v`` (rows, measured where the ray meets the helix
cylinder on the far side). For the filtering steps the equivalent
focus-centered cylindrical detector of radius ``D = 2R`` is used, whose
height coordinate is ``w = v / cos(alpha)``.

Pipeline, per view:

1. derivative along the source path at fixed ray direction,
   ``g1 = dg/dbeta - dg/dalpha + v tan(alpha) dg/dv``;
2. cone-angle weighting ``D / sqrt(D^2 + w^2)``;
3. resampling onto the family of kappa-lines
   ``w = (h/pi)(psi cos(alpha) - psi cot(psi) sin(alpha))``;
4. Hilbert filtering along ``alpha`` with the kernel ``1 / sin``;
5. resampling back onto detector pixels, choosing for each pixel the
   kappa-line with the smallest ``|psi|``;

followed by backprojection of each voxel over its PI-interval with weight
``1 / (R - x cos(beta) - y sin(beta))``.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .filterbank import sinc_matrix
from .geometry import pi_line_solve, pi_v_range
from .phantom import eval_phantom

__all__ = [
    "VolumeSpec",
    "Volume",
    "DetectorSpec",
    "ReconstructionError",
    "detector_axes",
    "kappa_w",
    "hilbert_kernel",
    "katsevich_reconstruct",
    "ground_truth_volume",
    "write_volume",
    "read_volume",
]

_VOLUME_MAGIC = b"HCBV"


class ReconstructionError(ValueError):
    """Sinogram does not support the requested reconstruction."""


@dataclass(frozen=True)
class VolumeSpec:
    """Voxel grid: ``dims`` counts, ``spacing`` steps, ``origin`` center of voxel (0, 0, 0)."""

    dims: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("dims must be three positive integers")
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError("spacing must be three positive numbers")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dims, half_extent):
        """Grid of ``dims`` voxels tiling the box ``[-e, e]`` per axis."""
        dims = np.asarray(dims, dtype=int)
        half = np.asarray(half_extent, dtype=float) * np.ones(3)
        spacing = 2 * half / dims
        origin = -half + spacing / 2
        return cls(tuple(dims), tuple(spacing), tuple(origin))

    def axes(self):
        return tuple(o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims))

    def centers(self):
        """Voxel centers, shape ``dims + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class Volume:
    """Scalar field on a :class:`VolumeSpec`; ``voxels`` indexed ``[ix, iy, iz]``."""

    spec: VolumeSpec
    voxels: np.ndarray

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=float)
        if vox.shape != self.spec.dims:
            raise ValueError("voxel array does not match dims")
        object.__setattr__(self, "voxels", vox)

    @property
    def dims(self):
        return self.spec.dims

    @property
    def spacing(self):
        return self.spec.spacing

    @property
    def origin(self):
        return self.spec.origin

    def central_slice(self):
        """Axial slice ``[:, :, nz // 2]``."""
        return self.voxels[:, :, self.dims[2] // 2]


@dataclass(frozen=True)
class DetectorSpec:
    """Curved detector sampling: ``cols`` fan angles over ``[-alpha_max, alpha_max]``, ``rows`` over ``[-v_max, v_max]``."""

    cols: int
    rows: int
    alpha_max: float
    v_max: float

    @classmethod
    def for_geometry(cls, geom, cols=128, rows=64, alpha_margin=1.05, v_margin=1.1):
        return cls(cols, rows, geom.fan_half_angle * alpha_margin, pi_v_range(geom, v_margin))


def detector_axes(det):
    """Pixel-center axes ``(alpha, v)`` of a :class:`DetectorSpec`."""
    da = 2 * det.alpha_max / det.cols
    dv = 2 * det.v_max / det.rows
    alpha = -det.alpha_max + da * (np.arange(det.cols) + 0.5)
    v = -det.v_max + dv * (np.arange(det.rows) + 0.5)
    return alpha, v


def kappa_w(alpha, psi, h):
    """Height ``w`` of the kappa-line with parameter ``psi`` at fan angle ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    psi = np.asarray(psi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        pc = np.where(psi == 0, 1.0, psi / np.tan(psi))
    return h / np.pi * (psi * np.cos(alpha) - pc * np.sin(alpha))


def hilbert_kernel(n_cols, d_alpha):
    """Band-limited Hilbert kernel for the curved detector, offsets ``-(n-1) .. n-1``.

    ``k[n] = (1 - cos(pi n)) / (pi n) * (n d) / sin(n d)``, zero at ``n = 0``.
    """
    n = np.arange(-(n_cols - 1), n_cols)
    k = np.zeros(n.shape)
    nz = n != 0
    k[nz] = (1 - np.cos(np.pi * n[nz])) / (np.pi * n[nz]) * (n[nz] * d_alpha) / np.sin(n[nz] * d_alpha)
    return n, k


def _forward_rebin_maps(alpha, v, psi, h):
    """Row index and weight of each (psi, column) kappa sample on the v axis."""
    w = kappa_w(alpha[None, :], psi[:, None], h)
    vv = w * np.cos(alpha)[None, :]
    dv = v[1] - v[0]
    pos = (vv - v[0]) / dv
    r0 = np.floor(pos).astype(np.int64)
    t = pos - r0
    valid = (r0 >= 0) & (r0 + 1 < len(v))
    # allow the last row exactly
    edge = np.isclose(pos, len(v) - 1)
    r0 = np.where(edge, len(v) - 2, r0)
    t = np.where(edge, 1.0, t)
    valid |= edge
    return np.where(valid, r0, 0), np.where(valid, t, 0.0), valid


def _backward_rebin_maps(alpha, v, psi, h):
    """For each detector pixel, the bracketing kappa-lines with the smallest |psi|."""
    na, nv = len(alpha), len(v)
    w_k = kappa_w(alpha[:, None], psi[None, :], h)  # (na, npsi)
    w_pix = v[None, :] / np.cos(alpha)[:, None]  # (na, nv)
    lo = w_k[:, :-1, None]
    hi = w_k[:, 1:, None]
    wp = w_pix[:, None, :]
    cross = (wp - lo) * (wp - hi) <= 0
    cross &= lo != hi
    psi_mid = np.abs(0.5 * (psi[:-1] + psi[1:]))[None, :, None]
    cost = np.where(cross, psi_mid, np.inf)
    k = np.argmin(cost, axis=1)  # (na, nv)
    ok = np.isfinite(np.take_along_axis(cost, k[:, None, :], axis=1)[:, 0, :])
    wlo = np.take_along_axis(w_k[:, :-1], k, axis=1)
    whi = np.take_along_axis(w_k[:, 1:], k, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, (w_pix - wlo) / (whi - wlo), 0.0)
    return k, t, ok


def _derivative(chunk, prev, nxt, d_beta, d_alpha, dv, alpha, v):
    """Constant-direction derivative for views in ``chunk`` (shape (nb, nv, na))."""
    ext = np.concatenate([prev[None], chunk, nxt[None]], axis=0)
    db = (ext[2:] - ext[:-2]) / (2 * d_beta)
    da = np.gradient(chunk, d_alpha, axis=2)
    ddv = np.gradient(chunk, dv, axis=1)
    return db - da + (v[None, :, None] * np.tan(alpha)[None, None, :]) * ddv


@numba.njit(cache=True)
def _backproject(g5, betas, alpha0, d_alpha, v0, dv, R, h, xs, ys, zs, b1s, b2s, out):
    """Accumulate ``g5 / (R - x cos b - y sin b)`` over each voxel's PI-interval."""
    nb, nv, na = g5.shape
    d_beta = betas[1] - betas[0]
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        b1 = b1s[p]
        b2 = b2s[p]
        n_lo = int(np.floor((b1 - betas[0]) / d_beta))
        n_hi = int(np.ceil((b2 - betas[0]) / d_beta))
        if n_lo < 0:
            n_lo = 0
        if n_hi > nb - 1:
            n_hi = nb - 1
        acc = 0.0
        for n in range(n_lo, n_hi + 1):
            b = betas[n]
            # overlap of the view cell with the PI-interval
            left = b - 0.5 * d_beta
            right = b + 0.5 * d_beta
            if left < b1:
                left = b1
            if right > b2:
                right = b2
            wgt = right - left
            if wgt <= 0:
                continue
            cb = np.cos(b)
            sb = np.sin(b)
            a = R - x * cb - y * sb
            c = x * sb - y * cb
            al = np.arctan2(c, a)
            vv = 2 * R * (z - h * b / (2 * np.pi)) * a / (a * a + c * c)
            fa = (al - alpha0) / d_alpha
            fv = (vv - v0) / dv
            ia = int(np.floor(fa))
            iv = int(np.floor(fv))
            ta = fa - ia
            tv = fv - iv
            val = 0.0
            for di in range(2):
                ii = ia + di
                if ii < 0 or ii >= na:
                    continue
                wa = ta if di == 1 else 1.0 - ta
                for dj in range(2):
                    jj = iv + dj
                    if jj < 0 or jj >= nv:
                        continue
                    wv = tv if dj == 1 else 1.0 - tv
                    val += wa * wv * g5[n, jj, ii]
            acc += wgt * val / a
        out[p] = acc / (2 * np.pi)


def _uniform_step(axis, name):
    axis = np.asarray(axis, dtype=float)
    if len(axis) < 2:
        raise ReconstructionError(f"{name} axis needs at least two samples")
    d = np.diff(axis)
    if np.abs(d - d[0]).max() > 1e-9 * abs(d[0]) * len(axis):
        raise ReconstructionError(f"{name} axis must be uniform")
    return float(d[0])


def katsevich_reconstruct(sinogram, geom, volume_spec, detector=None, n_psi=None, views_per_chunk=256, mask_radius=None):
    """Reconstruct a volume from helical projections on a regular grid.

    Parameters
    ----------
    sinogram : Sinogram
        Grid data ``(alpha, beta, v)``.
    geom : HelixGeometry
    volume_spec : VolumeSpec
    detector : DetectorSpec, optional
        Detector grid used for filtering. The sinogram is interpolated onto
        it (band-limited, along ``alpha`` and ``v``). Defaults to the
        sinogram's own axes.
    n_psi : int, optional
        Number of kappa-lines; defaults to twice the detector rows plus one.
    views_per_chunk : int
        Views filtered at a time (bounds memory).
    mask_radius : float, optional
        Voxels farther than this from the axis are left at zero; defaults
        to ``rho``.

    Returns
    -------
    Volume
    """
    if not sinogram.is_grid:
        raise ReconstructionError("reconstruction needs a regular grid sinogram")
    a_in, betas, v_in = sinogram.axes
    d_beta = _uniform_step(betas, "beta")
    if detector is None:
        alpha, v = a_in, v_in
        resample = False
    else:
        alpha, v = detector_axes(detector)
        resample = True
    d_alpha = _uniform_step(alpha, "alpha")
    dv = _uniform_step(v, "v")
    if alpha[0] > -geom.fan_half_angle or alpha[-1] < geom.fan_half_angle:
        raise ReconstructionError("detector does not cover the fan of the object cylinder")
    if v[0] > -pi_v_range(geom, 1.0) or v[-1] < pi_v_range(geom, 1.0):
        raise ReconstructionError("detector does not cover the PI-window")
    if n_psi is None:
        n_psi = 2 * len(v) + 1
    # kappa-lines must reach the fan edges
    psi_max = np.pi / 2 + max(abs(alpha[0]), abs(alpha[-1]))
    psi = np.linspace(-psi_max, psi_max, n_psi)
    fr0, frt, fok = _forward_rebin_maps(alpha, v, psi, geom.h)
    bk, bt, bok = _backward_rebin_maps(alpha, v, psi, geom.h)
    _, hk = hilbert_kernel(len(alpha), d_alpha)
    na, nv, nb = len(alpha), len(v), len(betas)
    nfft = int(2 ** np.ceil(np.log2(2 * na - 1 + na)))
    hk_f = np.fft.rfft(hk, nfft)
    D = 2 * geom.R
    cone_w = D / np.sqrt(D**2 + (v[:, None] / np.cos(alpha)[None, :]) ** 2)
    cols = np.arange(na)

    if resample:
        ma = sinc_matrix(a_in, alpha)
        mv = sinc_matrix(v_in, v)

    def views(lo, hi):
        """Detector data (view, row, col) for view indices lo..hi-1 (clamped)."""
        idx = np.clip(np.arange(lo, hi), 0, nb - 1)
        block = sinogram.values[:, idx, :]
        if resample:
            return np.einsum("ia,abv,jv->bji", ma, block, mv, optimize=True)
        return np.ascontiguousarray(block.transpose(1, 2, 0))

    g5 = np.empty((nb, nv, na))
    for s in range(0, nb, views_per_chunk):
        e = min(nb, s + views_per_chunk)
        ext = views(s - 1, e + 1)
        chunk = ext[1:-1]
        g1 = _derivative(chunk, ext[0], ext[-1], d_beta, d_alpha, dv, alpha, v)
        if s == 0:
            g1[0] = 0.0
        if e == nb:
            g1[-1] = 0.0
        g2 = g1 * cone_w[None]
        # forward rebin: (view, psi, col)
        g3 = (1 - frt)[None] * g2[:, fr0, cols] + frt[None] * g2[:, fr0 + 1, cols]
        g3 *= fok[None]
        # Hilbert along alpha; the minus sign maps the kernel from gamma = -alpha
        spec = np.fft.rfft(g3, nfft, axis=2) * hk_f
        conv = np.fft.irfft(spec, nfft, axis=2)
        g4 = -conv[:, :, na - 1: 2 * na - 1]
        # backward rebin: pixel (row j, col i) takes kappa-lines bk[i, j], bk[i, j] + 1
        lo_vals = g4[:, bk.T, cols[None, :]]
        hi_vals = g4[:, bk.T + 1, cols[None, :]]
        g5[s:e] = np.where(bok.T[None], (1 - bt.T)[None] * lo_vals + bt.T[None] * hi_vals, 0.0)

    centers = volume_spec.centers().reshape(-1, 3)
    radius = geom.rho if mask_radius is None else mask_radius
    inside = np.hypot(centers[:, 0], centers[:, 1]) <= radius
    pts = centers[inside]
    out = np.zeros(len(centers))
    if len(pts):
        pl = pi_line_solve(pts, geom)
        if pl.beta1.min() < betas[0] - 1e-12 or pl.beta2.max() > betas[-1] + 1e-12:
            raise ReconstructionError("a voxel PI-interval leaves the sampled source range")
        vals = np.empty(len(pts))
        _backproject(
            g5, betas, alpha[0], d_alpha, v[0], dv, geom.R, geom.h,
            pts[:, 0].copy(), pts[:, 1].copy(), pts[:, 2].copy(),
            np.ascontiguousarray(pl.beta1), np.ascontiguousarray(pl.beta2), vals,
        )
        out[inside] = vals
    return Volume(volume_spec, out.reshape(volume_spec.dims))


def ground_truth_volume(phantom, volume_spec):
    """Phantom density at the voxel centers."""
    return Volume(volume_spec, eval_phantom(phantom, volume_spec.centers()))


def write_volume(path, volume):
    """Binary volume: magic ``HCBV``, 3 x u32 dims, 3 x f64 spacing, 3 x f64 origin, f64 voxels (x fastest)."""
    with open(path, "wb") as fh:
        fh.write(_VOLUME_MAGIC)
        fh.write(np.asarray(volume.dims, dtype="<u4").tobytes())
        fh.write(np.asarray(volume.spacing, dtype="<f8").tobytes())
        fh.write(np.asarray(volume.origin, dtype="<f8").tobytes())
        fh.write(np.asarray(volume.voxels, dtype="<f8").ravel(order="F").tobytes())


def read_volume(path):
    """Inverse of :func:`write_volume`."""
    with open(path, "rb") as fh:
        if fh.read(4) != _VOLUME_MAGIC:
            raise ValueError(f"{path}: not a volume file")
        dims = tuple(int(x) for x in np.frombuffer(fh.read(12), dtype="<u4"))
        spacing = tuple(np.frombuffer(fh.read(24), dtype="<f8"))
        origin = tuple(np.frombuffer(fh.read(24), dtype="<f8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: voxel count does not match dims")
    return Volume(VolumeSpec(dims, spacing, origin), data.reshape(dims, order="F").copy())
