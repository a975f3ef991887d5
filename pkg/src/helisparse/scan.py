"""Simulated helical cone-beam projection data.

A :class:`Sinogram` holds projection values either at scattered sample
points (e.g. an interlaced lattice) or on a regular ``(alpha, beta, v)``
grid. Values are exact line integrals through an analytic phantom.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import HelixGeometry, ray
from .phantom import line_integral

__all__ = [
    "Sinogram",
    "uniform_axis",
    "grid_axes_from_lattice",
    "simulate",
    "simulate_grid",
    "add_noise",
    "write_sinogram",
    "read_sinogram",
    "write_sinogram_csv",
]

_MAGIC = "HCBS 1"


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Projection values with their sample coordinates.

    Exactly one of ``coords`` (scattered samples, shape (N, 3)) and ``axes``
    (regular grid; ``values`` has shape ``(len(alpha), len(beta), len(v))``)
    is set.

    Parameters
    ----------
    values : ndarray
    geometry : HelixGeometry
    lattice_tag : str
        Name of the generating lattice.
    coords : ndarray, optional
    axes : tuple of three 1-D arrays, optional
    """

    values: np.ndarray
    geometry: HelixGeometry
    lattice_tag: str = ""
    coords: np.ndarray = None
    axes: tuple = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if (self.coords is None) == (self.axes is None):
            raise ValueError("give exactly one of coords or axes")
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float).reshape(-1, 3)
            if vals.shape != (len(c),):
                raise ValueError("values and coords differ in length")
            object.__setattr__(self, "coords", c)
        else:
            axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
            if len(axes) != 3 or vals.shape != tuple(len(a) for a in axes):
                raise ValueError("values must have shape (len(alpha), len(beta), len(v))")
            object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    @property
    def is_grid(self):
        return self.axes is not None

    def __len__(self):
        return self.values.size

    @property
    def points(self):
        """Sample coordinates, shape (N, 3); grid samples in C order."""
        if self.coords is not None:
            return self.coords
        a, b, v = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([a.ravel(), b.ravel(), v.ravel()], axis=-1)

    @property
    def flat_values(self):
        return self.values.ravel()

    @property
    def spacing(self):
        """Grid steps ``(d_alpha, d_beta, d_v)``."""
        if not self.is_grid:
            raise ValueError("scattered sinogram has no grid spacing")
        return np.array([a[1] - a[0] if len(a) > 1 else 0.0 for a in self.axes])

    def replace(self, values):
        """Same samples with new values."""
        return Sinogram(values, self.geometry, self.lattice_tag, self.coords, self.axes)

    def __add__(self, other):
        return self.replace(self.values + other.values)


def uniform_axis(lo, hi, step):
    """Multiples of ``step`` inside ``[lo, hi]`` (closed, tolerant to rounding)."""
    if not step > 0:
        raise ValueError("step must be positive")
    tol = 1e-9
    k0 = int(np.ceil(lo / step - tol))
    k1 = int(np.floor(hi / step + tol))
    return np.arange(k0, k1 + 1) * step


def grid_axes_from_lattice(spec, ranges):
    """Axes of a diagonal (rectangular) lattice inside a box."""
    t = np.asarray(spec.matrix)
    if np.any(t[~np.eye(3, dtype=bool)] != 0):
        raise ValueError("grid axes need a diagonal sampling matrix")
    ranges = np.asarray(ranges, dtype=float)
    axes = [uniform_axis(ranges[i, 0], ranges[i, 1], t[i, i]) for i in range(3)]
    if ranges[0, 1] - ranges[0, 0] >= 2 * np.pi * (1 - 1e-15):
        axes[0] = axes[0][axes[0] < ranges[0, 1] - 1e-9 * t[0, 0]]
    return tuple(axes)


def _integrals(phantom, geom, alpha, beta, v):
    line = ray(alpha, beta, v, geom, check_range=False).unit()
    return line_integral(phantom, line)


def simulate(phantom, geom, points, lattice_tag="", chunk=1 << 19):
    """Line integrals at scattered ``(alpha, beta, v)`` samples.

    Parameters
    ----------
    phantom : Phantom
    geom : HelixGeometry
    points : array_like, shape (N, 3)
    lattice_tag : str
    chunk : int
        Rays processed per block.

    Returns
    -------
    Sinogram
        Values in the order of ``points``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if np.any(np.abs(pts[:, 1]) > geom.B * (1 + 1e-12)):
        raise ValueError("sample source angle outside [-B, B]")
    if np.any(np.abs(pts[:, 0]) >= np.pi / 2):
        raise ValueError("sample fan angle must satisfy |alpha| < pi/2")
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        out[s:s + chunk] = _integrals(phantom, geom, p[:, 0], p[:, 1], p[:, 2])
    return Sinogram(out, geom, lattice_tag, coords=pts)


def simulate_grid(phantom, geom, axes, lattice_tag="", views_per_chunk=None):
    """Line integrals on a regular grid; ``values`` shaped (Na, Nb, Nv)."""
    a, b, v = (np.asarray(x, dtype=float) for x in axes)
    if np.any(np.abs(b) > geom.B * (1 + 1e-12)):
        raise ValueError("grid source angle outside [-B, B]")
    out = np.empty((len(a), len(b), len(v)))
    if views_per_chunk is None:
        views_per_chunk = max(1, (1 << 19) // max(1, len(a) * len(v)))
    for s in range(0, len(b), views_per_chunk):
        bb = b[s:s + views_per_chunk]
        out[:, s:s + len(bb), :] = _integrals(phantom, geom, a[:, None, None], bb[None, :, None], v[None, None, :])
    return Sinogram(out, geom, lattice_tag, axes=(a, b, v))


def add_noise(sinogram, sigma, seed=0):
    """Additive white Gaussian noise with standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return sinogram.replace(sinogram.values.copy())
    rng = np.random.default_rng(seed)
    return sinogram.replace(sinogram.values + rng.normal(0.0, sigma, size=sinogram.values.shape))


def write_sinogram(path, sinogram, matrix=None):
    """Text header followed by little-endian float64 ``(alpha, beta, v, value)`` quadruples."""
    g = sinogram.geometry
    lines = [
        _MAGIC,
        "geometry " + " ".join(f"{k}={float(val)!r}" for k, val in {**g.as_dict(), "B": g.B}.items()),
        f"lattice_tag {sinogram.lattice_tag or '-'}",
        f"count {len(sinogram)}",
    ]
    if sinogram.is_grid:
        lines.append("grid " + " ".join(str(len(a)) for a in sinogram.axes))
    if matrix is not None:
        lines.append("matrix " + " ".join(repr(float(x)) for x in np.asarray(matrix).ravel()))
    lines.append("end_header")
    quad = np.empty((len(sinogram), 4), dtype="<f8")
    quad[:, :3] = sinogram.points
    quad[:, 3] = sinogram.flat_values
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(quad.tobytes())


def read_sinogram(path):
    """Inverse of :func:`write_sinogram`; returns ``(sinogram, matrix_or_None)``."""
    with open(path, "rb") as fh:
        header = {}
        first = fh.readline().decode("ascii").strip()
        if first != _MAGIC:
            raise ValueError(f"{path}: not a sinogram file")
        while True:
            raw = fh.readline()
            if not raw:
                raise ValueError(f"{path}: truncated header")
            line = raw.decode("ascii").strip()
            if line == "end_header":
                break
            key, _, rest = line.partition(" ")
            header[key] = rest
        data = np.frombuffer(fh.read(), dtype="<f8")
    geo = dict(item.split("=") for item in header["geometry"].split())
    geom = HelixGeometry(float(geo["R"]), float(geo["h"]), float(geo["Z"]), float(geo["rho"]), float(geo["B"]))
    count = int(header["count"])
    if data.size != 4 * count:
        raise ValueError(f"{path}: expected {count} samples, found {data.size / 4:g}")
    quad = data.reshape(count, 4)
    tag = header.get("lattice_tag", "-")
    tag = "" if tag == "-" else tag
    matrix = None
    if "matrix" in header:
        matrix = np.array([float(x) for x in header["matrix"].split()]).reshape(3, 3)
    if "grid" in header:
        na, nb, nv = (int(x) for x in header["grid"].split())
        q = quad.reshape(na, nb, nv, 4)
        axes = (q[:, 0, 0, 0].copy(), q[0, :, 0, 1].copy(), q[0, 0, :, 2].copy())
        return Sinogram(q[..., 3].copy(), geom, tag, axes=axes), matrix
    return Sinogram(quad[:, 3].copy(), geom, tag, coords=quad[:, :3].copy()), matrix


def write_sinogram_csv(path, sinogram):
    """Debug dump with columns ``alpha,beta,v,value``."""
    data = np.column_stack([sinogram.points, sinogram.flat_values])
    np.savetxt(path, data, delimiter=",", header="alpha,beta,v,value", comments="", fmt="%.17g")
