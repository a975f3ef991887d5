"""Analytic ellipsoid phantoms.

A phantom is an ordered list of ellipsoids whose densities add where they
overlap. Line integrals are exact: each ellipsoid is mapped to the unit
ball, where the chord length follows from a quadratic.
"""

import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "Ellipsoid",
    "Phantom",
    "eval_phantom",
    "line_integral",
    "shepp_logan_3d",
    "estimate_bandlimit",
    "read_phantom",
    "write_phantom",
]


def _euler_matrix(angles_deg):
    return Rotation.from_euler("ZYZ", angles_deg, degrees=True).as_matrix()


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Solid ellipsoid of constant density.

    Parameters
    ----------
    center : array_like, shape (3,)
    semiaxes : array_like, shape (3,)
        Strictly positive half-lengths along the body axes.
    rotation : array_like, shape (3, 3)
        Orthonormal matrix whose columns are the body axes in world frame.
    density : float
        Additive density delta.
    """

    center: np.ndarray
    semiaxes: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    density: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        s = np.asarray(self.semiaxes, dtype=float).reshape(3)
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.any(~(s > 0)):
            raise ValueError("semiaxes must be strictly positive")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-12:
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semiaxes", s)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "density", float(self.density))

    @classmethod
    def from_euler(cls, center, semiaxes, angles_deg, density):
        """Build from intrinsic z-y-z Euler angles in degrees."""
        return cls(center, semiaxes, _euler_matrix(angles_deg), density)

    @property
    def euler_deg(self):
        with warnings.catch_warnings():
            # axis-aligned bodies hit gimbal lock; any valid angle triple will do
            warnings.simplefilter("ignore", UserWarning)
            return Rotation.from_matrix(self.rotation).as_euler("ZYZ", degrees=True)

    @property
    def to_unit(self):
        """Linear map taking world offsets from the center into the unit ball."""
        return self.rotation.T / self.semiaxes[:, None]

    def scaled(self, factor):
        return Ellipsoid(self.center * factor, self.semiaxes * factor, self.rotation, self.density)

    def extent_along(self, u):
        """Largest value of ``u . p`` over the ellipsoid (support function)."""
        u = np.asarray(u, dtype=float)
        a = self.rotation @ np.diag(self.semiaxes**2) @ self.rotation.T
        return u @ self.center + np.sqrt(np.einsum("...i,ij,...j->...", u, a, u))


def _bounding_cylinder(ellipsoids):
    theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)
    radius = 0.0
    half = 0.0
    for e in ellipsoids:
        # dense angular sampling of the support function slightly underestimates
        radius = max(radius, float(e.extent_along(dirs).max()) * (1 + 1e-6))
        half = max(half, float(e.extent_along([0, 0, 1])), float(e.extent_along([0, 0, -1])))
    return radius, half


@dataclass(frozen=True, eq=False)
class Phantom:
    """Sum of ellipsoids confined to a cylinder around the z-axis.

    Parameters
    ----------
    ellipsoids : sequence of Ellipsoid
    support_radius, support_halflength : float, optional
        Cylinder containing every ellipsoid. Computed when omitted.
    """

    ellipsoids: tuple
    support_radius: float = None
    support_halflength: float = None

    def __post_init__(self):
        ells = tuple(self.ellipsoids)
        object.__setattr__(self, "ellipsoids", ells)
        radius, half = _bounding_cylinder(ells) if ells else (0.0, 0.0)
        if self.support_radius is None:
            object.__setattr__(self, "support_radius", radius)
        elif radius > self.support_radius * (1 + 1e-9):
            raise ValueError("ellipsoids extend beyond support_radius")
        if self.support_halflength is None:
            object.__setattr__(self, "support_halflength", half)
        elif half > self.support_halflength * (1 + 1e-9):
            raise ValueError("ellipsoids extend beyond support_halflength")

    def __len__(self):
        return len(self.ellipsoids)

    def scaled(self, factor):
        return Phantom(tuple(e.scaled(factor) for e in self.ellipsoids))

    def with_densities(self, densities):
        ells = tuple(
            Ellipsoid(e.center, e.semiaxes, e.rotation, d) for e, d in zip(self.ellipsoids, densities)
        )
        return Phantom(ells)

    def __add__(self, other):
        return Phantom(self.ellipsoids + other.ellipsoids)

    def eval(self, x):
        """Density at points ``x``; see :func:`eval_phantom`."""
        return eval_phantom(self, x)

    def line_integral(self, line):
        """Integrals along lines; see :func:`line_integral`."""
        return line_integral(self, line)


def eval_phantom(phantom, x):
    """Density at points ``x`` (shape (..., 3)): sum over containing ellipsoids."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for e in phantom.ellipsoids:
        q = (x - e.center) @ e.to_unit.T
        out += np.where(np.einsum("...i,...i->...", q, q) <= 1.0, e.density, 0.0)
    return out


def line_integral(phantom, line, chunk=1 << 20):
    """Exact integral of the phantom along lines.

    Parameters
    ----------
    phantom : Phantom
    line : Line
        Origins and unit directions, shape (..., 3).
    chunk : int
        Number of lines processed per block (bounds memory).

    Returns
    -------
    ndarray
        Density times chord length summed over ellipsoids.
    """
    origin = np.asarray(line.origin, dtype=float)
    direction = np.asarray(line.direction, dtype=float)
    origin, direction = np.broadcast_arrays(origin, direction)
    shape = origin.shape[:-1]
    o_all = origin.reshape(-1, 3)
    d_all = direction.reshape(-1, 3)
    out = np.zeros(o_all.shape[0])
    for start in range(0, o_all.shape[0], chunk):
        o = o_all[start:start + chunk]
        d = d_all[start:start + chunk]
        acc = out[start:start + chunk]
        for e in phantom.ellipsoids:
            m = e.to_unit
            op = (o - e.center) @ m.T
            dp = d @ m.T
            a = np.einsum("ij,ij->i", dp, dp)
            b = np.einsum("ij,ij->i", op, dp)
            c = np.einsum("ij,ij->i", op, op) - 1.0
            disc = b * b - a * c
            acc += e.density * 2.0 * np.sqrt(np.maximum(disc, 0.0)) / a
    return out.reshape(shape)


def read_phantom(path_or_text):
    """Parse the plain-text ellipsoid table.

    One ellipsoid per line: ``cx cy cz ax ay az phi theta psi density`` with
    Euler angles in degrees; ``#`` starts a comment.
    """
    text = path_or_text
    if "\n" not in str(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    ells = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        vals = body.split()
        if len(vals) != 10:
            raise ValueError(f"line {lineno}: expected 10 fields, got {len(vals)}")
        v = [float(s) for s in vals]
        ells.append(Ellipsoid.from_euler(v[0:3], v[3:6], v[6:9], v[9]))
    return Phantom(tuple(ells))


def write_phantom(phantom, path):
    with open(path, "w") as fh:
        fh.write("# cx cy cz ax ay az phi theta psi density\n")
        for e in phantom.ellipsoids:
            vals = [*e.center, *e.semiaxes, *e.euler_deg, e.density]
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def shepp_logan_3d(scale=1.0):
    """Ten-ellipsoid 3D Shepp-Logan head phantom.

    Parameters
    ----------
    scale : float
        Uniform scale factor; at ``scale=0.5`` the phantom fits a cylinder of
        radius 0.5.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    text = resources.files("helisparse").joinpath("data/shepp_logan_3d.txt").read_text()
    return read_phantom(text).scaled(scale)


def estimate_bandlimit(phantom):
    """Essential band limit ``3.3 / a`` (rad/m), ``a`` the smallest semiaxis."""
    if len(phantom) == 0:
        raise ValueError("empty phantom has no band limit")
    a = min(float(e.semiaxes.min()) for e in phantom.ellipsoids)
    return 3.3 / a
