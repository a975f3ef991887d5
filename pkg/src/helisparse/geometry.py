"""Helical trajectory, detector rays and PI-line coordinates.

All quantities are SI: lengths in meters, angles in radians. A ray is
addressed by ``(alpha, beta, v)``: ``beta`` is the source angle on the
helix, ``alpha`` the fan angle measured at the source on a curved
detector, and ``v`` the axial offset (relative to the source height) at
which the ray crosses the helix cylinder on the far side.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "HelixGeometry",
    "DetectorCoord",
    "PiLineCoords",
    "Line",
    "helix_point",
    "ray",
    "pi_line_solve",
    "pi_line_point",
    "pi_v_range",
]


@dataclass(frozen=True)
class HelixGeometry:
    """Scanner constants of a helical cone-beam acquisition.

    Parameters
    ----------
    R : float
        Helix radius (m).
    h : float
        Pitch, axial advance per turn (m).
    Z : float
        Half-length of the object support along z (m).
    rho : float
        Radius of the object cylinder (m), ``0 < rho < R``.
    B : float, optional
        Half-range of the source angle. Defaults to ``2*pi*Z/h``.
    """

    R: float
    h: float
    Z: float
    rho: float
    B: float = field(default=None)

    def __post_init__(self):
        for name in ("R", "h", "Z", "rho"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
        if not self.rho < self.R:
            raise ValueError(f"rho must be smaller than R (rho={self.rho}, R={self.R})")
        if self.B is None:
            object.__setattr__(self, "B", 2 * np.pi * self.Z / self.h)
        elif not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B!r}")
        for name in ("R", "h", "Z", "rho", "B"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def rbar_max(self):
        """Worst-case normalized radius ``rho / R``."""
        return self.rho / self.R

    @property
    def fan_half_angle(self):
        """Fan angle of rays tangent to the object cylinder."""
        return float(np.arcsin(self.rho / self.R))

    def as_dict(self):
        """Flat key-value form used by the config and file headers."""
        return {"R": self.R, "h": self.h, "Z": self.Z, "rho": self.rho}


class DetectorCoord(NamedTuple):
    """Position on the curved detector: fan angle and axial offset."""

    alpha: float
    v: float


class PiLineCoords(NamedTuple):
    """PI-line coordinates ``(beta1, beta2, t)`` of a point.

    ``beta1 < beta2 < beta1 + 2*pi`` and the point sits at fraction ``t``
    along the chord from ``helix_point(beta1)`` to ``helix_point(beta2)``.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    t: np.ndarray


class Line(NamedTuple):
    """Parametric line ``origin + s * direction`` (arrays of shape (..., 3))."""

    origin: np.ndarray
    direction: np.ndarray

    def unit(self):
        """Same line with the direction scaled to unit length."""
        d = np.asarray(self.direction, dtype=float)
        return Line(np.asarray(self.origin, dtype=float), d / np.linalg.norm(d, axis=-1, keepdims=True))

    def at(self, s):
        """Points at parameter values ``s`` (broadcast against the line)."""
        s = np.asarray(s, dtype=float)[..., None]
        return self.origin + s * self.direction


def _check_beta(beta, geom, tol=1e-12):
    beta = np.asarray(beta, dtype=float)
    if np.any(np.abs(beta) > geom.B * (1 + tol)):
        raise ValueError(f"source angle outside [-B, B] with B={geom.B:.6g}")
    return beta


def helix_point(beta, geom):
    """Source position on the helix.

    Parameters
    ----------
    beta : float or array_like
        Source angle(s), ``|beta| <= B``.
    geom : HelixGeometry

    Returns
    -------
    ndarray, shape (..., 3)
        ``(R cos beta, R sin beta, h beta / 2 pi)``.
    """
    beta = _check_beta(beta, geom)
    return np.stack(
        [geom.R * np.cos(beta), geom.R * np.sin(beta), geom.h * beta / (2 * np.pi)], axis=-1
    )


def ray(alpha, beta, v, geom, check_range=True):
    """Line of the projection ray with detector coordinates ``(alpha, beta, v)``.

    The line is parametrized by the in-plane distance ``r`` from the source:
    ``x = R cos b - r cos(a + b)``, ``y = R sin b - r sin(a + b)``,
    ``z = r v / (2 R cos a) + h b / 2 pi``.

    Parameters
    ----------
    alpha, beta, v : float or array_like
        Broadcastable ray coordinates; ``|alpha| < pi/2``.
    geom : HelixGeometry
    check_range : bool
        Reject source angles outside ``[-B, B]``.

    Returns
    -------
    Line
        Origin at the source, direction per unit ``r`` (not normalized).
    """
    alpha, beta, v = np.broadcast_arrays(
        np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float), np.asarray(v, dtype=float)
    )
    if np.any(np.abs(alpha) >= np.pi / 2):
        raise ValueError("fan angle must satisfy |alpha| < pi/2")
    if check_range:
        _check_beta(beta, geom)
    origin = np.stack(
        [geom.R * np.cos(beta), geom.R * np.sin(beta), geom.h * beta / (2 * np.pi)], axis=-1
    )
    direction = np.stack(
        [-np.cos(alpha + beta), -np.sin(alpha + beta), v / (2 * geom.R * np.cos(alpha))], axis=-1
    )
    return Line(origin, direction)


def _chord_from(beta1, x, y, R):
    """Fan angle, exit angle and in-plane fraction of (x, y) seen from beta1."""
    dx = x - R * np.cos(beta1)
    dy = y - R * np.sin(beta1)
    alpha = np.angle(np.exp(1j * (np.arctan2(-dy, -dx) - beta1)))
    delta = np.pi + 2 * alpha
    t = np.hypot(dx, dy) / (2 * R * np.cos(alpha))
    return alpha, delta, t


def pi_line_solve(x, geom, check_range=True, tol=1e-14, max_iter=200):
    """PI-line coordinates of points inside the helix cylinder.

    The in-plane chord through ``x`` is fixed once ``beta1`` is chosen, so
    the problem is a scalar root in ``beta1`` of the axial mismatch
    ``h (beta1 + t (beta2 - beta1)) / 2 pi - z``. The mismatch is monotone on
    ``[2 pi z / h - 2 pi, 2 pi z / h]`` and changes sign there; a safeguarded
    secant iteration inside a shrinking bracket finds it.

    Parameters
    ----------
    x : array_like, shape (..., 3)
        Points with ``x**2 + y**2 < R**2``.
    geom : HelixGeometry
    check_range : bool
        Raise if a PI-interval leaves ``[-B, B]``.

    Returns
    -------
    PiLineCoords
        Arrays with the leading shape of ``x``.
    """
    x = np.asarray(x, dtype=float)
    px, py, pz = x[..., 0], x[..., 1], x[..., 2]
    if np.any(np.hypot(px, py) >= geom.R):
        raise ValueError("point outside the helix cylinder")
    shape = px.shape
    px, py, pz = px.ravel(), py.ravel(), pz.ravel()
    k = geom.h / (2 * np.pi)

    def resid(b1):
        _, delta, t = _chord_from(b1, px, py, geom.R)
        return k * (b1 + t * delta) - pz

    hi = pz / k
    lo = hi - 2 * np.pi
    f_lo, f_hi = resid(lo), resid(hi)
    b = 0.5 * (lo + hi)
    for _ in range(max_iter):
        # secant proposal, bisection when it leaves the bracket
        denom = f_hi - f_lo
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = lo - f_lo * (hi - lo) / denom
        mid = 0.5 * (lo + hi)
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, mid, cand)
        b = cand
        fb = resid(b)
        go_hi = fb > 0
        hi = np.where(go_hi, b, hi)
        f_hi = np.where(go_hi, fb, f_hi)
        lo = np.where(go_hi, lo, b)
        f_lo = np.where(go_hi, f_lo, fb)
        if np.all((hi - lo) < tol * (1 + np.abs(b))) or np.all(np.abs(fb) < tol * k):
            break
        # interleaved bisection guarantees the bracket at least halves
        mid = 0.5 * (lo + hi)
        fm = resid(mid)
        go_hi = fm > 0
        hi = np.where(go_hi, mid, hi)
        f_hi = np.where(go_hi, fm, f_hi)
        lo = np.where(go_hi, lo, mid)
        f_lo = np.where(go_hi, f_lo, fm)
    b = np.where(np.abs(f_lo) < np.abs(f_hi), lo, hi)
    _, delta, t = _chord_from(b, px, py, geom.R)
    beta1, beta2 = b, b + delta
    if check_range and (np.any(beta1 < -geom.B * (1 + 1e-12)) or np.any(beta2 > geom.B * (1 + 1e-12))):
        raise ValueError("PI-interval exceeds the scan range [-B, B]")
    return PiLineCoords(beta1.reshape(shape), beta2.reshape(shape), t.reshape(shape))


def pi_line_point(coords, geom):
    """Point at fraction ``t`` on the chord between two helix points."""
    beta1, beta2, t = (np.asarray(c, dtype=float) for c in coords)
    a1 = np.stack([geom.R * np.cos(beta1), geom.R * np.sin(beta1), geom.h * beta1 / (2 * np.pi)], axis=-1)
    a2 = np.stack([geom.R * np.cos(beta2), geom.R * np.sin(beta2), geom.h * beta2 / (2 * np.pi)], axis=-1)
    return (1 - t)[..., None] * a1 + t[..., None] * a2


def pi_v_range(geom, margin=1.1):
    """Detector half-height in ``v`` covering every PI-window.

    Seen from the source, the turns of the helix just above and below
    project onto ``v = hα/π ± h/2``; every point of the object cylinder whose
    PI-interval contains the source projects between them. Over the fan
    ``|alpha| <= arcsin(rho/R)`` the largest ``|v|`` is therefore
    ``h/2 + h arcsin(rho/R)/pi``.

    Parameters
    ----------
    geom : HelixGeometry
    margin : float
        Multiplicative safety factor.

    Returns
    -------
    float
    """
    return margin * (geom.h / 2 + geom.h * geom.fan_half_angle / np.pi)
