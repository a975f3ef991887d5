"""Essential spectral support of helical cone-beam projection data.

Frequencies are ``(m, omega_beta, omega_v)``: ``m`` is the harmonic index
conjugate to the periodic fan angle, ``omega_beta`` is conjugate to the
source angle (rad^-1 domain, i.e. cycles-per-radian times 2 pi) and
``omega_v`` to the axial detector coordinate (rad/m).

The support of a single point's projection kernel is bounded by a bow-tie
in ``(m, omega_beta)`` dilated by ``D(omega_v)`` along ``omega_beta``, for
``|omega_v| <= W_v``. All bounds use the worst point of the object
cylinder (``rbar = rho/R``, ``|z| = Z``) so the set covers every point.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import HelixGeometry

__all__ = [
    "PolarPoint",
    "SupportParams",
    "FrequencySupportSet",
    "QuadratureError",
    "g3_coeff_mag",
    "g5_coeff_mag",
    "essential_K",
    "indicator_width",
    "linear_width",
    "c_factor",
    "d_bound",
    "wv_bound",
    "bowtie_contains",
    "support_contains",
    "support_cross_section",
    "polygon_area",
    "evaluate_Ex",
    "ex_grid",
    "in_set_energy_fraction",
]


class PolarPoint(NamedTuple):
    """Point in normalized cylindrical coordinates (``rbar = r / R``)."""

    rbar: float
    phi: float
    z: float

    @classmethod
    def from_cartesian(cls, x, geom):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[0], x[1])
        rbar = r / geom.R
        if rbar >= 1:
            raise ValueError("point outside the helix cylinder")
        phi = float(np.arctan2(x[1], x[0])) if r > 0 else 0.0
        return cls(float(rbar), phi, float(x[2]))


class QuadratureError(ValueError):
    """Raised when a quadrature self-convergence check fails."""


def _check_rbar(rbar):
    rbar = np.asarray(rbar, dtype=float)
    if np.any(rbar < 0) or np.any(rbar >= 1):
        raise ValueError("rbar must satisfy 0 <= rbar < 1")
    return rbar


def g3_coeff_mag(rbar, k):
    """Magnitude of the Fourier coefficients of ``1 / (1 + rbar^2 - 2 rbar cos b)``.

    Parameters
    ----------
    rbar : float or array_like
        Normalized radius, ``0 <= rbar < 1``.
    k : int or array_like
        Harmonic index.

    Returns
    -------
    ndarray
        ``rbar**|k| / (1 - rbar**2)``.
    """
    rbar = _check_rbar(rbar)
    k = np.abs(np.asarray(k))
    return rbar**k / (1.0 - rbar**2)


def g5_coeff_mag(rbar, n):
    """Magnitude of the Fourier coefficients of ``(1 - rbar cos b) / (1 + rbar^2 - 2 rbar cos b)``.

    The function equals ``1/2`` plus half the Poisson kernel, so the
    coefficients are 1 at ``n = 0`` and ``rbar**|n| / 2`` otherwise.
    """
    rbar = _check_rbar(rbar)
    n = np.abs(np.asarray(n))
    return np.where(n == 0, 1.0, 0.5 * rbar**n)


def essential_K(rbar):
    """Harmonic cutoff holding 98% of the energy of the ``g3`` coefficients.

    ``K = floor(log(0.01 (1 + rbar^2)) / (2 log rbar))``; 0 at ``rbar = 0``.
    """
    rbar = float(_check_rbar(rbar))
    if rbar == 0.0:
        return 0
    return int(np.floor(np.log(0.01 * (1 + rbar**2)) / (2 * np.log(rbar))))


def indicator_width(B):
    """Half-width ``16/B`` of the essential band of the ``[-B, B]`` indicator."""
    if not B > 0:
        raise ValueError("B must be positive")
    return 16.0 / B


def linear_width(B):
    """Half-width ``48/B`` of the essential band of ``beta`` on ``[-B, B]``."""
    if not B > 0:
        raise ValueError("B must be positive")
    return 48.0 / B


def c_factor(z, omega_v, rbar, geom):
    """Spread factor ``C = 2|omega_v| (|z| + h B / 2 pi) / (1 - rbar)``."""
    rbar = _check_rbar(rbar)
    return 2 * np.abs(omega_v) / (1 - rbar) * (np.abs(z) + geom.h * geom.B / (2 * np.pi))


def wv_bound(geom, Omega):
    """Bound ``(R + rho) Omega / (2 sqrt(R^2 - rho^2))`` on ``|omega_v|``."""
    return (geom.R + geom.rho) * Omega / (2 * np.sqrt(geom.R**2 - geom.rho**2))


@dataclass(frozen=True)
class SupportParams:
    """Worst-case constants of the support set for one scanner and band limit.

    Build with :meth:`from_geometry`; ``K`` and ``Wv`` are derived there.
    """

    Omega: float
    K: int
    Wv: float
    geometry: HelixGeometry
    rbar_max: float

    @classmethod
    def from_geometry(cls, geom, Omega):
        if not Omega > 0:
            raise ValueError("Omega must be positive")
        rbar = geom.rbar_max
        return cls(float(Omega), essential_K(rbar), float(wv_bound(geom, Omega)), geom, rbar)

    def d(self, omega_v):
        """Dilation ``D(omega_v)``; alias of :func:`d_bound`."""
        return d_bound(omega_v, self)

    @property
    def D0(self):
        return float(self.d(0.0))

    @property
    def DWv(self):
        return float(self.d(self.Wv))

    @property
    def D(self):
        """``D(0) + D(W_v)``, the omega_beta spacing used by the interlaced lattice."""
        return self.D0 + self.DWv


def d_bound(omega_v, params):
    """Half-extent along ``omega_beta`` added to the bow-tie at ``omega_v``.

    ``D = K + 16/B + (K + 48/B)(1 + C(Z, omega_v))`` with ``K`` and ``C`` at the
    worst-case radius ``rho/R``.
    """
    g = params.geometry
    c = c_factor(g.Z, omega_v, params.rbar_max, g)
    K = params.K
    return K + indicator_width(g.B) + (K + linear_width(g.B)) * (1 + c)


def _bowtie_bounds(m, R, rho, Omega):
    m = np.asarray(m, dtype=float)
    lo = np.where(
        m >= (R - rho) * Omega, m - Omega * R, np.where(m >= 0, rho * m / (rho - R), rho * m / (rho + R))
    )
    hi = np.where(
        m <= (rho - R) * Omega, m + Omega * R, np.where(m <= 0, rho * m / (rho - R), rho * m / (rho + R))
    )
    return lo, hi


def bowtie_contains(m, k, geom, Omega):
    """Membership in the fan-beam bow-tie of an object of radius ``rho``.

    For ``|m| <= (R + rho) Omega`` the admissible ``k`` lie between two
    piecewise-linear bounds: the wedge ``rho m / (rho +- R)`` near the origin
    and the lines ``m -+ Omega R`` beyond ``|m| = (R - rho) Omega``.
    """
    m = np.asarray(m, dtype=float)
    k = np.asarray(k, dtype=float)
    lo, hi = _bowtie_bounds(m, geom.R, geom.rho, Omega)
    return (np.abs(m) <= (geom.R + geom.rho) * Omega) & (k >= lo) & (k <= hi)


class FrequencySupportSet:
    """Closed set ``{|omega_v| <= W_v, (m, omega_beta) in bow-tie dilated by D(omega_v)}``.

    Parameters
    ----------
    params : SupportParams
    """

    def __init__(self, params):
        self.params = params

    @classmethod
    def from_geometry(cls, geom, Omega):
        return cls(SupportParams.from_geometry(geom, Omega))

    @property
    def geometry(self):
        return self.params.geometry

    def contains(self, m, omega_beta, omega_v):
        p = self.params
        g = p.geometry
        m = np.asarray(m, dtype=float)
        wb = np.asarray(omega_beta, dtype=float)
        wv = np.asarray(omega_v, dtype=float)
        lo, hi = _bowtie_bounds(m, g.R, g.rho, p.Omega)
        d = d_bound(wv, p)
        return (
            (np.abs(m) <= (g.R + g.rho) * p.Omega)
            & (wb >= lo - d)
            & (wb <= hi + d)
            & (np.abs(wv) <= p.Wv)
        )

    def cross_section(self, omega_v):
        return support_cross_section(omega_v, self)

    def bounding_box(self):
        """Half-extents of the smallest box containing the set."""
        p = self.params
        g = p.geometry
        return np.array([(g.R + g.rho) * p.Omega, g.rho * p.Omega + p.DWv, p.Wv])


def support_contains(m, omega_beta, omega_v, support):
    """Vectorized membership test for a :class:`FrequencySupportSet`."""
    return support.contains(m, omega_beta, omega_v)


def support_cross_section(omega_v, support):
    """Boundary of the set at fixed ``omega_v`` as an (8, 2) vertex array.

    Vertices ``(m, omega_beta)`` are listed counter-clockwise. The polygon is
    centrally symmetric and non-convex (notched at ``m = 0``).
    """
    p = support.params
    g = p.geometry
    if abs(omega_v) > p.Wv:
        raise ValueError(f"|omega_v| = {abs(omega_v)} exceeds W_v = {p.Wv}")
    d = float(d_bound(omega_v, p))
    W, R, rho = p.Omega, g.R, g.rho
    return np.array(
        [
            [(R + rho) * W, rho * W + d],
            [0.0, d],
            [(rho - R) * W, rho * W + d],
            [-(R + rho) * W, -rho * W + d],
            [-(R + rho) * W, -rho * W - d],
            [0.0, -d],
            [(R - rho) * W, -rho * W - d],
            [(R + rho) * W, rho * W - d],
        ]
    )


def polygon_area(vertices):
    """Shoelace area of a simple polygon."""
    x, y = np.asarray(vertices, dtype=float).T
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _ex_samples(x, geom, n):
    """Per-beta quantities of the single-point projection kernel."""
    beta = np.linspace(-geom.B, geom.B, n + 1)
    px, py, pz = (float(c) for c in x)
    a = geom.R - px * np.cos(beta) - py * np.sin(beta)
    b = px * np.sin(beta) - py * np.cos(beta)
    den = a * a + b * b
    alpha = np.arctan2(b, a)
    v = 2 * geom.R * (pz - geom.h * beta / (2 * np.pi)) * a / den
    return beta, alpha, v, 1.0 / den


def evaluate_Ex(x, m, omega_beta, omega_v, geom, quadrature_step=None, rtol=1e-6, check=True):
    """Spectrum of the projections of a single point ``x``.

    The projection of a point is concentrated on the curve
    ``(alpha*(beta), beta, v*(beta))`` swept as the source moves, weighted by
    the inverse squared in-plane distance. Its 3D Fourier transform reduces
    to one integral over ``beta``::

        E(m, wb, wv) = 1/(2 pi) int_{-B}^{B} exp(-j (wb beta + m alpha* + wv v*)) / d(beta)^2 dbeta

    evaluated with composite Simpson weights (Richardson-extrapolated
    trapezoid). The same samples at twice the step give an error estimate.

    Parameters
    ----------
    x : array_like, shape (3,)
        Point inside the object cylinder.
    m, omega_beta, omega_v : array_like
        Broadcastable frequency coordinates.
    geom : HelixGeometry
    quadrature_step : float, optional
        Step in ``beta``; defaults to ``B / 4096``.
    rtol : float
        Tolerance of the step-halving check, relative to the ``L1`` norm of
        the integrand.
    check : bool
        Raise :class:`QuadratureError` when the check fails.

    Returns
    -------
    ndarray of complex
    """
    x = np.asarray(x, dtype=float)
    if np.hypot(x[0], x[1]) > geom.rho * (1 + 1e-12) or abs(x[2]) > geom.Z * (1 + 1e-12):
        raise ValueError("point outside the object cylinder")
    step = geom.B / 4096 if quadrature_step is None else float(quadrature_step)
    if not step > 0:
        raise ValueError("quadrature step must be positive")
    n = int(np.ceil(2 * geom.B / step / 4)) * 4
    beta, alpha, v, wgt = _ex_samples(x, geom, n)
    m, wb, wv = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (m, omega_beta, omega_v)))
    shape = m.shape
    m, wb, wv = m.ravel(), wb.ravel(), wv.ravel()
    # trapezoid weights at steps h, 2h, 4h; Simpson = Richardson of the first two
    hstep = 2 * geom.B / n
    trap = []
    for stride in (1, 2, 4):
        w = np.zeros(n + 1)
        w[::stride] = stride * hstep
        w[[0, -1]] = 0.5 * stride * hstep
        trap.append(w)
    simpson_fine = (4 * trap[0] - trap[1]) / 3
    simpson_coarse = (4 * trap[1] - trap[2]) / 3
    weights = np.stack([simpson_fine, simpson_coarse], axis=1)
    out = np.empty(m.size, dtype=complex)
    err = np.empty(m.size)
    block = max(1, (1 << 22) // (n + 1))
    l1 = np.sum(trap[0] * wgt) / (2 * np.pi)
    for s in range(0, m.size, block):
        sl = slice(s, s + block)
        phase = np.exp(
            -1j * (np.outer(wb[sl], beta) + np.outer(m[sl], alpha) + np.outer(wv[sl], v))
        ) * (wgt / (2 * np.pi))
        both = phase @ weights
        out[sl] = both[:, 0]
        err[sl] = np.abs(both[:, 0] - both[:, 1])
    if check and np.any(err > rtol * max(l1, 1e-300)):
        raise QuadratureError(
            f"quadrature not converged (max change {err.max():.3g} vs scale {l1:.3g}); reduce the step"
        )
    return out.reshape(shape)


def ex_grid(x, ms, omega_betas, omega_v, geom, quadrature_step=None, check=True):
    """``E_x`` on the grid ``ms x omega_betas`` at one ``omega_v``; shape (len(ms), len(omega_betas))."""
    mm, bb = np.meshgrid(np.asarray(ms, dtype=float), np.asarray(omega_betas, dtype=float), indexing="ij")
    return evaluate_Ex(x, mm, bb, omega_v, geom, quadrature_step=quadrature_step, check=check)


def in_set_energy_fraction(values, ms, omega_betas, omega_v, support):
    """Share of ``sum |values|^2`` on the grid that lies inside the support set."""
    mm, bb = np.meshgrid(np.asarray(ms, dtype=float), np.asarray(omega_betas, dtype=float), indexing="ij")
    inside = support.contains(mm, bb, omega_v)
    e = np.abs(values) ** 2
    return float(e[inside].sum() / e.sum())
