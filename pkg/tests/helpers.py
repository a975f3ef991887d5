"""Shared test utilities and independent oracles."""

import warnings

import numpy as np
from scipy import ndimage
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import least_squares
from scipy.special import sici

from helisparse.geometry import pi_line_point


def random_interior_points(rng, geom, n, shrink=0.98):
    """Uniform points in the object cylinder whose PI-intervals stay inside the scan."""
    r = geom.rho * shrink * np.sqrt(rng.uniform(0, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    # PI-intervals reach up to one turn either side of the point
    zmax = geom.Z - geom.h
    z = rng.uniform(-zmax, zmax, n)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def random_lines_through_cylinder(rng, n, radius, halflength):
    """Lines through uniform points of a cylinder with isotropic unit directions."""
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    p = np.stack([r * np.cos(phi), r * np.sin(phi), rng.uniform(-halflength, halflength, n)], axis=-1)
    d = rng.normal(size=(n, 3))
    return p, d / np.linalg.norm(d, axis=1, keepdims=True)


def marched_line_integral(phantom, origin, direction, resolution=500, iters=52, chunk=512):
    """Line integrals from point evaluations only.

    Densities add over ellipsoids, so each ellipsoid is marched on its own:
    the unit-speed line is clipped to the ellipsoid's bounding sphere and
    the single-ellipsoid phantom is evaluated every ``a_min / resolution``.
    Each density jump between samples is located by bisection, and the
    integral is the sum of jump position times jump size. A chord is missed
    only when the line grazes the surface so closely that the chord is
    shorter than one step.
    """
    from helisparse.phantom import Phantom

    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    out = np.zeros(len(origin))
    for e in phantom.ellipsoids:
        single = Phantom((e,))
        step = e.semiaxes.min() / resolution
        rb = 1.001 * e.semiaxes.max()
        oc = origin - e.center
        b = np.einsum("ij,ij->i", oc, direction)
        disc = b * b - (np.einsum("ij,ij->i", oc, oc) - rb**2)
        hit = np.flatnonzero(disc > 0)
        if hit.size == 0:
            continue
        half = np.sqrt(disc[hit])
        s_lo = -b[hit] - half
        grid = np.arange(int(np.ceil(2 * half.max() / step)) + 2) * step
        for start in range(0, hit.size, chunk):
            idx = hit[start:start + chunk]
            o = origin[idx]
            d = direction[idx]
            s = s_lo[start:start + chunk, None] + grid[None, :]
            vals = single.eval(o[:, None, :] + s[..., None] * d[:, None, :])
            ri, ki = np.nonzero(vals[:, 1:] != vals[:, :-1])
            lo = s[ri, ki]
            hi = s[ri, ki + 1]
            before = vals[ri, ki]
            after = vals[ri, ki + 1]
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                same = single.eval(o[ri] + mid[:, None] * d[ri]) == before
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            jump = 0.5 * (lo + hi)
            out[idx] += np.bincount(ri, weights=jump * (before - after), minlength=len(idx))
    return out


def bandlimited_lattice_case(support, spec, target_spec, sigma=(0.15, 4.0, 1.0), n_tones=30, margin=4.5, seed=1):
    """Synthetic signal whose spectrum lies strictly inside the support set.

    The signal is a sum of complex tones inside the set multiplied by a
    Gaussian envelope of widths ``sigma``; the envelope spreads each tone
    by about ``1/sigma``, so tones are kept at least ``margin / sigma``
    from the set boundary. Samples are taken on ``spec`` over
    ``+-5.2 sigma`` and the reference is evaluated on the diagonal lattice
    ``target_spec`` over ``+-2.5 sigma``.

    Returns
    -------
    points, values, target_axes, reference
    """
    from helisparse.lattice import enumerate_lattice
    from helisparse.scan import grid_axes_from_lattice

    sig = np.asarray(sigma, dtype=float)
    rng = np.random.default_rng(seed)
    bb = support.bounding_box()
    ll = np.linspace(-margin, margin, 7)
    offs = np.array(np.meshgrid(ll, ll, ll)).reshape(3, -1).T / sig
    tones = []
    while len(tones) < n_tones:
        w = rng.uniform(-bb, bb)
        if support.contains(*(w + offs).T).all():
            tones.append(w)
    tones = np.array(tones)
    amp = rng.normal(size=n_tones) + 1j * rng.normal(size=n_tones)

    def f(x):
        env = np.exp(-0.5 * ((x / sig) ** 2).sum(-1))
        return env * np.real(np.exp(1j * x @ tones.T) @ amp)

    pts = enumerate_lattice(spec, np.outer(5.2 * sig, [-1, 1]))
    axes = grid_axes_from_lattice(target_spec, np.outer(2.5 * sig, [-1, 1]))
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    return pts, f(pts), axes, f(grid)


def fourier_coeff_quad(func, k):
    """(1/2 pi) int_{-pi}^{pi} cos(k b) func(b) db for an even function."""
    with warnings.catch_warnings():
        # the tolerance sits at the roundoff floor; the result is still accurate
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(func, -np.pi, np.pi, weight="cos", wvar=k, epsabs=1e-14, epsrel=1e-14, limit=400)
    return val / (2 * np.pi)


def energy_fraction_g3(rbar, K):
    """Share of sum_k |g3_k|^2 inside |k| <= K, from the geometric series."""
    r2 = rbar**2
    total = (1 + r2) / (1 - r2)
    return (1 + 2 * sum(r2**k for k in range(1, K + 1))) / total


def minimal_K(rbar, threshold=0.98):
    K = 0
    while energy_fraction_g3(rbar, K) < threshold:
        K += 1
    return K


def quad_fraction(power, width, total):
    pts = np.linspace(0, width, 64)[1:-1]
    inside, _ = quad(power, 0, width, limit=4000, points=pts, epsabs=0, epsrel=1e-12)
    return 2 * inside / total


def indicator_fraction_closed(W, B):
    """Share of |2 sin(B w)/w|^2 in |w| <= W: (2/pi)(Si(2WB) - sin^2(WB)/(WB))."""
    x = W * B
    return 2 / np.pi * (sici(2 * x)[0] - np.sin(x) ** 2 / x)


def linear_fraction_closed(W, B):
    """Share of |(2j/w^2)(w B cos(B w) - sin(B w))|^2 in |w| <= W, by direct antiderivative."""
    x = W * B
    inside = 4 * B**3 * (
        2 / 3 * sici(2 * x)[0]
        + (2 * x * np.sin(2 * x) + (1 + x**2) * np.cos(2 * x) - 1 - 3 * x**2) / (3 * x**3)
    )
    return inside / (4 * np.pi * B**3 / 3)


def _distance_to_chords(x, b1, b2, geom):
    a1 = np.stack([geom.R * np.cos(b1), geom.R * np.sin(b1), geom.h * b1 / (2 * np.pi)], -1)
    a2 = np.stack([geom.R * np.cos(b2), geom.R * np.sin(b2), geom.h * b2 / (2 * np.pi)], -1)
    d = a2 - a1
    t = np.clip(np.einsum("...i,...i", x - a1, d) / np.einsum("...i,...i", d, d), 0, 1)
    return np.linalg.norm(a1 + t[..., None] * d - x, axis=-1)


def uniqueness_probe(x, geom, n1=721, n2=361, tol=0.02):
    """Distinct PI-lines of x found from a grid scan of the (beta1, beta2) plane.

    Every local minimum of the chord-to-point distance below ``tol`` on a
    grid covering two turns of beta1 and all spans ``0 < beta2 - beta1 < 2 pi``
    seeds a least-squares refinement in ``(beta1, beta2, t)``. Converged
    solutions are clustered; a unique PI-line gives exactly one cluster.
    """
    c = 2 * np.pi * x[2] / geom.h
    b1 = np.linspace(c - 3 * np.pi, c + np.pi, n1)
    span = np.linspace(0, 2 * np.pi, n2 + 2)[1:-1]
    bb1, ss = np.meshgrid(b1, span, indexing="ij")
    dist = _distance_to_chords(x, bb1, bb1 + ss, geom)
    seeds = np.argwhere((dist < tol) & (dist == ndimage.minimum_filter(dist, size=3)))

    def resid(p):
        return pi_line_point((p[0], p[1], p[2]), geom) - x

    sols = []
    for i, j in seeds:
        p0 = [bb1[i, j], bb1[i, j] + ss[i, j], 0.5]
        fit = least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        b1s, b2s, t = fit.x
        if np.abs(fit.fun).max() < 1e-10 and 0 < b2s - b1s < 2 * np.pi and 0 <= t <= 1:
            sols.append(fit.x)
    sols = np.array(sols)
    distinct = []
    for s in sols:
        if not any(np.abs(s - d).max() < 1e-6 for d in distinct):
            distinct.append(s)
    return len(seeds), distinct
