"""Sampling lattices for helical projection data.

A lattice is ``{T k : k in Z^3}`` in ``(alpha, beta, v)``. Its dual
``2 pi T^{-T}`` holds the centers of the spectral replicas produced by
sampling; the interlaced lattice packs replicas of the support set
tighter than the rectangular (Nyquist) lattice of its bounding box.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import pi_v_range

__all__ = [
    "LatticeSpec",
    "TilingReport",
    "efficient_dual",
    "efficient_sampling_matrix",
    "efficient_matrix_closed_form",
    "uniform_sampling_matrix",
    "gain_ratio",
    "gain_ratio_det",
    "scan_box",
    "enumerate_lattice",
    "count_lattice_points",
    "tiling_disjointness",
    "write_lattice_csv",
    "read_lattice_csv",
]


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Sampling matrix with its dual and optional enumeration box.

    Parameters
    ----------
    matrix : array_like, shape (3, 3)
        Columns are the lattice generators in ``(alpha, beta, v)``.
    ranges : array_like, shape (3, 2), optional
        Enumeration box ``[[lo, hi], ...]`` per coordinate.
    tag : str
        Short name recorded with sampled data.
    """

    matrix: np.ndarray
    ranges: np.ndarray = None
    tag: str = ""

    def __post_init__(self):
        t = np.array(self.matrix, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(t)) < 1e-300 or np.linalg.cond(t) > 1e14:
            raise ValueError("sampling matrix is singular")
        t.setflags(write=False)
        object.__setattr__(self, "matrix", t)
        if self.ranges is not None:
            r = np.array(self.ranges, dtype=float).reshape(3, 2)
            r.setflags(write=False)
            object.__setattr__(self, "ranges", r)

    @property
    def dual(self):
        """``2 pi T^{-T}``."""
        return 2 * np.pi * np.linalg.inv(self.matrix).T

    @property
    def density_det(self):
        """Volume of one lattice cell, ``|det T|``."""
        return abs(float(np.linalg.det(self.matrix)))

    def with_ranges(self, ranges):
        return LatticeSpec(self.matrix, ranges, self.tag)


@dataclass(frozen=True)
class TilingReport:
    """Outcome of the Monte-Carlo replica-overlap check."""

    n_probes: int
    overlaps: int
    n_replicas_checked: int
    covered_fraction: float
    dual_scale: float


def efficient_dual(params):
    """Dual basis of the interlaced lattice (columns are replica offsets)."""
    g = params.geometry
    W, R, rho, Wv, D = params.Omega, g.R, g.rho, params.Wv, params.D
    return np.array(
        [
            [W * (R + rho), 2 * W * R, -2 * W * R],
            [W * rho + D, -D, D],
            [Wv, Wv, Wv],
        ]
    )


def efficient_matrix_closed_form(params):
    """Explicit inverse of :func:`efficient_dual` (times ``2 pi``, transposed)."""
    g = params.geometry
    W, R, rho, Wv, D = params.Omega, g.R, g.rho, params.Wv, params.D
    q = 3 * R * D + rho * D + 2 * R * W * rho
    scale = np.pi / (Wv * W * q)
    return scale * np.array(
        [
            [2 * D * Wv, W * rho * Wv, -Wv * (2 * D + W * rho)],
            [4 * R * W * Wv, -W * Wv * (3 * R + rho), W * Wv * (rho - R)],
            [0.0, W * q, W * q],
        ]
    )


def efficient_sampling_matrix(params):
    """Interlaced sampling lattice ``T = 2 pi (dual)^{-T}``."""
    dual = efficient_dual(params)
    if abs(np.linalg.det(dual)) < 1e-300:
        raise ValueError("dual matrix is singular")
    # the explicit inverse keeps the structural zero exact
    return LatticeSpec(efficient_matrix_closed_form(params), tag="interlaced")


def uniform_sampling_matrix(params):
    """Rectangular Nyquist lattice of the support set's bounding box."""
    g = params.geometry
    box = np.array([params.Omega * (g.R + g.rho), params.Omega * g.rho + params.DWv, params.Wv])
    return LatticeSpec(np.diag(np.pi / box), tag="uniform")


def gain_ratio(params):
    """Sampling-density gain ``det T / det U`` in closed form."""
    g = params.geometry
    W, R, rho, D = params.Omega, g.R, g.rho, params.D
    return 4 * (R + rho) * (W * rho + params.DWv) / (2 * R * W * rho + 3 * R * D + rho * D)


def gain_ratio_det(params):
    """``det T / det U`` from the matrices themselves."""
    return efficient_sampling_matrix(params).density_det / uniform_sampling_matrix(params).density_det


def scan_box(geom, alpha_range="fan", v_margin=1.1, alpha_margin=1.0):
    """Acquisition box ``[[a_lo, a_hi], [-B, B], [-v_max, v_max]]``.

    Parameters
    ----------
    alpha_range : {"fan", "full"}
        ``"fan"`` keeps rays that can meet the object cylinder,
        ``|alpha| <= arcsin(rho/R)``; ``"full"`` is ``[-pi, pi)``.
    """
    vmax = pi_v_range(geom, v_margin)
    if alpha_range == "fan":
        a = geom.fan_half_angle * alpha_margin
        arange = [-a, a]
    elif alpha_range == "full":
        arange = [-np.pi, np.pi]
    else:
        raise ValueError(f"unknown alpha_range {alpha_range!r}")
    return np.array([arange, [-geom.B, geom.B], [-vmax, vmax]])


def _k1_intervals(t, ranges, k23, rtol=1e-12):
    """Range of the first index for each (k2, k3) pair."""
    c = k23 @ t[:, 1:].T
    span = ranges[:, 1] - ranges[:, 0]
    lo = np.full(len(k23), -np.inf)
    hi = np.full(len(k23), np.inf)
    ok = np.ones(len(k23), dtype=bool)
    periodic_alpha = span[0] >= 2 * np.pi * (1 - 1e-15)
    for j in range(3):
        a = t[j, 0]
        tol = rtol * max(span[j], 1.0)
        rlo, rhi = ranges[j, 0] - tol, ranges[j, 1] + tol
        if j == 0 and periodic_alpha:
            # half-open [-pi, pi) so that no ray appears twice
            rhi = ranges[j, 1] - tol
        if a == 0.0:
            ok &= (c[:, j] >= rlo) & (c[:, j] <= rhi)
            continue
        b1 = (rlo - c[:, j]) / a
        b2 = (rhi - c[:, j]) / a
        lo = np.maximum(lo, np.minimum(b1, b2))
        hi = np.minimum(hi, np.maximum(b1, b2))
    k1lo = np.ceil(lo)
    k1hi = np.floor(hi)
    ok &= k1hi >= k1lo
    return k1lo, k1hi, ok


def _k23_candidates(t, ranges):
    corners = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(3, -1)
    kc = np.linalg.solve(t, corners)
    kmin = np.floor(kc.min(axis=1)) - 1
    kmax = np.ceil(kc.max(axis=1)) + 1
    k2 = np.arange(kmin[1], kmax[1] + 1)
    k3 = np.arange(kmin[2], kmax[2] + 1)
    return np.array(np.meshgrid(k2, k3, indexing="ij")).reshape(2, -1).T


def count_lattice_points(spec, ranges=None):
    """Number of lattice points in the box without materializing them."""
    ranges = _resolve_ranges(spec, ranges)
    t = spec.matrix
    k23 = _k23_candidates(t, ranges)
    lo, hi, ok = _k1_intervals(t, ranges, k23)
    return int(np.sum(np.where(ok, hi - lo + 1, 0)))


def _resolve_ranges(spec, ranges):
    if ranges is None:
        ranges = spec.ranges
    if ranges is None:
        raise ValueError("no enumeration ranges given")
    ranges = np.array(ranges, dtype=float).reshape(3, 2)
    if np.any(ranges[:, 1] < ranges[:, 0]):
        raise ValueError("ranges must satisfy lo <= hi")
    return ranges


def enumerate_lattice(spec, ranges=None, return_indices=False):
    """All lattice points ``T k`` inside a box.

    The box is closed, except that when the ``alpha`` range spans a full
    period its upper end is excluded.

    Parameters
    ----------
    spec : LatticeSpec
    ranges : array_like, shape (3, 2), optional
        Defaults to ``spec.ranges``.
    return_indices : bool
        Also return the integer triples ``k``.

    Returns
    -------
    points : ndarray, shape (N, 3)
        Ordered lexicographically in ``k``.
    k : ndarray of int64, shape (N, 3)
        Only when ``return_indices`` is true.
    """
    ranges = _resolve_ranges(spec, ranges)
    t = spec.matrix
    k23 = _k23_candidates(t, ranges)
    lo, hi, ok = _k1_intervals(t, ranges, k23)
    k23, lo, hi = k23[ok], lo[ok], hi[ok]
    counts = (hi - lo + 1).astype(np.int64)
    total = int(counts.sum())
    k = np.empty((total, 3), dtype=np.int64)
    if total:
        starts = np.repeat(lo.astype(np.int64), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        k[:, 0] = starts + offs
        k[:, 1] = np.repeat(k23[:, 0].astype(np.int64), counts)
        k[:, 2] = np.repeat(k23[:, 1].astype(np.int64), counts)
        order = np.lexsort((k[:, 2], k[:, 1], k[:, 0]))
        k = k[order]
    pts = k @ t.T
    if return_indices:
        return pts, k
    return pts


def _replica_offsets(dual, box, reach=4):
    n = np.arange(-reach, reach + 1)
    grid = np.array(np.meshgrid(n, n, n, indexing="ij")).reshape(3, -1).T
    grid = grid[np.any(grid != 0, axis=1)]
    off = grid @ dual.T
    near = np.all(np.abs(off) <= 2 * box, axis=1)
    return off[near]


def tiling_disjointness(support, n_probes=10**6, seed=0, dual_scale=1.0, dual=None, chunk=1 << 18):
    """Monte-Carlo check that dual-lattice replicas of the support set do not overlap.

    Probes are drawn uniformly from the set itself (rejection sampling in
    its bounding box); a probe counts as an overlap when it also lies in a
    replica shifted by a nonzero dual-lattice vector.

    Parameters
    ----------
    support : FrequencySupportSet
    n_probes : int
        Number of probes drawn in the bounding box.
    seed : int
    dual_scale : float
        Multiplies the dual basis; values below 1 pack replicas tighter.
    dual : ndarray, optional
        Dual basis; defaults to :func:`efficient_dual`.

    Returns
    -------
    TilingReport
    """
    if n_probes <= 0:
        raise ValueError("n_probes must be positive")
    if dual is None:
        dual = efficient_dual(support.params)
    dual = np.asarray(dual, dtype=float) * dual_scale
    box = support.bounding_box()
    offsets = _replica_offsets(dual, box)
    rng = np.random.default_rng(seed)
    overlaps = 0
    inside = 0
    done = 0
    while done < n_probes:
        n = min(chunk, n_probes - done)
        p = rng.uniform(-box, box, size=(n, 3))
        p = p[support.contains(p[:, 0], p[:, 1], p[:, 2])]
        inside += len(p)
        hit = np.zeros(len(p), dtype=bool)
        for off in offsets:
            q = p - off
            hit |= support.contains(q[:, 0], q[:, 1], q[:, 2])
        overlaps += int(hit.sum())
        done += n
    vol_set = inside / n_probes * np.prod(2 * box)
    covered = vol_set / abs(np.linalg.det(dual))
    return TilingReport(int(n_probes), overlaps, len(offsets), float(covered), float(dual_scale))


def write_lattice_csv(path, points, matrix):
    """Write ``alpha,beta,v`` rows after a comment line holding the matrix row-major."""
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write("# matrix " + " ".join(repr(float(v)) for v in matrix.ravel()) + "\n")
        fh.write("alpha,beta,v\n")
        np.savetxt(fh, np.asarray(points, dtype=float).reshape(-1, 3), delimiter=",", fmt="%.17g")


def read_lattice_csv(path):
    """Inverse of :func:`write_lattice_csv`; returns ``(points, matrix)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# matrix "):
            raise ValueError("missing matrix header")
        matrix = np.array([float(s) for s in first.split()[2:]]).reshape(3, 3)
        fh.readline()
        pts = np.loadtxt(fh, delimiter=",", ndmin=2).reshape(-1, 3)
    return pts, matrix
