"""Interlaced versus uniform sampling for a desk-scale helical scanner.

Builds the frequency support set for R=2, h=0.2, Z=0.4, rho=0.5 at an
object band limit of 66 rad/m, derives both sampling lattices, and shows
how the sampling gain grows with the band limit.

Run: python demos/lattice_design.py
"""

import numpy as np

from helisparse import HelixGeometry, SupportParams, efficient_sampling_matrix, gain_ratio, uniform_sampling_matrix
from helisparse.lattice import count_lattice_points, scan_box

geom = HelixGeometry(R=2.0, h=0.2, Z=0.4, rho=0.5)
params = SupportParams.from_geometry(geom, 66.0)
print(f"K = {params.K}, W_v = {params.Wv:.3f} rad/m, D(0) = {params.D0:.3f}, D(W_v) = {params.DWv:.3f}")

t = efficient_sampling_matrix(params)
u = uniform_sampling_matrix(params)
np.set_printoptions(precision=5, suppress=True)
print("\ninterlaced sampling matrix T (columns are lattice basis vectors in alpha, beta, v):")
print(t.matrix)
print("\nuniform sampling matrix U:")
print(u.matrix)

# samples per unit volume of (alpha, beta, v) are 1/|det|
reduction = 1 - u.density_det / t.density_det
print(f"\ndensity reduction of T over U: {100 * reduction:.2f}%")

box = scan_box(geom, "fan")
nt, nu = count_lattice_points(t, box), count_lattice_points(u, box)
print(f"samples in the PI-window scan box: T {nt}, U {nu}, ratio {nt / nu:.4f}")

print("\nband limit  gain  reduction")
for omega in (5, 20, 66, 150, 300, 500):
    g = gain_ratio(SupportParams.from_geometry(geom, omega))
    print(f"{omega:10d}  {g:.3f}  {100 * (1 - 1 / g):5.1f}%")
