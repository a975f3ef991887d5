"""Where the projection spectrum of a single point lands.

For a point object the projection spectrum E_x is computed by quadrature
over the helix angle, and its energy is compared with the support set at
two axial frequencies.

Run: python demos/support_containment.py
"""

import numpy as np

from helisparse import FrequencySupportSet, HelixGeometry
from helisparse.spectral import ex_grid, in_set_energy_fraction, support_cross_section

geom = HelixGeometry(R=2.5, h=0.4, Z=1.0, rho=0.5)
support = FrequencySupportSet.from_geometry(geom, 66.0)
ms = np.arange(-32, 32)
wbs = np.linspace(-20, 20, 64)

for wv in (0.0, 0.5):
    poly = support_cross_section(wv, support)
    print(f"omega_v = {wv}: cross-section reaches |omega_beta| <= {np.abs(poly[:, 1]).max():.2f}")
    for x in ([0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.35, 0.35, 0.9]):
        e = ex_grid(x, ms, wbs, wv, geom)
        frac = in_set_energy_fraction(e, ms, wbs, wv, support)
        print(f"  point {x}: {100 * frac:.2f}% of the sampled energy is inside the set")
