"""Sectional curvature of the three basic metrics on random planes.

Expected: Calabi curvature is 1/(4 vol) = 1/4, the gradient metric is flat
on a Riemann surface, and the L2 (Mabuchi) metric is non-positively curved.
In two complex dimensions the gradient metric is no longer flat; the last
section records whether K_mabuchi <= K_gradient < K_calabi holds on each
plane.  Nothing there is asserted.
"""
import numpy as np

from kahlerlab.errors import DegeneratePlane
from kahlerlab.geometry import (
    Background,
    band_limited_field,
    build_potential,
    normalize_potential,
    project_tangent,
    safe_potential_scale,
)
from kahlerlab.jacobi import sectional_curvature
from kahlerlab.spectral import Grid


def random_point(grid, rng):
    phi = band_limited_field(grid, rng, 2)
    return normalize_potential(build_potential(0.3 * safe_potential_scale(grid, phi) * phi,
                                               Background(grid)))


def survey(grid, count, rng):
    P = random_point(grid, rng)
    out = {"mabuchi": [], "gradient": [], "calabi": []}
    for _ in range(count):
        a = project_tangent(P, band_limited_field(grid, rng, 2))
        b = project_tangent(P, band_limited_field(grid, rng, 2))
        for metric in out:
            try:
                out[metric].append(sectional_curvature(P, a, b, metric)[1])
            except DegeneratePlane:
                pass
    return out


rng = np.random.default_rng(2024)

# %% one complex dimension
res = survey(Grid(1, 32), 50, rng)
print("n = 1, 50 random planes")
for metric, ks in res.items():
    print(f"  {metric:9s} min {min(ks): .3e}   max {max(ks): .3e}")

# %% two complex dimensions
res = survey(Grid(2, 8), 10, rng)
print("\nn = 2, 10 random planes (normalized curvature)")
print("  plane   mabuchi       gradient      calabi")
for i, (m, g, c) in enumerate(zip(res["mabuchi"], res["gradient"], res["calabi"])):
    order = "K_M <= K_G < K_C" if m <= g < c else "ordering fails"
    print(f"  {i:5d}  {m: .3e}  {g: .3e}  {c: .3e}   {order}")
