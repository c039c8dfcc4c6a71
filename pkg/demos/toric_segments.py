"""Symplectic coordinates: L2 geodesics are straight lines.

Torus-invariant potentials on the 1-d torus are convex functions
F(xi) = xi^2/2 + periodic.  Their Legendre duals u(x) are again of this form.
A straight segment between two duals solves the L2 geodesic equation but
not the gradient-metric one, while a gradient geodesic computed on the
complex side and transported by the Legendre transform does.
"""
import numpy as np

from kahlerlab.geodesic import integrate_geodesic
from kahlerlab.geometry import Background, MetricParams, build_potential, project_tangent
from kahlerlab.spectral import Grid
from kahlerlab.toric import (
    ConvexPotential,
    ToricPath,
    complex_to_toric,
    gradient_toric_residual,
    l2_toric_residual,
    legendre,
    legendre_identity_residuals,
    max_residual,
)

tp = 2 * np.pi
s = np.arange(64) / 64
F0 = ConvexPotential(0.005 * np.cos(tp * s) + 0.001 * np.sin(2 * tp * s))
F1 = ConvexPotential(0.004 * np.sin(tp * s) - 0.002 * np.cos(2 * tp * s))
u0, u1 = legendre(F0), legendre(F1)

# %% the transform itself
r = legendre_identity_residuals(F0, u0)
print(f"biconjugation error   {np.max(np.abs(legendre(u0).periodic - F0.periodic)):.2e}")
print(f"u'(x) - xi(x)         {r.slope:.2e}")
print(f"u'' F'' - 1           {r.reciprocity:.2e}")

# %% a segment in symplectic coordinates
times = np.linspace(0, 1, 11)
seg = ToricPath(times, [(1 - t) * u0.periodic + t * u1.periodic for t in times])
print(f"\nsegment: max |u_tt|            {max(r['max_abs_udd'] for r in l2_toric_residual(seg)):.2e}")
print(f"segment: gradient residual     {max_residual(gradient_toric_residual(seg)):.3e}")

# %% a gradient geodesic from the complex side
grid = Grid(1, 32)
x = grid.coords[0]
P0 = build_potential(0.003 * np.cos(tp * x) + 0.001 * np.sin(2 * tp * x), Background(grid))
psi0 = project_tangent(P0, 0.01 * np.sin(tp * x) + 0.004 * np.cos(2 * tp * x))
traj = integrate_geodesic(P0, psi0, MetricParams.gradient(), 1e-3, 0.1)
sel = range(0, len(traj), 10)
path = ToricPath.from_potentials([traj.times[k] for k in sel],
                                 [legendre(complex_to_toric(traj.phis[k][:, 0]), 64) for k in sel])
print(f"\ntransported gradient geodesic: gradient residual {max_residual(gradient_toric_residual(path)):.2e}")
print(f"transported gradient geodesic: max |u_tt|        "
      f"{max(r['max_abs_udd'] for r in l2_toric_residual(path)):.2e}")
