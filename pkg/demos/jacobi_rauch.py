"""Jacobi fields against the constant-curvature model.

For the Calabi metric (curvature 1/4 with vol = 1) a unit normal Jacobi field
with J(0) = 0 has norm 2 sin(t/2).  The alternative closed form
|sin(2t)| is printed alongside; it is not what the numerics produce.
For the sum metric the linearized field is checked against a finite
difference of two geodesics.
"""
import math

import numpy as np

from kahlerlab.geodesic import integrate_geodesic
from kahlerlab.geometry import (
    Background,
    MetricParams,
    band_limited_field,
    build_potential,
    flat_potential,
    inner_product,
    normalize_potential,
    project_tangent,
    safe_potential_scale,
)
from kahlerlab.jacobi import integrate_jacobi, jacobi_fd_oracle, printed_jacobi_bound, sphere_jacobi_norm
from kahlerlab.spectral import Grid

grid = Grid(1, 32)
x, y = grid.coords
tp = 2 * np.pi

# %% Calabi great circle
P = flat_potential(Background(grid))
cal = MetricParams.calabi()
psi = np.cos(tp * x) / math.sqrt(2 * np.pi ** 4)
w0 = np.cos(tp * y)
w0 /= math.sqrt(inner_product(P, w0, w0, cal))
traj = integrate_geodesic(P, psi, cal, 0.01, 1.0)
J = integrate_jacobi(traj, np.zeros(grid.shape), w0)
print("   t    |J(t)|       2 sin(t/2)   |sin(2t)|")
for k in range(0, len(J.times), 20):
    t = J.times[k]
    print(f"{t:5.2f}  {J.norms[k]:.8f}  {sphere_jacobi_norm(t):.8f}  {printed_jacobi_bound(t):.8f}")

# %% linearization vs finite differences, sum metric
rng = np.random.default_rng(3)
phi = band_limited_field(grid, rng, 2)
P0 = normalize_potential(build_potential(0.3 * safe_potential_scale(grid, phi) * phi,
                                         Background(grid)))
psi0 = project_tangent(P0, 0.05 * band_limited_field(grid, rng, 2))
w = project_tangent(P0, 0.05 * band_limited_field(grid, rng, 2))
params = MetricParams.sum_metric()
lin = integrate_jacobi(integrate_geodesic(P0, psi0, params, 0.01, 0.2),
                       np.zeros(grid.shape), w).v[-1]
print("\n  eps      relative difference to the linearized field")
for eps in (1e-3, 1e-4, 5e-5):
    fd = jacobi_fd_oracle(P0, psi0, w, params, 0.2, eps, dt=0.01)
    print(f"  {eps:<8} {np.max(np.abs(fd - lin)) / np.max(np.abs(lin)):.3e}")
