"""Which sign of (1/2)(Delta psi)^2 belongs in the sum-metric geodesic system?

The acceleration is obtained by inverting Delta - Delta^2 (for the sum
metric), so its right-hand side must have zero mean against the volume form.
With the sign obtained by expanding the displayed equation the mean vanishes
by an integration-by-parts identity; with the opposite sign it equals
int (Delta psi)^2 dmu, which is never zero.  The integrator therefore drops
that mean and reports it as ``dropped_mass``.
"""
import numpy as np

from kahlerlab.errors import PositivityLoss
from kahlerlab.geodesic import CORRECTED, PRINTED, acceleration, integrate_geodesic
from kahlerlab.geometry import (
    Background,
    MetricParams,
    band_limited_field,
    build_potential,
    laplacian,
    normalize_potential,
    project_tangent,
    safe_potential_scale,
)
from kahlerlab.spectral import Grid

rng = np.random.default_rng(5)
grid = Grid(1, 32)
phi = band_limited_field(grid, rng, 2)
P = normalize_potential(build_potential(0.3 * safe_potential_scale(grid, phi) * phi,
                                        Background(grid)))
psi = project_tangent(P, 0.05 * band_limited_field(grid, rng, 2))
params = MetricParams.sum_metric()

# %% the defect at one state
target = P.integrate(laplacian(P, psi) ** 2)
for mode in (CORRECTED, PRINTED):
    _, m = acceleration(P, psi, params, mode)
    print(f"{mode:22s} dropped mass {m: .3e}")
print(f"{'int (Delta psi)^2 dmu':22s}              {target: .3e}")

# %% consequences along a trajectory: speed conservation
print("\nrelative speed drift over t in [0, 0.2], dt = 0.01")
for mode in (CORRECTED, PRINTED):
    try:
        traj = integrate_geodesic(P, psi, params, 0.01, 0.2, mode=mode)
    except PositivityLoss as exc:
        print(f"  {mode:22s} stopped: {exc}")
        continue
    s = traj.column("speed_sq")
    print(f"  {mode:22s} {np.max(np.abs(s - s[0])) / s[0]:.3e}")
