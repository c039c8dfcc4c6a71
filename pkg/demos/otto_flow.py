"""Gradient flow of the K-energy in the restricted Otto metric.

On a flat background the flow is the heat equation for the density, so it
can be compared with the exact Fourier solution.  On a curved background the
density is pushed by the scalar potential and the K-energy decreases.
"""
import numpy as np

from kahlerlab.geometry import Background
from kahlerlab.otto import Density, heat_flow_exact, integrate_flow
from kahlerlab.spectral import Grid

grid = Grid(1, 32)
x, y = grid.coords
tp = 2 * np.pi
rho = 1 + 0.3 * np.sin(tp * (x + y)) + 0.2 * np.cos(tp * (3 * x - y))

# %% flat background
flat = Background(grid)
rho0 = Density(rho, flat).normalized()
flow = integrate_flow(rho0, dt=1e-3, T=0.1)
print("flat background")
print("   t     max|rho - heat|   mass - 1      K-energy   (equals the entropy int rho log rho)")
for k in range(0, len(flow.times), 20):
    t = flow.times[k]
    err = np.max(np.abs(flow.rhos[k] - heat_flow_exact(grid, rho0.rho, t)))
    m = flow.monitors[k]
    print(f"{t:5.2f}   {err:15.2e}   {m['mass'] - 1: .2e}   {m['k_energy']:.8f}")

# %% curved background
curved = Background(grid, 0.1 / (2 * np.pi ** 2) * np.cos(tp * x))
flow = integrate_flow(Density(rho, curved).normalized(), dt=1e-3, T=0.05)
nu = flow.column("k_energy")
print("\ncurved background")
print("   t     K-energy      max|S - Sbar|   min rho")
for k in range(0, len(flow.times), 10):
    m = flow.monitors[k]
    print(f"{m['t']:5.3f}   {m['k_energy']:.8f}   {m['curvature_gap']:.4e}     {m['min_rho']:.4f}")
print(f"largest single-step K-energy change: {np.max(np.diff(nu)):.3e}")
