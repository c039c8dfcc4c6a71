"""Fast invariant suite covering every module, used by ``kahlerlab selftest``.

Each check returns a scalar and compares it against a tolerance.  Sizes are
kept small so the whole suite runs in a few seconds; the data depend only on
the seed, so repeated runs produce identical tables.
"""
from __future__ import annotations

import math

import numpy as np

from .geodesic import (
    calabi_exact_potential,
    calabi_sphere_residual,
    integrate_geodesic,
)
from .geometry import (
    Background,
    MetricParams,
    band_limited_field,
    build_potential,
    hessian_pairing,
    laplacian,
    normalize_potential,
    project_tangent,
    safe_potential_scale,
)
from .jacobi import integrate_jacobi, jacobi_fd_oracle, sectional_curvature
from .otto import Density, heat_flow_exact, integrate_flow
from .solvers import ZERO_MEAN, ma_forward, ma_inverse, poisson_solve
from .spectral import Grid, complex_hessian, flat_inverse_laplacian, flat_laplacian


def _curved(grid, rng, scale=0.3):
    phi = band_limited_field(grid, rng, 2)
    return normalize_potential(build_potential(scale * safe_potential_scale(grid, phi) * phi,
                                               Background(grid)))


def check_spectral(rng):
    grid = Grid(1, 16)
    f = band_limited_field(grid, rng, 3)
    f = f - f.mean()
    return float(np.max(np.abs(flat_laplacian(grid, flat_inverse_laplacian(grid, f)) - f)))


def check_integral_identity(rng):
    # pointwise exact in one complex dimension, so probe n = 2
    grid = Grid(2, 8)
    P = _curved(grid, rng)
    f = band_limited_field(grid, rng, 2)
    F = complex_hessian(grid, f)
    lhs = P.integrate(hessian_pairing(P, F, F))
    rhs = P.integrate(laplacian(P, f) ** 2)
    return abs(lhs - rhs) / abs(rhs)


def check_poisson(rng):
    grid = Grid(2, 8)
    P = _curved(grid, rng)
    f = project_tangent(P, band_limited_field(grid, rng, 1))
    u, _ = poisson_solve(P, f, ZERO_MEAN, tol=1e-12)
    return float(np.max(np.abs(laplacian(P, u) - f)))


def check_monge_ampere(rng):
    grid = Grid(1, 32)
    P = _curved(grid, rng)
    Q = ma_inverse(ma_forward(P), P.background)
    return float(np.max(np.abs(Q.phi - P.phi)))


def _calabi_data():
    grid = Grid(1, 32)
    x, y = grid.coords
    tp = 2 * np.pi
    P0 = normalize_potential(build_potential(
        0.01 * np.cos(tp * y) + 0.005 * np.sin(tp * (x + y)), Background(grid)))
    psi0 = project_tangent(P0, 0.02 * np.cos(tp * x) + 0.01 * np.sin(2 * tp * y))
    return P0, psi0


def check_calabi_oracle(rng):
    P0, psi0 = _calabi_data()
    traj = integrate_geodesic(P0, psi0, MetricParams.calabi(), 0.025, 0.2)
    exact = calabi_exact_potential(traj.potential(0), traj.psis[0], 0.2)
    return float(np.max(np.abs(exact.phi - traj.phis[-1])))


def check_sphere_model(rng):
    P0, psi0 = _calabi_data()
    return calabi_sphere_residual(ma_forward(P0), laplacian(P0, psi0), 0.3, P0.background)


def check_speed(rng):
    grid = Grid(1, 32)
    P0 = _curved(grid, rng)
    psi0 = project_tangent(P0, 0.05 * band_limited_field(grid, rng, 2))
    traj = integrate_geodesic(P0, psi0, MetricParams.sum_metric(), 0.02, 0.2)
    s = traj.column("speed_sq")
    return float(np.max(np.abs(s - s[0])) / s[0])


def _planes(rng, count=5):
    grid = Grid(1, 16)
    P = _curved(grid, rng)
    return P, [(project_tangent(P, band_limited_field(grid, rng, 2)),
                project_tangent(P, band_limited_field(grid, rng, 2))) for _ in range(count)]


def check_calabi_curvature(rng):
    P, planes = _planes(rng)
    return max(abs(sectional_curvature(P, a, b, "calabi")[1] - 0.25) for a, b in planes)


def check_gradient_flatness(rng):
    P, planes = _planes(rng)
    return max(abs(sectional_curvature(P, a, b, "gradient")[1]) for a, b in planes)


def check_mabuchi_sign(rng):
    P, planes = _planes(rng)
    return max(sectional_curvature(P, a, b, "mabuchi")[1] for a, b in planes)


def check_jacobi(rng):
    grid = Grid(1, 16)
    P0 = _curved(grid, rng)
    psi0 = project_tangent(P0, 0.05 * band_limited_field(grid, rng, 2))
    w = project_tangent(P0, 0.05 * band_limited_field(grid, rng, 2))
    params = MetricParams.sum_metric()
    traj = integrate_geodesic(P0, psi0, params, 0.01, 0.05)
    lin = integrate_jacobi(traj, np.zeros(grid.shape), w).v[-1]
    fd = jacobi_fd_oracle(P0, psi0, w, params, 0.05, 1e-4, dt=0.01)
    return float(np.max(np.abs(lin - fd)) / np.max(np.abs(fd)))


def check_heat(rng):
    grid = Grid(1, 32)
    bg = Background(grid)
    rho0 = Density(1.0 + 0.3 * band_limited_field(grid, rng, 2), bg).normalized()
    flow = integrate_flow(rho0, 0.01, 0.05, monitor_energy=False)
    return float(np.max(np.abs(flow.rhos[-1] - heat_flow_exact(grid, rho0.rho, flow.times[-1]))))


def check_legendre(rng):
    from .toric import ConvexPotential, legendre

    s = np.arange(64) / 64
    F = ConvexPotential(0.005 * np.cos(2 * np.pi * s) + 0.001 * np.sin(4 * np.pi * s))
    return float(np.max(np.abs(legendre(legendre(F)).periodic - F.periodic)))


CHECKS = [
    ("spectral_poisson_roundtrip", check_spectral, 1e-12),
    ("integral_identity", check_integral_identity, 1e-6),
    ("variable_poisson_n2", check_poisson, 1e-8),
    ("monge_ampere_roundtrip", check_monge_ampere, 1e-8),
    ("calabi_oracle", check_calabi_oracle, 1e-6),
    ("sphere_model_residual", check_sphere_model, 1e-10),
    ("sum_metric_speed_drift", check_speed, 1e-6),
    ("calabi_curvature_quarter", check_calabi_curvature, 1e-8),
    ("gradient_curvature_flat", check_gradient_flatness, 1e-6),
    ("mabuchi_curvature_sign", check_mabuchi_sign, 1e-10),
    ("jacobi_vs_finite_difference", check_jacobi, 5e-3),
    ("otto_flat_heat", check_heat, 1e-8),
    ("legendre_biconjugation", check_legendre, 1e-9),
]


def run_checks(seed: int = 0) -> list[dict]:
    """Run every check with its own generator derived from ``seed``."""
    rows = []
    for i, (name, fn, tol) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        value = float(fn(rng))
        ok = math.isfinite(value) and value <= tol
        rows.append({"check": name, "value": value, "tolerance": tol,
                     "passed": "yes" if ok else "no"})
    return rows
