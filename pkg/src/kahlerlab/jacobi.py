"""Jacobi fields, sectional curvature probes and conjugate-point diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePlane, WrongParams
from .geodesic import (
    CORRECTED,
    PRINTED,
    GEODESIC_TOL,
    Trajectory,
    acceleration_terms,
    integrate_geodesic,
    tangency_target,
    _Stepper,
)
from .geometry import (
    KahlerPotential,
    MetricParams,
    complex_pairing,
    gradient_pairing,
    hessian_pairing,
    inner_product,
    laplacian,
    laplacian_from_hessian,
    project_tangent,
)
from .solvers import Tangency, ZERO_MEAN, apply_combination, combination_solve, poisson_solve
from .spectral import complex_gradient, complex_hessian


# ---- linearized acceleration ------------------------------------------------------------
def _delta_laplacian(P: KahlerPotential, GiVGi: np.ndarray, f: np.ndarray) -> np.ndarray:
    """First variation of ``Delta_phi`` in the direction v, applied to a fixed ``f``."""
    return -np.real(np.einsum("...jk,...kj->...", GiVGi, complex_hessian(P.grid, f)))


def jacobi_rhs(P: KahlerPotential, psi: np.ndarray, psi_dot: np.ndarray, v: np.ndarray,
               w: np.ndarray, params: MetricParams, mode: str = CORRECTED,
               tol: float = GEODESIC_TOL) -> np.ndarray:
    """``w'`` for the Jacobi field ``(v, w)`` along the geodesic state ``(P, psi, psi')``.

    Obtained by differentiating the acceleration equation in the direction
    ``(phi, psi) -> (phi + s v, psi + s w)``, including the tangency constant.
    """
    if not params.well_posed:
        raise WrongParams("Jacobi fields need a well-posed metric")
    grid = P.grid
    a_, b_, g_ = params.as_tuple()
    Gi = P.inverse_metric
    V = complex_hessian(grid, v)
    W = complex_hessian(grid, w)
    Psi = complex_hessian(grid, psi)
    GiVGi = Gi @ V @ Gi
    p = complex_gradient(grid, psi)
    q = complex_gradient(grid, w)

    lap = np.real(np.einsum("...jk,...kj->...", Gi, Psi))
    hess_sq = hessian_pairing(P, Psi, Psi)
    grad_sq = np.real(np.einsum("...k,...kj,...j->...", np.conj(p), Gi, p))

    d_grad = (-np.real(np.einsum("...k,...kj,...j->...", np.conj(p), GiVGi, p))
              + 2.0 * np.real(np.einsum("...k,...kj,...j->...", np.conj(p), Gi, q)))
    GiPsi = Gi @ Psi
    d_hess = (-2.0 * np.real(np.einsum("...jk,...kl,...lj->...", GiVGi, Psi, GiPsi))
              + 2.0 * np.real(np.einsum("...jk,...kj->...", Gi @ W, GiPsi)))
    d_lap = (-np.real(np.einsum("...jk,...kj->...", GiVGi, Psi))
             + np.real(np.einsum("...jk,...kj->...", Gi, W)))

    sign = 1.0 if mode == CORRECTED else -1.0
    if mode not in (CORRECTED, PRINTED):
        raise ValueError(f"unknown mode {mode!r}")
    dR = a_ * d_grad - sign * 0.5 * b_ * d_hess + b_ * lap * d_lap
    if g_:
        inner = hess_sq - 0.5 * lap * lap
        d_inner = d_hess - lap * d_lap
        dR = dR + sign * g_ * (_delta_laplacian(P, GiVGi, inner) + laplacian(P, d_inner))

    # variation of the operator acting on the known acceleration
    dD = np.zeros(grid.shape)
    if b_ or g_:
        dlap_a = _delta_laplacian(P, GiVGi, psi_dot)
        dD = dD - b_ * dlap_a
        if g_:
            dD = dD + g_ * (_delta_laplacian(P, GiVGi, laplacian(P, psi_dot))
                            + laplacian(P, dlap_a))
    rhs = dR - dD
    lap_v = np.real(np.einsum("...jk,...kj->...", Gi, V))
    target = P.integrate(d_grad + (grad_sq - psi_dot) * lap_v)
    w_dot, _ = combination_solve(P, rhs, params, Tangency(target), tol=tol)
    return w_dot


# ---- Jacobi integration ----------------------------------------------------------------
@dataclass
class JacobiSeries:
    times: list = field(default_factory=list)
    v: list = field(default_factory=list)
    w: list = field(default_factory=list)
    norms: list = field(default_factory=list)

    def norm_array(self) -> np.ndarray:
        return np.array(self.norms)


def integrate_jacobi(traj: Trajectory, v0: np.ndarray, w0: np.ndarray,
                     tol: float = GEODESIC_TOL) -> JacobiSeries:
    """Integrate ``(v, w)`` along a stored trajectory.

    The geodesic rk4 stages are recomputed from each stored state so the
    Jacobi field is the exact linearization of the discrete flow map.
    """
    if traj.integrator != "rk4":
        raise WrongParams("integrate_jacobi needs an rk4 trajectory")
    params, mode = traj.params, traj.mode
    st = _Stepper(params, mode, traj.background, traj.delta_floor, tol)
    out = JacobiSeries()
    v, w = np.array(v0, dtype=float), np.array(w0, dtype=float)

    def record(k, v, w):
        P = traj.potential(k)
        out.times.append(traj.times[k])
        out.v.append(v)
        out.w.append(w)
        out.norms.append(math.sqrt(max(inner_product(P, v, v, params), 0.0)))

    record(0, v, w)
    for k in range(len(traj) - 1):
        t, dt = traj.times[k], traj.times[k + 1] - traj.times[k]
        phi, psi, a0 = traj.phis[k], traj.psis[k], traj.accels[k]
        P1 = traj.potential(k)
        # stage 1
        kv1, kw1 = w, jacobi_rhs(P1, psi, a0, v, w, params, mode, tol)
        # stage 2
        phi2, psi2 = phi + 0.5 * dt * psi, psi + 0.5 * dt * a0
        P2, a2, _ = st.accel(phi2, psi2, t + 0.5 * dt)
        v2, w2 = v + 0.5 * dt * kv1, w + 0.5 * dt * kw1
        kv2, kw2 = w2, jacobi_rhs(P2, psi2, a2, v2, w2, params, mode, tol)
        # stage 3
        phi3, psi3 = phi + 0.5 * dt * psi2, psi + 0.5 * dt * a2
        P3, a3, _ = st.accel(phi3, psi3, t + 0.5 * dt)
        v3, w3 = v + 0.5 * dt * kv2, w + 0.5 * dt * kw2
        kv3, kw3 = w3, jacobi_rhs(P3, psi3, a3, v3, w3, params, mode, tol)
        # stage 4
        phi4, psi4 = phi + dt * psi3, psi + dt * a3
        P4, a4, _ = st.accel(phi4, psi4, t + dt)
        v4, w4 = v + dt * kv3, w + dt * kw3
        kv4, kw4 = w4, jacobi_rhs(P4, psi4, a4, v4, w4, params, mode, tol)
        v = v + dt / 6.0 * (kv1 + 2 * kv2 + 2 * kv3 + kv4)
        w = w + dt / 6.0 * (kw1 + 2 * kw2 + 2 * kw3 + kw4)
        record(k + 1, v, w)
    return out


def jacobi_fd_oracle(P0: KahlerPotential, psi0: np.ndarray, w: np.ndarray,
                     params: MetricParams, t: float, eps: float, dt: float = 1e-3,
                     mode: str = CORRECTED) -> np.ndarray:
    """``(exp(psi0 + eps w, t) - exp(psi0, t)) / eps`` computed by two integrations."""
    if not np.any(w):
        return np.zeros(P0.grid.shape)
    base = integrate_geodesic(P0, psi0, params, dt, t, mode=mode)
    pert = integrate_geodesic(P0, psi0 + eps * w, params, dt, t, mode=mode)
    return (pert.phis[-1] - base.phis[-1]) / eps


# ---- sphere-model reference values ---------------------------------------------------------
def sphere_jacobi_norm(t, volume: float = 1.0, speed: float = 1.0):
    """Norm of a unit normal Jacobi field with ``J(0) = 0`` on a sphere of radius ``2 sqrt(vol)``."""
    R = 2.0 * math.sqrt(volume)
    return R * np.sin(speed * np.asarray(t) / R) / speed


def printed_jacobi_bound(t, volume: float = 1.0):
    """The alternative closed form ``|sin(2 t sqrt(vol))| / sqrt(vol)``, tabulated for comparison."""
    return np.abs(np.sin(2.0 * np.asarray(t) * math.sqrt(volume))) / math.sqrt(volume)


# ---- sectional curvature ----------------------------------------------------------------------
def _gram(P, psi1, psi2, product):
    g11 = product(P, psi1, psi1)
    g22 = product(P, psi2, psi2)
    g12 = product(P, psi1, psi2)
    det = g11 * g22 - g12 * g12
    if g11 <= 0 or g22 <= 0 or det <= 1e-14 * g11 * g22:
        raise DegeneratePlane(det / (g11 * g22) if g11 > 0 and g22 > 0 else 0.0)
    return det


def _a_field(P, s1, s2, Psi1, Psi2, lap1, lap2, tol):
    rhs = lap1 * lap2 - hessian_pairing(P, Psi1, Psi2)
    a, m = poisson_solve(P, rhs, ZERO_MEAN, tol=tol)
    return a, m


def sectional_curvature(P: KahlerPotential, psi1: np.ndarray, psi2: np.ndarray,
                        metric: str, tol: float = 1e-12):
    """Return ``(numerator, normalized)`` for the plane spanned by ``psi1, psi2``."""
    if metric == "calabi":
        gram = _gram(P, psi1, psi2, lambda Q, f, h: inner_product(Q, f, h, MetricParams.calabi()))
        vol = P.integrate(np.ones(P.grid.shape))
        num = gram / (4.0 * vol)
        return num, num / gram
    if metric == "mabuchi":
        gram = _gram(P, psi1, psi2, lambda Q, f, h: Q.integrate(f * h))
        im = np.imag(complex_pairing(P, psi1, psi2))
        num = -P.integrate(im * im)
        return num, num / gram
    if metric == "gradient":
        # normalized by the full real-gradient pairing (d., d.)
        gram = _gram(P, psi1, psi2, lambda Q, f, h: 2.0 * Q.integrate(gradient_pairing(Q, f, h)))
        Psi1 = complex_hessian(P.grid, psi1)
        Psi2 = complex_hessian(P.grid, psi2)
        l1 = laplacian_from_hessian(P, Psi1)
        l2 = laplacian_from_hessian(P, Psi2)
        a12, _ = _a_field(P, psi1, psi2, Psi1, Psi2, l1, l2, tol)
        a11, _ = _a_field(P, psi1, psi1, Psi1, Psi1, l1, l1, tol)
        a22, _ = _a_field(P, psi2, psi2, Psi2, Psi2, l2, l2, tol)

        def dd(f, h):
            return 2.0 * P.integrate(gradient_pairing(P, f, h))

        num = 0.5 * dd(a12, a12) - 0.5 * dd(a11, a22)
        return num, num / gram
    raise ValueError(f"unknown metric {metric!r}")


def curvature_defects(P, psi1, psi2, tol: float = 1e-12):
    """Solvability defects of the three Poisson problems for ``a(sigma, tau)``."""
    Psi1 = complex_hessian(P.grid, psi1)
    Psi2 = complex_hessian(P.grid, psi2)
    l1 = laplacian_from_hessian(P, Psi1)
    l2 = laplacian_from_hessian(P, Psi2)
    return tuple(_a_field(P, None, None, A, B, la, lb, tol)[1]
                 for A, B, la, lb in ((Psi1, Psi2, l1, l2), (Psi1, Psi1, l1, l1),
                                      (Psi2, Psi2, l2, l2)))


# ---- Rauch comparison ---------------------------------------------------------------------------
RAUCH_COLUMNS = ("t", "jacobi_norm", "sphere_norm", "printed_bound", "max_probe_curvature")


def rauch_report(traj: Trajectory, w0: np.ndarray, probes: int = 4, probe_stride: int | None = None,
                 rng: np.random.Generator | None = None):
    """Compare the Jacobi norm along ``traj`` with the Calabi sphere model.

    ``w0`` is made tangent, orthogonal to ``psi0`` and of unit norm in the
    trajectory metric.  Returns a list of row dicts with ``RAUCH_COLUMNS``.
    """
    from .geometry import band_limited_field

    params = traj.params
    P0 = traj.potential(0)
    psi0 = traj.psis[0]
    w = project_tangent(P0, w0)
    g = lambda f, h: inner_product(P0, f, h, params)  # noqa: E731
    w = w - g(w, psi0) / g(psi0, psi0) * psi0
    w = w / math.sqrt(g(w, w))
    speed = math.sqrt(g(psi0, psi0))
    series = integrate_jacobi(traj, np.zeros_like(w), w)
    vol = P0.volume
    rng = rng or np.random.default_rng(0)
    stride = probe_stride or max(1, len(traj) // 4)
    rows = []
    for k, t in enumerate(series.times):
        probe = float("nan")
        if probes and k % stride == 0 and k > 0:
            P = traj.potential(k)
            vals = []
            for _ in range(probes):
                X = project_tangent(P, band_limited_field(P.grid, rng, 2, 0.01))
                try:
                    vals.append(sectional_curvature(P, X, traj.psis[k], "gradient")[1])
                except DegeneratePlane:
                    continue
            probe = max(vals) if vals else float("nan")
        rows.append({
            "t": t,
            "jacobi_norm": series.norms[k],
            "sphere_norm": float(sphere_jacobi_norm(t, vol, speed)),
            "printed_bound": float(printed_jacobi_bound(t, vol)),
            "max_probe_curvature": probe,
        })
    return rows


def write_table(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([repr(float(r[c])) for c in columns])


# ---- conjugate points ------------------------------------------------------------------------------
CONJUGATE_COLUMNS = ("t", "min_singular", "min_singular_over_t", "flagged")


def conjugate_scan(P0: KahlerPotential, psi0: np.ndarray, params: MetricParams, t_max: float,
                   probe_count: int = 3, dt: float = 1e-2, eps: float = 1e-5,
                   samples: int = 10, threshold: float = 1e-3,
                   rng: np.random.Generator | None = None):
    """Smallest singular value of ``w -> d exp(t w)`` on a random probe subspace.

    The probes are orthonormal in the selected metric at ``P0``.  A time is
    flagged as a candidate conjugate time when the singular value divided by
    ``t`` falls below ``threshold``.
    """
    from .geometry import band_limited_field

    rng = rng or np.random.default_rng(0)
    basis = []
    for _ in range(probe_count):
        w = project_tangent(P0, band_limited_field(P0.grid, rng, 2))
        for b in basis:
            w = w - inner_product(P0, w, b, params) * b
        w = w / math.sqrt(inner_product(P0, w, w, params))
        basis.append(w)
    base = integrate_geodesic(P0, psi0, params, dt, t_max)
    perts = [integrate_geodesic(P0, psi0 + eps * w, params, dt, t_max) for w in basis]
    idx = np.unique(np.linspace(0, len(base) - 1, samples + 1).round().astype(int))[1:]
    rows = []
    for k in idx:
        P = base.potential(k)
        J = [(p.phis[k] - base.phis[k]) / eps for p in perts]
        M = np.array([[inner_product(P, a, b, params) for b in J] for a in J])
        smin = math.sqrt(max(np.linalg.eigvalsh(M)[0], 0.0))
        t = base.times[k]
        rows.append({"t": t, "min_singular": smin, "min_singular_over_t": smin / t,
                     "flagged": float(smin / t < threshold)})
    return rows
