"""Cauchy problem for geodesics of the combination metric.

The state is the pair ``(phi, psi)`` with ``phi' = psi`` and ``psi' = a(phi, psi)``,
where ``a`` solves

    [alpha - beta Delta + gamma Delta^2] a = R(phi, psi)

and the additive constant of ``a`` (free when ``alpha = 0``) is chosen so the
tangency condition ``int psi dmu_phi = 0`` is preserved in time.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllPosedParams, LeftPositiveCone, NotKahler, PositivityLoss, WrongParams
from .geometry import (
    Background,
    KahlerPotential,
    MetricParams,
    aubin_functional,
    as_background,
    gradient_pairing,
    hessian_bound,
    hessian_pairing,
    inner_product,
    laplacian,
    laplacian_from_hessian,
    project_tangent,
)
from .solvers import Tangency, combination_solve, ma_forward, ma_inverse
from .spectral import complex_gradient, complex_hessian, integrate

log = logging.getLogger(__name__)

CORRECTED = "solvability_corrected"
PRINTED = "paper_printed"
MODES = (CORRECTED, PRINTED)

GEODESIC_TOL = 1e-12


@dataclass
class AccelerationTerms:
    """Pointwise ingredients of the right-hand side at a state."""

    grad_sq: np.ndarray       # |d psi|^2_phi in the (d, dbar) convention
    hess_sq: np.ndarray       # |i dd^c psi|^2_phi
    lap: np.ndarray           # Delta_phi psi
    hessian: np.ndarray       # psi_{j kbar}


def acceleration_terms(P: KahlerPotential, psi: np.ndarray) -> AccelerationTerms:
    grid = P.grid
    Psi = complex_hessian(grid, psi)
    Gi = P.inverse_metric
    GiPsi = Gi @ Psi
    lap = np.real(np.trace(GiPsi, axis1=-2, axis2=-1))
    hess_sq = np.real(np.einsum("...jk,...kj->...", GiPsi, GiPsi))
    p = complex_gradient(grid, psi)
    grad_sq = np.real(np.einsum("...k,...kj,...j->...", np.conj(p), Gi, p))
    if grid.dealias:
        hess_sq, grad_sq = grid.truncate(hess_sq), grid.truncate(grad_sq)
    return AccelerationTerms(grad_sq, hess_sq, lap, Psi)


def geodesic_rhs(P: KahlerPotential, psi: np.ndarray, params: MetricParams,
                 mode: str = CORRECTED, terms: AccelerationTerms | None = None) -> np.ndarray:
    """Right-hand side ``R`` of the acceleration equation."""
    t = terms or acceleration_terms(P, psi)
    a, b, g = params.alpha, params.beta, params.gamma
    lap_sq = P.grid.product(t.lap, t.lap)
    if mode == CORRECTED:
        R = a * t.grad_sq - 0.5 * b * t.hess_sq + 0.5 * b * lap_sq
        if g:
            R = R + g * laplacian(P, t.hess_sq - 0.5 * lap_sq)
    elif mode == PRINTED:
        R = a * t.grad_sq + 0.5 * b * t.hess_sq + 0.5 * b * lap_sq
        if g:
            R = R - g * laplacian(P, t.hess_sq - 0.5 * lap_sq)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return R


def tangency_target(P: KahlerPotential, terms: AccelerationTerms) -> float:
    """Value of ``int psi' dmu`` that keeps ``int psi dmu`` constant."""
    return P.integrate(terms.grad_sq)


def acceleration(P: KahlerPotential, psi: np.ndarray, params: MetricParams,
                 mode: str = CORRECTED, tol: float = GEODESIC_TOL):
    """Return ``(psi_dot, dropped_mass)`` for the geodesic through ``(P, psi)``."""
    if not params.well_posed:
        raise IllPosedParams("the Cauchy problem needs beta > 0 or gamma > 0")
    terms = acceleration_terms(P, psi)
    R = geodesic_rhs(P, psi, params, mode, terms)
    psi_dot, m = combination_solve(P, R, params, Tangency(tangency_target(P, terms)), tol=tol)
    return psi_dot, m


# ---- trajectories -------------------------------------------------------------------
@dataclass
class GeodesicState:
    t: float
    P: KahlerPotential
    psi: np.ndarray

    @property
    def phi(self):
        return self.P.phi


DIAGNOSTIC_COLUMNS = ("t", "speed_sq", "aubin", "min_eigenvalue", "dropped_mass",
                      "hessian_bound", "tangency", "aubin_shift", "tangency_shift")


@dataclass
class Trajectory:
    params: MetricParams
    mode: str
    integrator: str
    dt: float
    background: Background
    delta_floor: float
    times: list = field(default_factory=list)
    phis: list = field(default_factory=list)
    psis: list = field(default_factory=list)
    accels: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def potential(self, k: int) -> KahlerPotential:
        return KahlerPotential(self.phis[k], self.background, self.delta_floor)

    def state(self, k: int) -> GeodesicState:
        return GeodesicState(self.times[k], self.potential(k), self.psis[k])

    @property
    def final(self) -> GeodesicState:
        return self.state(-1)

    def column(self, name: str) -> np.ndarray:
        return np.array([d[name] for d in self.diagnostics])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DIAGNOSTIC_COLUMNS)
            for d in self.diagnostics:
                w.writerow([repr(float(d[c])) for c in DIAGNOSTIC_COLUMNS])

    def save_snapshots(self, path, stride: int = 1) -> None:
        idx = list(range(0, len(self.times), max(1, stride)))
        np.savez(path, t=np.array([self.times[i] for i in idx]),
                 phi=np.array([self.phis[i] for i in idx]),
                 psi=np.array([self.psis[i] for i in idx]))


class _Stepper:
    """Shared machinery: stage evaluation with positivity checks."""

    def __init__(self, params, mode, background, delta_floor, tol):
        self.params = params
        self.mode = mode
        self.background = background
        self.delta_floor = delta_floor
        self.tol = tol

    def potential(self, phi, t):
        try:
            return KahlerPotential(phi, self.background, self.delta_floor)
        except NotKahler as exc:
            raise PositivityLoss(t, exc.min_eigenvalue) from exc

    def accel(self, phi, psi, t):
        P = self.potential(phi, t)
        a, m = acceleration(P, psi, self.params, self.mode, self.tol)
        return P, a, m


def _rk4_step(st: _Stepper, phi, psi, a0, t, dt):
    k1p, k1v = psi, a0
    _, k2v, _ = st.accel(phi + 0.5 * dt * k1p, psi + 0.5 * dt * k1v, t + 0.5 * dt)
    k2p = psi + 0.5 * dt * k1v
    _, k3v, _ = st.accel(phi + 0.5 * dt * k2p, psi + 0.5 * dt * k2v, t + 0.5 * dt)
    k3p = psi + 0.5 * dt * k2v
    _, k4v, _ = st.accel(phi + dt * k3p, psi + dt * k3v, t + dt)
    k4p = psi + dt * k3v
    phi1 = phi + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    psi1 = psi + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return phi1, psi1


# three-point Gauss-Legendre collocation used by the Picard window iteration
_GL_C = np.array([0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10])
_GL_A = np.array([
    [5 / 36, 2 / 9 - math.sqrt(15) / 15, 5 / 36 - math.sqrt(15) / 30],
    [5 / 36 + math.sqrt(15) / 24, 2 / 9, 5 / 36 - math.sqrt(15) / 24],
    [5 / 36 + math.sqrt(15) / 30, 2 / 9 + math.sqrt(15) / 15, 5 / 36],
])
_GL_B = np.array([5 / 18, 4 / 9, 5 / 18])


def _picard_step(st: _Stepper, phi, psi, a0, t, dt, tol=1e-10, max_iter=50):
    """Fixed point of ``(phi, psi) -> (phi0 + int psi, psi0 + int a)`` on one window.

    The integrals are taken over the Gauss-Legendre interpolant on the window.
    """
    s = len(_GL_C)
    stage_psi = [psi + _GL_C[i] * dt * a0 for i in range(s)]
    stage_phi = [phi + _GL_C[i] * dt * psi for i in range(s)]
    stage_a = [a0] * s
    for it in range(max_iter):
        stage_a = [st.accel(stage_phi[i], stage_psi[i], t + _GL_C[i] * dt)[1] for i in range(s)]
        new_psi = [psi + dt * sum(_GL_A[i, j] * stage_a[j] for j in range(s)) for i in range(s)]
        new_phi = [phi + dt * sum(_GL_A[i, j] * stage_psi[j] for j in range(s)) for i in range(s)]
        diff = max(max(np.max(np.abs(new_psi[i] - stage_psi[i])),
                       np.max(np.abs(new_phi[i] - stage_phi[i]))) for i in range(s))
        stage_psi, stage_phi = new_psi, new_phi
        if diff <= tol:
            break
    else:
        log.warning("picard window at t=%.4g stopped after %d iterations (diff %.2e)",
                    t, max_iter, diff)
    stage_a = [st.accel(stage_phi[i], stage_psi[i], t + _GL_C[i] * dt)[1] for i in range(s)]
    phi1 = phi + dt * sum(_GL_B[j] * stage_psi[j] for j in range(s))
    psi1 = psi + dt * sum(_GL_B[j] * stage_a[j] for j in range(s))
    return phi1, psi1


def _record(traj, st, P, psi, a, m, t, shifts):
    traj.times.append(float(t))
    traj.phis.append(P.phi)
    traj.psis.append(psi)
    traj.accels.append(a)
    traj.diagnostics.append({
        "t": float(t),
        "speed_sq": inner_product(P, psi, psi, st.params),
        "aubin": aubin_functional(P),
        "min_eigenvalue": P.min_eigenvalue,
        "dropped_mass": float(m),
        "hessian_bound": hessian_bound(P, psi),
        "tangency": P.integrate(psi),
        "aubin_shift": shifts[0],
        "tangency_shift": shifts[1],
    })


def _renormalize(st: _Stepper, phi, psi, t):
    P = st.potential(phi, t)
    c = aubin_functional(P) / P.volume
    P = P.shifted(-c)
    d = P.integrate(psi) / P.volume
    return P, psi - d, (c, d)


def integrate_geodesic(P0: KahlerPotential, psi0: np.ndarray, params: MetricParams,
                       dt: float = 1e-3, T: float = 0.1, integrator: str = "rk4",
                       mode: str = CORRECTED, renormalize: bool = True,
                       tol: float = GEODESIC_TOL) -> Trajectory:
    """Integrate the geodesic with ``phi(0) = P0.phi`` and ``phi'(0) = psi0``.

    Each accepted state is shifted so the normalization functional vanishes and
    ``psi`` is projected onto the tangent space; the shifts are recorded.
    """
    if dt <= 0 or T < dt * (1 - 1e-12):
        raise ValueError("need dt > 0 and T >= dt")
    if not params.well_posed:
        raise IllPosedParams("the Cauchy problem needs beta > 0 or gamma > 0")
    if integrator not in ("rk4", "picard"):
        raise ValueError(f"unknown integrator {integrator!r}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        n_steps = int(math.ceil(T / dt))
        dt = T / n_steps
    st = _Stepper(params, mode, P0.background, P0.delta_floor, tol)
    traj = Trajectory(params, mode, integrator, dt, P0.background, P0.delta_floor)
    if renormalize:
        P, psi, shifts = _renormalize(st, P0.phi, psi0, 0.0)
    else:
        P, psi, shifts = P0, psi0, (0.0, 0.0)
    a, m = acceleration(P, psi, params, mode, tol)
    _record(traj, st, P, psi, a, m, 0.0, shifts)
    step = _rk4_step if integrator == "rk4" else _picard_step
    for k in range(n_steps):
        t = k * dt
        phi1, psi1 = step(st, P.phi, psi, a, t, dt)
        t1 = (k + 1) * dt
        if renormalize:
            P, psi, shifts = _renormalize(st, phi1, psi1, t1)
        else:
            P, psi, shifts = st.potential(phi1, t1), psi1, (0.0, 0.0)
        a, m = acceleration(P, psi, params, mode, tol)
        _record(traj, st, P, psi, a, m, t1, shifts)
    return traj


def exp_map(P0: KahlerPotential, psi0: np.ndarray, params: MetricParams, t: float,
            dt: float = 1e-3, **kw) -> KahlerPotential:
    """Endpoint at time ``t`` of the geodesic with initial velocity ``psi0``."""
    if t == 0:
        return P0
    if t < 0:
        psi0, t = -psi0, -t
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    return integrate_geodesic(P0, psi0, params, t / n, t, **kw).final.P


# ---- sphere model of the Calabi metric ------------------------------------------------
def _sphere_data(u0, v0, background):
    bg = as_background(background)
    F0 = 2.0 * np.exp(0.5 * u0)
    W = v0 * np.exp(0.5 * u0)
    normW = math.sqrt(max(integrate(bg.grid, W * W, bg.density), 0.0))
    c = normW / (2.0 * math.sqrt(bg.volume))
    return bg, F0, W, c


def calabi_exact_geodesic(u0: np.ndarray, v0: np.ndarray, t: float, background) -> np.ndarray:
    """Conformal factor ``u(t)`` along the Calabi geodesic from ``u0`` with ``u'(0) = v0``.

    Uses the isometry ``u -> 2 exp(u/2)`` onto a sphere of radius ``2 sqrt(vol)``.
    """
    bg, F0, W, c = _sphere_data(u0, v0, background)
    if c == 0:
        return np.array(u0, dtype=float)
    F = math.cos(c * t) * F0 + math.sin(c * t) * W / c
    if np.min(F) <= 0:
        raise LeftPositiveCone(f"sphere geodesic leaves the positive cone at t={t:.6g}")
    return 2.0 * np.log(0.5 * F)


def calabi_exact_velocity(u0, v0, t, background) -> np.ndarray:
    bg, F0, W, c = _sphere_data(u0, v0, background)
    if c == 0:
        return np.array(v0, dtype=float)
    F = math.cos(c * t) * F0 + math.sin(c * t) * W / c
    dF = -c * math.sin(c * t) * F0 + math.cos(c * t) * W
    return 2.0 * dF / F


def calabi_sphere_residual(u0, v0, t, background, h: float = 1e-3) -> float:
    """Max residual of ``u'' + (u')^2/2 + g_C/(2 vol)`` using analytic derivatives."""
    bg, F0, W, c = _sphere_data(u0, v0, background)
    F = math.cos(c * t) * F0 + math.sin(c * t) * W / c
    dF = -c * math.sin(c * t) * F0 + math.cos(c * t) * W
    d2F = -c * c * F
    du = 2 * dF / F
    d2u = 2 * d2F / F - 2 * (dF / F) ** 2
    u = 2.0 * np.log(0.5 * F)
    speed = integrate(bg.grid, du * du * np.exp(u), bg.density)
    return float(np.max(np.abs(d2u + 0.5 * du * du + speed / (2 * bg.volume))))


def calabi_exact_potential(P0: KahlerPotential, psi0: np.ndarray, t: float) -> KahlerPotential:
    """Normalized potential on the Calabi geodesic at time ``t`` via the Monge-Ampere map."""
    u0 = ma_forward(P0)
    v0 = laplacian(P0, psi0)
    u = calabi_exact_geodesic(u0, v0, t, P0.background)
    return ma_inverse(u, P0.background, delta_floor=P0.delta_floor)


def calabi_distance(u0: np.ndarray, u1: np.ndarray, background) -> float:
    bg = as_background(background)
    F0 = 2.0 * np.exp(0.5 * u0)
    F1 = 2.0 * np.exp(0.5 * u1)
    cosang = integrate(bg.grid, F0 * F1, bg.density) / (4.0 * bg.volume)
    return 2.0 * math.sqrt(bg.volume) * math.acos(min(1.0, max(-1.0, cosang)))


# ---- energy ------------------------------------------------------------------------------
def energy_density(P: KahlerPotential, psi: np.ndarray, beta: float) -> np.ndarray:
    """``(psi^2 + beta |d psi|^2_phi) * rho``, density against the flat volume."""
    return (psi * psi + beta * gradient_pairing(P, psi, psi)) * P.density


def energy(P: KahlerPotential, psi: np.ndarray, beta: float) -> float:
    return integrate(P.grid, energy_density(P, psi, beta))


def energy_rate(P: KahlerPotential, psi: np.ndarray, beta: float, mode: str = CORRECTED) -> float:
    """Predicted ``dE/dt`` along a (1, beta, 0) geodesic, assembled term by term."""
    grid = P.grid
    Gi = P.inverse_metric
    Psi = complex_hessian(grid, psi)
    p = complex_gradient(grid, psi)
    lap = laplacian_from_hessian(P, Psi)
    h = hessian_pairing(P, Psi, Psi)
    # psi^{i jbar} psi_i psi_jbar with indices raised by g_phi
    mixed = np.real(np.einsum("...k,...kj,...jl,...lm,...m->...", np.conj(p), Gi, Psi, Gi, p))
    sign = -1.0 if mode == CORRECTED else 1.0
    e = psi * psi + beta * gradient_pairing(P, psi, psi)
    return (-P.integrate(psi * psi * lap + beta * mixed)
            + beta * P.integrate(psi * (sign * h + lap * lap))
            + P.integrate(e * lap))


def energy_identity_residual(traj: Trajectory) -> np.ndarray:
    """Centered-difference ``dE/dt`` minus the predicted rate at interior steps."""
    a, b, g = traj.params.as_tuple()
    if a != 1.0 or g != 0.0 or b <= 0:
        raise WrongParams("energy identity applies to params (1, beta, 0) with beta > 0")
    E = np.array([energy(traj.potential(k), traj.psis[k], b) for k in range(len(traj))])
    out = np.zeros(len(traj))
    for k in range(1, len(traj) - 1):
        dE = (E[k + 1] - E[k - 1]) / (traj.times[k + 1] - traj.times[k - 1])
        out[k] = dE - energy_rate(traj.potential(k), traj.psis[k], b, traj.mode)
    return out[1:-1] if len(traj) > 2 else out[:0]
