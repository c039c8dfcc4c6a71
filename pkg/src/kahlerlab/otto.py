"""Otto geometry on volume forms and the gradient flow of the K-energy.

Densities ``rho`` are measured against the background volume form, so
``rho = omega_phi^n / omega_bg^n`` and the mass is ``int rho * rho_bg dV``.
Divergence and gradient are taken for the real Riemannian metric of the
background; in real coordinates its matrix is ``2 [[A, B], [-B, A]]`` for
``g_bg = A + iB``, and its volume density is ``rho_bg``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import IncompatibleSource, NoConvergence, NotKahler, PositivityLoss, ShockDetected
from .geometry import Background, KahlerPotential, as_background, laplacian, laplacian_from_hessian
from .solvers import ZERO_MEAN, ma_inverse, poisson_solve
from .spectral import complex_hessian, gradient, integrate

log = logging.getLogger(__name__)

GAUSS_NODES = 16


# ---- background Riemannian structure -------------------------------------------------------
def real_metric(bg: Background) -> np.ndarray:
    """Real metric matrix of the background in the grid's axis order."""
    n = bg.grid.n_complex
    G = bg.metric
    H = np.empty(bg.grid.shape + (2 * n, 2 * n))
    for j in range(n):
        for k in range(n):
            A, B = G[..., j, k].real, G[..., j, k].imag
            H[..., 2 * j, 2 * k] = 2 * A
            H[..., 2 * j + 1, 2 * k + 1] = 2 * A
            H[..., 2 * j, 2 * k + 1] = 2 * B
            H[..., 2 * j + 1, 2 * k] = -2 * B
    return H


class _RealGeometry:
    def __init__(self, bg: Background):
        self.bg = bg
        self.grid = bg.grid
        self.Hinv = np.linalg.inv(real_metric(bg))
        self.sqrt_det = bg.density

    def flux_divergence(self, coef: np.ndarray, f: np.ndarray) -> np.ndarray:
        """``sum_a d_a(coef * sqrt(det H) * H^{ab} d_b f)``; equals ``rho_bg div(coef grad f)``."""
        grid = self.grid
        d = gradient(grid, f)
        out = grid.zeros()
        w = coef * self.sqrt_det
        for a in range(grid.ndim):
            flux = w * sum(self.Hinv[..., a, b] * d[b] for b in range(grid.ndim))
            out = out + gradient_axis(grid, flux, a)
        return out


def gradient_axis(grid, f, axis):
    F = grid.forward(f)
    return grid.inverse(1j * grid._k_odd[axis] * F)


_GEOM_CACHE: dict = {}


def _geometry(bg: Background) -> _RealGeometry:
    key = id(bg)
    geo = _GEOM_CACHE.get(key)
    if geo is None or geo.bg is not bg:
        geo = _RealGeometry(bg)
        _GEOM_CACHE.clear()
        _GEOM_CACHE[key] = geo
    return geo


def divergence(bg: Background, coef: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``div(coef * grad f)`` for the background Riemannian metric."""
    geo = _geometry(bg)
    return geo.flux_divergence(coef, f) / bg.density


def background_laplacian(bg: Background, f: np.ndarray) -> np.ndarray:
    """``Delta_omega f``: half the Riemannian Laplacian, written in divergence form."""
    return 0.5 * divergence(bg, np.ones(bg.grid.shape), f)


# ---- curvature ----------------------------------------------------------------------------------
def ricci_background(background) -> np.ndarray:
    """``R_{j kbar} = -d_j d_kbar log det g_bg``."""
    bg = as_background(background)
    if bg.is_flat:
        n = bg.grid.n_complex
        return np.zeros(bg.grid.shape + (n, n), dtype=complex)
    return -complex_hessian(bg.grid, np.log(bg.density))


def sbar(P: KahlerPotential) -> float:
    """Average of ``tr_phi Ric(omega_bg)`` against ``mu_phi`` (zero on the torus)."""
    R = ricci_background(P.background)
    return P.integrate(laplacian_from_hessian(P, R)) / P.volume


def scalar_curvature(P: KahlerPotential) -> np.ndarray:
    """``S(phi) = -Delta_phi log det g_phi``."""
    return -laplacian(P, np.log(P.density))


def p_solve(P: KahlerPotential, tol: float = 1e-12) -> np.ndarray:
    """``Delta_phi P = tr_phi Ric(omega_bg) - Sbar`` with zero mu-mean."""
    if P.background.is_flat:
        return P.grid.zeros()
    R = ricci_background(P.background)
    rhs = laplacian_from_hessian(P, R) - sbar(P)
    u, m = poisson_solve(P, rhs, ZERO_MEAN, tol=tol)
    if abs(m) > 1e-8:
        log.warning("p_solve: solvability defect %.3e", m)
    return u


def scalar_potential_f(P: KahlerPotential, tol: float = 1e-12) -> np.ndarray:
    """``f = -log rho + P`` normalized so that ``int e^f dmu_phi = vol``."""
    rho = P.density / P.background.density
    f = -np.log(rho) + p_solve(P, tol)
    f = f - math.log(P.integrate(np.exp(f)) / P.volume)
    return f


# ---- Otto tangent vectors ----------------------------------------------------------------------
def otto_tangent(P: KahlerPotential, v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Solve ``2 v = -div(rho grad psi)`` with ``rho = omega_phi^n/omega_bg^n``.

    The operator is symmetric in divergence form; solved by preconditioned CG.
    """
    bg = P.background
    grid = P.grid
    rho = P.density / bg.density
    mass_v = integrate(grid, v, bg.density)
    if abs(mass_v) > 1e-10 * max(1.0, float(np.max(np.abs(v)))):
        raise IncompatibleSource(f"int v omega^n = {mass_v:.3e} is not zero")
    if not np.any(v):
        return grid.zeros()
    geo = _geometry(bg)
    b = 2.0 * bg.density * v
    b = b - b.mean()
    sym = sum(k ** 2 for k in grid._k_odd) * float(np.mean(rho * bg.density))
    sym = np.broadcast_to(sym, grid.spectral_shape).copy()
    kernel = sym == 0
    sym[kernel] = 1.0

    def matvec(x):
        x = x.reshape(grid.shape)
        return (-geo.flux_divergence(rho, x)).ravel()

    def precond(r):
        R = grid.forward(r.reshape(grid.shape)) / sym
        R[kernel] = 0.0
        return grid.inverse(R).ravel()

    A = LinearOperator((grid.size, grid.size), matvec=matvec, dtype=float)
    M = LinearOperator((grid.size, grid.size), matvec=precond, dtype=float)
    x, info = cg(A, b.ravel(), rtol=tol, atol=0.0, M=M, maxiter=10 * grid.size)
    res = np.linalg.norm(A.matvec(x) - b.ravel()) / np.linalg.norm(b)
    if info != 0 and res > 1e3 * tol:
        raise NoConvergence(res, info, "otto_tangent CG")
    psi = x.reshape(grid.shape)
    return psi - psi.mean()


def otto_velocity(P: KahlerPotential, psi: np.ndarray) -> np.ndarray:
    """``v = -div(rho grad psi) / 2``."""
    rho = P.density / P.background.density
    return -0.5 * divergence(P.background, rho, psi)


@dataclass(frozen=True)
class OttoPairing:
    value: float
    dual_value: float

    @property
    def duality_gap(self) -> float:
        return abs(self.value - self.dual_value)


def otto_inner(P: KahlerPotential, psi1: np.ndarray, psi2: np.ndarray) -> OttoPairing:
    """``int Re(d psi1, dbar psi2)_bg omega_phi^n`` and its dual form ``int psi1 v2 omega^n``."""
    bg = P.background
    grid = P.grid
    from .spectral import complex_gradient

    p = complex_gradient(grid, psi1)
    q = complex_gradient(grid, psi2)
    Gi = np.linalg.inv(bg.metric) if grid.n_complex > 1 else 1.0 / bg.metric
    pair = np.real(np.einsum("...k,...kj,...j->...", np.conj(q), Gi, p))
    value = integrate(grid, pair, P.density)
    dual = integrate(grid, psi1 * otto_velocity(P, psi2), bg.density)
    return OttoPairing(float(value), float(dual))


# ---- Hamilton-Jacobi geodesics --------------------------------------------------------------------
def _hj_rhs(bg: Background, psi: np.ndarray) -> np.ndarray:
    from .spectral import complex_gradient

    p = complex_gradient(bg.grid, psi)
    Gi = 1.0 / bg.metric if bg.grid.n_complex == 1 else np.linalg.inv(bg.metric)
    return -np.real(np.einsum("...k,...kj,...j->...", np.conj(p), Gi, p))


def _spectral_tail(grid, f):
    F = np.abs(grid.forward(f)) ** 2
    N = grid.points_per_axis
    high = np.zeros(grid.spectral_shape, dtype=bool)
    for q in grid._rfreq:
        high = high | (np.abs(q) >= N / 3.0)
    total = F.sum()
    return float(F[high].sum() / total) if total > 0 else 0.0


def hj_step(background, psi: np.ndarray, ds: float, s: float = 0.0,
            gradient_bound: float = 1e3, tail_bound: float = 1e-12) -> np.ndarray:
    """One explicit rk4 step of ``d psi / ds = -|d psi|^2_bg``.

    Raises ``ShockDetected`` when the gradient or the spectral tail exceeds its bound.
    """
    bg = as_background(background)
    grid = bg.grid
    gmax = max(float(np.max(np.abs(d))) for d in gradient(grid, psi))
    if gmax > gradient_bound:
        raise ShockDetected(s, f"gradient {gmax:.3e} above bound")
    tail = _spectral_tail(grid, psi - psi.mean())
    if tail > tail_bound:
        raise ShockDetected(s, f"spectral tail {tail:.3e} above bound")
    k1 = _hj_rhs(bg, psi)
    k2 = _hj_rhs(bg, psi + 0.5 * ds * k1)
    k3 = _hj_rhs(bg, psi + 0.5 * ds * k2)
    k4 = _hj_rhs(bg, psi + ds * k3)
    return psi + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def hj_evolve(background, psi: np.ndarray, s: float, steps: int, **kw) -> np.ndarray:
    ds = s / steps
    for i in range(steps):
        psi = hj_step(background, psi, ds, s=i * ds, **kw)
    return psi


def hopf_lax_1d(psi0, x_eval: np.ndarray, s: float, half_width: float = 0.5) -> np.ndarray:
    """Reference ``min_y psi0(y) + (x - y)^2 / (2 s)`` for ``psi_s + |psi_x|^2 / 2 = 0``.

    ``psi0`` is a callable on the real line.
    """
    from scipy.optimize import minimize_scalar

    out = np.empty_like(np.asarray(x_eval, dtype=float))
    for i, x in enumerate(np.asarray(x_eval, dtype=float)):
        ys = np.linspace(x - half_width, x + half_width, 2001)
        vals = psi0(ys) + (x - ys) ** 2 / (2 * s)
        j = int(np.argmin(vals))
        lo, hi = ys[max(j - 1, 0)], ys[min(j + 1, len(ys) - 1)]
        r = minimize_scalar(lambda y: psi0(y) + (x - y) ** 2 / (2 * s), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-13})
        out[i] = min(r.fun, vals[j])
    return out


# ---- K-energy ----------------------------------------------------------------------------------------
def k_energy(P: KahlerPotential, nodes: int = GAUSS_NODES, path: str = "linear") -> float:
    """``-int_0^1 int phi_t' (S(phi_t) - Sbar) dmu_t dt`` along ``phi_t = t phi`` (or ``t^2 phi``)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = 0.5 * (x + 1.0)
    ws = 0.5 * w
    total = 0.0
    for t, wt in zip(ts, ws):
        if path == "linear":
            scale, dscale = t, 1.0
        elif path == "quadratic":
            scale, dscale = t * t, 2.0 * t
        else:
            raise ValueError(f"unknown path {path!r}")
        Q = KahlerPotential(scale * P.phi, P.background, P.delta_floor,
                            _hessian=scale * P.hessian)
        integrand = dscale * P.phi * (scalar_curvature(Q) - sbar(Q))
        total -= wt * Q.integrate(integrand)
    return float(total)


def entropy(P: KahlerPotential) -> float:
    """``int rho log rho dV`` with ``rho`` relative to the flat form."""
    return integrate(P.grid, P.density * np.log(P.density))


# ---- the flow ----------------------------------------------------------------------------------------
@dataclass
class Density:
    """Positive density relative to the background volume form."""

    rho: np.ndarray
    background: Background

    def __post_init__(self):
        if np.min(self.rho) <= 0:
            raise PositivityLoss(0.0, float(np.min(self.rho)))

    @property
    def mass(self) -> float:
        return integrate(self.background.grid, self.rho, self.background.density)

    def normalized(self) -> "Density":
        return Density(self.rho * self.background.volume / self.mass, self.background)


FLOW_COLUMNS = ("t", "mass", "min_rho", "k_energy", "curvature_gap", "dt")


@dataclass
class FlowTrajectory:
    background: Background
    times: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    monitors: list = field(default_factory=list)

    def column(self, name):
        return np.array([m[name] for m in self.monitors])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FLOW_COLUMNS)
            for m in self.monitors:
                w.writerow([repr(float(m[c])) for c in FLOW_COLUMNS])


class _FlowOperator:
    """Right-hand side for ``sigma = rho * rho_bg`` (density against the flat form)."""

    def __init__(self, bg: Background):
        self.bg = bg
        self.grid = bg.grid
        inv = 1.0 / bg.density
        # stiff part treated exactly: kappa * Delta_0, kappa centred on the range of 1/rho_bg
        self.kappa = 0.5 * (float(inv.min()) + float(inv.max()))
        self.geo = _geometry(bg)

    def potential(self, rho):
        return ma_inverse(np.log(rho), self.bg)

    def nonlinear(self, sigma: np.ndarray) -> np.ndarray:
        bg, grid = self.bg, self.grid
        rho = sigma / bg.density
        # rho_bg * Delta_omega rho in divergence form, minus the exact part
        out = 0.5 * self.geo.flux_divergence(np.ones(grid.shape), rho)
        out = out - self.kappa * grid.inverse(grid.flat_laplacian_symbol * grid.forward(sigma))
        if not bg.is_flat:
            P = self.potential(rho)
            Pt = p_solve(P)
            out = out - 0.5 * self.geo.flux_divergence(rho, Pt)
        return out

    def propagator(self, h):
        sym = np.exp(self.kappa * h * self.grid.flat_laplacian_symbol)
        return lambda f: self.grid.inverse(sym * self.grid.forward(f))


def _lawson_rk4(op: _FlowOperator, sigma, h):
    E_half = op.propagator(0.5 * h)
    E_full = op.propagator(h)
    k1 = h * op.nonlinear(sigma)
    k2 = h * op.nonlinear(E_half(sigma + 0.5 * k1))
    k3 = h * op.nonlinear(E_half(sigma) + 0.5 * k2)
    k4 = h * op.nonlinear(E_full(sigma) + E_half(k3))
    return E_full(sigma) + (E_full(k1) + 2.0 * E_half(k2 + k3) + k4) / 6.0


def heat_flow_exact(grid, rho0: np.ndarray, t: float) -> np.ndarray:
    """``exp(t Delta_0) rho0`` on the flat torus."""
    return grid.inverse(np.exp(t * grid.flat_laplacian_symbol) * grid.forward(rho0))


def integrate_flow(rho0: Density, dt: float = 1e-3, T: float = 0.1,
                   monitor_energy: bool = True, max_rejections: int = 8) -> FlowTrajectory:
    """Integrate ``d rho/dt = Delta_omega rho - div(rho grad P)/2``.

    Lawson (integrating-factor) RK4 with a constant-coefficient heat part
    treated exactly; steps producing a non-positive density are rejected and
    retried with half the step.
    """
    bg = rho0.background
    grid = bg.grid
    op = _FlowOperator(bg)
    traj = FlowTrajectory(bg)
    sigma = rho0.rho * bg.density

    def record(t, sigma, h):
        rho = sigma / bg.density
        mon = {"t": t, "mass": float(np.mean(sigma)) * bg.volume, "min_rho": float(rho.min()),
               "k_energy": float("nan"), "curvature_gap": float("nan"), "dt": h}
        if monitor_energy:
            P = op.potential(rho)
            mon["k_energy"] = k_energy(P)
            mon["curvature_gap"] = float(np.max(np.abs(scalar_curvature(P) - sbar(P))))
        traj.times.append(t)
        traj.rhos.append(rho)
        traj.monitors.append(mon)

    record(0.0, sigma, dt)
    t = 0.0
    n_steps = int(round(T / dt))
    for k in range(n_steps):
        target = (k + 1) * dt
        while t < target - 1e-14:
            h = target - t
            for attempt in range(max_rejections + 1):
                try:
                    new = _lawson_rk4(op, sigma, h)
                    if np.min(new) > 0:
                        break
                except NotKahler:
                    pass
                h *= 0.5
            else:
                raise PositivityLoss(t, float(np.min(new)))
            sigma = new
            t += h
        record(target, sigma, dt)
        t = target
    return traj
