"""Elliptic inversions for ``Delta_phi`` and the Monge-Ampere map.

Every variable-coefficient solve is reduced to ``rho (Delta_phi - s) u = rho f``
with ``s`` possibly complex, preconditioned on the right by the flat symbol
``(Delta_0 - s)^{-1}`` and solved with restarted GMRES.  The discrete
non-divergence operator is not exactly symmetric, which rules out plain CG.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import NoConvergence, NotKahler
from .geometry import (
    KahlerPotential,
    MetricParams,
    as_background,
    laplacian,
    normalize_potential,
)
from .spectral import complex_hessian, flat_inverse_laplacian, flat_shifted_inverse, integrate

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ZeroMean:
    """Fix the additive constant by ``int u dmu_phi = 0``."""

    value: float = 0.0


@dataclass(frozen=True)
class Tangency:
    """Fix the additive constant by ``int u dmu_phi = value``."""

    value: float


ZERO_MEAN = ZeroMean()


def _apply_policy(P: KahlerPotential, u: np.ndarray, policy) -> np.ndarray:
    if policy is None:
        return u
    target = policy.value
    return u + (target - P.integrate(u)) / P.volume


def _iteration_cap(P: KahlerPotential) -> int:
    return 10 * P.grid.size


def _shifted_core(P: KahlerPotential, f: np.ndarray, shift: complex, tol: float,
                  maxiter: int | None) -> np.ndarray:
    """Solve ``(Delta_phi - shift) u = f`` (for shift 0: f must have zero mu-mean)."""
    grid = P.grid
    rho = P.density
    shape = grid.shape
    size = grid.size
    complex_mode = np.iscomplexobj(f) or np.iscomplexobj(shift) and np.imag(shift) != 0
    dtype = complex if complex_mode else float
    if complex_mode:
        shift = complex(shift)
    else:
        shift = float(np.real(shift))
    singular = shift == 0

    def precond(y):
        return flat_shifted_inverse(grid, y, shift)

    def matvec(y):
        y = np.asarray(y).reshape(shape)
        u = precond(y)
        out = rho * (_lap(P, u) - shift * u)
        if singular:
            out = out - np.mean(out) + np.mean(y)
        return out.ravel()

    b = rho * f
    if singular:
        b = b - np.mean(b)
    if np.max(np.abs(b)) == 0:
        return np.zeros(shape, dtype=dtype)
    A = LinearOperator((size, size), matvec=matvec, dtype=dtype)
    cap = maxiter or _iteration_cap(P)
    restart = min(60, size)
    rhs = b.ravel().astype(dtype)
    bnorm = np.linalg.norm(rhs)
    iters = {"n": 0}

    def count(_):
        iters["n"] += 1

    # one restart cycle at a time, so a residual stuck at the roundoff floor
    # stops the iteration instead of running to the cap
    y = np.zeros(size, dtype=dtype)
    res = 1.0
    for _ in range(max(1, cap // restart)):
        y, info = gmres(A, rhs, x0=y, rtol=tol, atol=0.0, restart=restart, maxiter=1,
                        callback=count, callback_type="pr_norm")
        prev, res = res, np.linalg.norm(A.matvec(y) - rhs) / bnorm
        if info == 0 or res <= tol or res > 0.5 * prev:
            break
    if res > 10 * tol:
        raise NoConvergence(res, iters["n"], "shifted Laplacian solve")
    return precond(y.reshape(shape))


def _lap(P: KahlerPotential, u: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(u):
        return laplacian(P, u.real) + 1j * laplacian(P, u.imag)
    return laplacian(P, u)


def poisson_solve(P: KahlerPotential, f: np.ndarray, constant_policy=ZERO_MEAN,
                  tol: float = DEFAULT_TOL, maxiter: int | None = None):
    """Solve ``Delta_phi u = f - m / vol`` where ``m = int f dmu_phi``.

    Returns ``(u, m)``; ``m`` is the dropped solvability defect.
    """
    m = P.integrate(f)
    rhs = f - m / P.volume
    if P.grid.n_complex == 1:
        # rho * Delta_phi = Delta_0 exactly in one complex dimension
        u = flat_inverse_laplacian(P.grid, P.density * rhs)
    else:
        u = _shifted_core(P, rhs, 0.0, tol, maxiter)
    if np.max(np.abs(f)) == 0:
        m = 0.0
    return _apply_policy(P, u, constant_policy), m


def shifted_solve(P: KahlerPotential, f: np.ndarray, shift: complex,
                  tol: float = DEFAULT_TOL, maxiter: int | None = None) -> np.ndarray:
    """Solve ``(Delta_phi - shift) u = f`` for ``shift`` off the spectrum of Delta_phi."""
    if shift == 0:
        raise ValueError("use poisson_solve for shift 0")
    return _shifted_core(P, f, shift, tol, maxiter)


def helmholtz_solve(P: KahlerPotential, f: np.ndarray, tol: float = DEFAULT_TOL,
                    maxiter: int | None = None) -> np.ndarray:
    """Solve ``(Delta_phi - 1) u = f``."""
    return shifted_solve(P, f, 1.0, tol, maxiter)


def apply_combination(P: KahlerPotential, u: np.ndarray, params: MetricParams) -> np.ndarray:
    """``[alpha - beta Delta_phi + gamma Delta_phi^2] u``."""
    out = params.alpha * u
    if params.beta or params.gamma:
        lu = laplacian(P, u)
        out = out - params.beta * lu
        if params.gamma:
            out = out + params.gamma * laplacian(P, lu)
    return out


def combination_solve(P: KahlerPotential, f: np.ndarray, params: MetricParams,
                      constant_policy=ZERO_MEAN, tol: float = DEFAULT_TOL,
                      maxiter: int | None = None):
    """Invert ``alpha - beta Delta_phi + gamma Delta_phi^2``.

    For ``alpha > 0`` the operator is invertible and the policy is ignored.
    For ``alpha == 0`` the ``mu_phi``-mean of ``f`` is projected out and
    returned as the dropped mass; the constant of ``u`` follows the policy.
    """
    a, b, g = params.alpha, params.beta, params.gamma
    kw = dict(tol=tol, maxiter=maxiter)
    if a > 0:
        if g == 0 and b == 0:
            return f / a, 0.0
        if g == 0:
            return shifted_solve(P, -f / b, a / b, **kw), 0.0
        disc = complex(b * b - 4 * a * g)
        r1 = (b + np.sqrt(disc)) / (2 * g)
        r2 = (b - np.sqrt(disc)) / (2 * g)
        if disc.real >= 0 and disc.imag == 0:
            r1, r2 = r1.real, r2.real
        w = shifted_solve(P, f / g, r1, **kw)
        u = shifted_solve(P, w, r2, **kw)
        return np.real(u), 0.0
    # alpha == 0: operator is Delta (gamma Delta - beta)
    w, m = poisson_solve(P, f, ZERO_MEAN, **kw)
    if g == 0:
        u = -w / b
    elif b == 0:
        u, _ = poisson_solve(P, w / g, ZERO_MEAN, **kw)
    else:
        u = shifted_solve(P, w / g, b / g, **kw)
    return _apply_policy(P, u, constant_policy), m


# ---- Monge-Ampere map -------------------------------------------------------------
def ma_forward(P: KahlerPotential) -> np.ndarray:
    """``u = log(omega_phi^n / omega_bg^n)``."""
    return np.log(P.density / P.background.density)


def conformal_mass(background, u: np.ndarray) -> float:
    bg = as_background(background)
    return integrate(bg.grid, np.exp(u), bg.density)


def ma_inverse(u: np.ndarray, background, tol: float = 1e-12, max_newton: int = 40,
               delta_floor: float = 1e-6) -> KahlerPotential:
    """Normalized potential whose volume ratio to the background is ``exp(u)``."""
    bg = as_background(background)
    grid = bg.grid
    mass = conformal_mass(bg, u)
    if abs(mass - bg.volume) > 1e-8:
        log.info("ma_inverse: rescaling exp(u) by %.6g to match the volume", bg.volume / mass)
    u = u - np.log(mass / bg.volume)
    if grid.n_complex == 1:
        # omega_phi density = rho_bg + Delta_0 phi
        phi = flat_inverse_laplacian(grid, bg.density * np.expm1(u))
        P = KahlerPotential(phi, bg, delta_floor)
        return normalize_potential(P)
    P = KahlerPotential(grid.zeros(), bg, delta_floor)
    res = ma_forward(P) - u
    err = np.max(np.abs(res))
    for it in range(max_newton):
        if err <= tol:
            return normalize_potential(P)
        step, _ = poisson_solve(P, -res, ZERO_MEAN, tol=min(1e-12, tol))
        lam = 1.0
        while True:
            try:
                Q = KahlerPotential(P.phi + lam * step, bg, delta_floor)
                new_res = ma_forward(Q) - u
                new_err = np.max(np.abs(new_res))
                if new_err < err or lam < 1e-3:
                    break
            except NotKahler:
                if lam < 1e-3:
                    raise
            lam *= 0.5
        P, res, err = Q, new_res, new_err
    if err > max(tol, 1e-8):
        raise NoConvergence(err, max_newton, "Monge-Ampere Newton")
    return normalize_potential(P)
