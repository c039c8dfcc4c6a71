"""Kahler potentials on the torus and the pointwise geometry they induce.

A potential ``phi`` defines the metric ``g_phi = g_bg + phi_{j kbar}`` where
``g_bg`` is the background metric: the flat ``delta/2`` or, optionally,
``delta/2 + (psi0)_{j kbar}`` for a configured background potential ``psi0``.

Densities are always measured against the flat volume form, so
``integrate(grid, f, P.density)`` is the integral of ``f`` against the
volume form of ``g_phi``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import NotKahler, Unsupported
from .spectral import Grid, complex_gradient, complex_hessian, integrate

DEFAULT_DELTA_FLOOR = 1e-6


# ---- small batched matrix helpers ------------------------------------------
def _det(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 1:
        return G[..., 0, 0]
    return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]


def _inv(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 1:
        return 1.0 / G
    d = _det(G)
    out = np.empty_like(G)
    out[..., 0, 0] = G[..., 1, 1] / d
    out[..., 1, 1] = G[..., 0, 0] / d
    out[..., 0, 1] = -G[..., 0, 1] / d
    out[..., 1, 0] = -G[..., 1, 0] / d
    return out


def trace_product(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pointwise ``tr(A B)``."""
    return np.einsum("...jk,...kj->...", A, B)


def matmul(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


# ---- background -------------------------------------------------------------
class Background:
    """Reference Kahler form ``omega_0 + i dd^c psi0`` on a grid.

    ``psi0 = None`` selects the flat metric ``g0 = delta/2``.
    """

    def __init__(self, grid: Grid, psi0: np.ndarray | None = None):
        self.grid = grid
        n = grid.n_complex
        flat = np.zeros(grid.shape + (n, n), dtype=complex)
        for j in range(n):
            flat[..., j, j] = 0.5
        self.is_flat = psi0 is None or not np.any(psi0)
        self.psi0 = grid.zeros() if psi0 is None else np.asarray(psi0, dtype=float)
        self.metric = flat if self.is_flat else flat + complex_hessian(grid, self.psi0)
        self.density = np.real(_det(2.0 * self.metric))
        if np.min(self.density) <= 0:
            raise NotKahler(float(np.min(self.density)))
        self.volume = grid.volume

    @classmethod
    def flat(cls, grid: Grid) -> "Background":
        return cls(grid, None)

    def __repr__(self):
        return f"Background({self.grid!r}, flat={self.is_flat})"


def as_background(obj) -> Background:
    if isinstance(obj, Background):
        return obj
    if isinstance(obj, Grid):
        return Background.flat(obj)
    raise TypeError("expected Grid or Background")


# ---- potentials -------------------------------------------------------------
class KahlerPotential:
    """A potential with its metric, inverse metric, density and margin cached.

    Treat instances as immutable.
    """

    def __init__(self, phi: np.ndarray, background, delta_floor: float = DEFAULT_DELTA_FLOOR,
                 _hessian: np.ndarray | None = None):
        bg = as_background(background)
        grid = bg.grid
        phi = np.asarray(phi, dtype=float)
        if phi.shape != grid.shape:
            raise ValueError(f"phi has shape {phi.shape}, grid expects {grid.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi has non-finite values")
        self.grid = grid
        self.background = bg
        self.delta_floor = float(delta_floor)
        self.phi = phi
        self.hessian = complex_hessian(grid, phi) if _hessian is None else _hessian
        self.metric = bg.metric + self.hessian
        self.inverse_metric = _inv(self.metric)
        self.density = np.real(_det(2.0 * self.metric))
        if grid.n_complex == 1:
            eig = 2.0 * self.metric[..., 0, 0].real
        else:
            eig = np.linalg.eigvalsh(2.0 * self.metric)[..., 0]
        self.min_eigenvalue = float(np.min(eig))
        if self.min_eigenvalue < self.delta_floor:
            raise NotKahler(self.min_eigenvalue, self.delta_floor)

    # convenience wrappers
    def shifted(self, c: float) -> "KahlerPotential":
        """The potential ``phi + c``; the Hessian cache is reused."""
        return KahlerPotential(self.phi + c, self.background, self.delta_floor,
                               _hessian=self.hessian)

    def integrate(self, f: np.ndarray) -> float:
        """Integral of ``f`` against the volume form of ``g_phi``."""
        return integrate(self.grid, f, self.density)

    @property
    def volume(self) -> float:
        return self.background.volume

    def laplacian(self, f):
        return laplacian(self, f)

    def __repr__(self):
        return f"KahlerPotential({self.grid!r}, min_eigenvalue={self.min_eigenvalue:.4g})"


def build_potential(phi: np.ndarray, background, delta_floor: float = DEFAULT_DELTA_FLOOR
                    ) -> KahlerPotential:
    """Construct a potential, raising ``NotKahler`` below the positivity floor."""
    return KahlerPotential(phi, background, delta_floor)


def flat_potential(background) -> KahlerPotential:
    bg = as_background(background)
    return KahlerPotential(bg.grid.zeros(), bg)


@dataclass(frozen=True)
class TangentVector:
    """A function paired with the potential it is tangent at."""

    psi: np.ndarray
    base: KahlerPotential

    def defect(self) -> float:
        return self.base.integrate(self.psi)


def project_tangent(P: KahlerPotential, psi: np.ndarray) -> np.ndarray:
    """Subtract the constant that makes ``psi`` have zero ``mu_phi``-mean."""
    return psi - P.integrate(psi) / P.volume


@dataclass(frozen=True)
class MetricParams:
    """Weights of the combination metric ``alpha*L2 + beta*gradient + gamma*Calabi``."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError("metric weights must be nonnegative and not all zero")

    @property
    def well_posed(self) -> bool:
        return self.beta > 0 or self.gamma > 0

    @classmethod
    def mabuchi(cls):
        return cls(1.0, 0.0, 0.0)

    @classmethod
    def gradient(cls):
        return cls(0.0, 1.0, 0.0)

    @classmethod
    def calabi(cls):
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def sum_metric(cls):
        return cls(0.0, 1.0, 1.0)

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


# ---- pointwise operators ------------------------------------------------------
def laplacian(P: KahlerPotential, f: np.ndarray) -> np.ndarray:
    """``Delta_phi f = g^{j kbar} f_{j kbar}``."""
    return np.real(trace_product(P.inverse_metric, complex_hessian(P.grid, f)))


def laplacian_from_hessian(P: KahlerPotential, F: np.ndarray) -> np.ndarray:
    return np.real(trace_product(P.inverse_metric, F))


def hermitian_pairing(P: KahlerPotential, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``(i dd^c f, i dd^c h)_phi = tr(G^{-1} F G^{-1} H)`` pointwise."""
    Gi = P.inverse_metric
    F = complex_hessian(P.grid, f)
    H = F if h is f else complex_hessian(P.grid, h)
    return np.real(trace_product(Gi @ F, Gi @ H))


def hessian_pairing(P: KahlerPotential, F: np.ndarray, H: np.ndarray) -> np.ndarray:
    Gi = P.inverse_metric
    return np.real(trace_product(Gi @ F, Gi @ H))


def complex_pairing(P: KahlerPotential, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``(df, dbar h)_phi = g^{j kbar} f_j conj(h_k)`` (complex valued)."""
    p = complex_gradient(P.grid, f)
    q = p if h is f else complex_gradient(P.grid, h)
    return np.einsum("...k,...kj,...j->...", np.conj(q), P.inverse_metric, p)


def gradient_pairing(P: KahlerPotential, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Real pairing ``Re (df, dbar h)_phi``; equals ``|df|^2_phi`` when f = h.

    The full real-gradient pairing ``(df, dh)`` is twice this.
    """
    return np.real(complex_pairing(P, f, h))


def real_gradient_pairing(P: KahlerPotential, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    return 2.0 * gradient_pairing(P, f, h)


def hessian_bound(P: KahlerPotential, psi: np.ndarray) -> float:
    """Largest |eigenvalue| of ``psi_{j kbar}`` measured against ``g_phi``."""
    Psi = complex_hessian(P.grid, psi)
    if P.grid.n_complex == 1:
        ev = np.abs(np.real(Psi[..., 0, 0] * P.inverse_metric[..., 0, 0]))
        return float(np.max(ev))
    L = np.linalg.cholesky(P.metric)
    Li = np.linalg.inv(L)
    M = Li @ Psi @ np.conj(np.swapaxes(Li, -1, -2))
    return float(np.max(np.abs(np.linalg.eigvalsh(M))))


# ---- normalization functional -------------------------------------------------
def aubin_functional(P: KahlerPotential) -> float:
    """Normalization functional whose first variation is ``int psi dmu_phi``."""
    grid, bg = P.grid, P.background
    n = grid.n_complex
    if n > 2:
        raise Unsupported("aubin_functional is implemented for n <= 2")
    p = complex_gradient(grid, P.phi)
    bg_inv = _inv(bg.metric)
    grad_bg = np.real(np.einsum("...k,...kj,...j->...", np.conj(p), bg_inv, p))
    linear = integrate(grid, P.phi, bg.density)
    if n == 1:
        return linear - 0.5 * integrate(grid, grad_bg, bg.density)
    grad_phi = np.real(np.einsum("...k,...kj,...j->...", np.conj(p), P.inverse_metric, p))
    return (linear - integrate(grid, grad_phi, P.density) / 3.0
            - 2.0 * integrate(grid, grad_bg, bg.density) / 3.0)


def normalize_potential(P: KahlerPotential) -> KahlerPotential:
    """Shift ``phi`` by the constant that zeroes the normalization functional."""
    c = aubin_functional(P) / P.volume
    Q = P.shifted(-c)
    # one Newton correction absorbs quadrature round-off
    c2 = aubin_functional(Q) / P.volume
    return Q.shifted(-c2) if c2 != 0.0 else Q


# ---- inner products -----------------------------------------------------------
def inner_product(P: KahlerPotential, psi1: np.ndarray, psi2: np.ndarray,
                  params: MetricParams) -> float:
    """Combination inner product.

    ``alpha * int psi1 psi2 + beta * int Re(d psi1, dbar psi2) + gamma * int Delta psi1 Delta psi2``,
    all integrals against ``mu_phi``.
    """
    total = 0.0
    if params.alpha:
        total += params.alpha * P.integrate(psi1 * psi2)
    if params.beta:
        total += params.beta * P.integrate(gradient_pairing(P, psi1, psi2))
    if params.gamma:
        l1 = laplacian(P, psi1)
        l2 = l1 if psi2 is psi1 else laplacian(P, psi2)
        total += params.gamma * P.integrate(l1 * l2)
    return float(total)


def mabuchi_product(P, psi1, psi2):
    return inner_product(P, psi1, psi2, MetricParams.mabuchi())


def gradient_product(P, psi1, psi2):
    return inner_product(P, psi1, psi2, MetricParams.gradient())


def calabi_product(P, psi1, psi2):
    return inner_product(P, psi1, psi2, MetricParams.calabi())


def dirichlet_product(P, psi1, psi2):
    """``int (d psi1, d psi2)_phi dmu_phi``, twice the gradient product."""
    return 2.0 * gradient_product(P, psi1, psi2)


NAMED_PRODUCTS = {
    "mabuchi": mabuchi_product,
    "gradient": gradient_product,
    "calabi": calabi_product,
    "dirichlet": dirichlet_product,
}


def dense_laplacian_matrix(P: KahlerPotential) -> np.ndarray:
    """Assemble Delta_phi as a dense matrix column by column (small grids only)."""
    grid = P.grid
    if grid.size > 4096:
        raise ValueError("dense assembly is for small grids")
    cols = []
    e = np.zeros(grid.size)
    for i in range(grid.size):
        e[:] = 0.0
        e[i] = 1.0
        cols.append(laplacian(P, e.reshape(grid.shape)).ravel())
    return np.array(cols).T


def band_limited_field(grid: Grid, rng: np.random.Generator, max_mode: int = 3,
                       amplitude: float = 1.0, decay: float = 1.0) -> np.ndarray:
    """Random real trigonometric polynomial with frequencies ``|m_a| <= max_mode``."""
    out = grid.zeros()
    X = grid.coords
    for m in itertools.product(range(-max_mode, max_mode + 1), repeat=grid.ndim):
        if not any(m):
            continue
        # keep one representative of each +/- pair
        first = next(v for v in m if v != 0)
        if first < 0:
            continue
        phase = sum(2 * np.pi * mi * xi for mi, xi in zip(m, X))
        size = 1.0 / (1.0 + sum(mi * mi for mi in m)) ** decay
        a, b = rng.standard_normal(2)
        out = out + size * (a * np.cos(phase) + b * np.sin(phase))
    peak = np.max(np.abs(out))
    return amplitude * out / peak if peak > 0 else out


def safe_potential_scale(grid: Grid, phi: np.ndarray, margin: float = 0.5) -> float:
    """Largest factor s with ``s*phi`` keeping flat-relative eigenvalues above ``margin``."""
    H = complex_hessian(grid, phi)
    if grid.n_complex == 1:
        lo = float(np.min(2.0 * H[..., 0, 0].real))
    else:
        lo = float(np.min(np.linalg.eigvalsh(2.0 * H)))
    if lo >= 0:
        return np.inf
    return (1.0 - margin) / (-lo)
